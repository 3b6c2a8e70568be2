"""Blend an object cutout and its shadow map onto a target background.

The shadow map is reversed into a transmittance factor: background light is
scaled by (1 - min(1, I*shadow)), then the object is pasted over through its
mask. Object pixels are never touched by shadow or intensity.
"""

from dataclasses import dataclass

import numpy as np
from PIL import Image


@dataclass(frozen=True)
class CompositeInputs:
    object_image: np.ndarray  # (h, w, 3) in [0, 1]
    mask: np.ndarray          # (h, w) binary, 1 = object
    shadow: np.ndarray        # (h, w) in [0, 1]
    background: np.ndarray    # (h, w, 3) in [0, 1]
    intensity: float = 1.0

    def __post_init__(self):
        obj = np.asarray(self.object_image, dtype=np.float64)
        bg = np.asarray(self.background, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=np.float64)
        shadow = np.asarray(self.shadow, dtype=np.float64)
        if obj.ndim != 3 or obj.shape[2] != 3:
            raise ValueError(f"object image must be (h, w, 3), got {obj.shape}")
        hw = obj.shape[:2]
        if bg.shape != obj.shape:
            raise ValueError(f"background {bg.shape} != object {obj.shape}")
        if mask.shape != hw or shadow.shape != hw:
            raise ValueError(
                f"mask {mask.shape} / shadow {shadow.shape} do not match {hw}"
            )
        if self.intensity < 0:
            raise ValueError(f"intensity must be >= 0, got {self.intensity}")
        object.__setattr__(self, "object_image", obj)
        object.__setattr__(self, "background", bg)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "shadow", shadow)


def composite(inputs: CompositeInputs):
    """out = m*object + (1-m)*(background*(1 - min(1, I*shadow))), clamped."""
    m = inputs.mask[:, :, None]
    transmit = 1.0 - np.minimum(1.0, inputs.intensity * inputs.shadow)
    out = m * inputs.object_image + (1.0 - m) * (inputs.background * transmit[:, :, None])
    return np.clip(out, 0.0, 1.0)


def load_rgb(path):
    """8-bit RGB PNG -> float image in [0, 1]."""
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0


def save_rgb(path, image):
    """Float image in [0, 1] -> 8-bit RGB PNG."""
    data = np.rint(np.clip(np.asarray(image), 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path)
