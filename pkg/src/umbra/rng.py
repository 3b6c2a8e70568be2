"""Counter-based random streams for deterministic, schedule-free sampling.

A splitmix64 stream is derived per pixel from (seed, pixel index), so every
pixel draws the same jitter sequence no matter how the frame is tiled or how
many workers render it. This file holds the pure-Python reference; the
renderer kernels inline the same arithmetic on uint64.

Stream definition, pinned:
    state0   = mix64(seed) + index * GOLDEN          (mod 2^64)
    draw k   : state += GOLDEN; out = mix64(state)
    uniform  = (out >> 11) * 2^-53                   (exact in float64)
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(z):
    """Finalizing mix of splitmix64 (Steele et al.)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def stream_state(seed, index):
    """Initial state of the stream keyed by (seed, index)."""
    return (mix64(seed) + (index * GOLDEN)) & MASK64


class PixelStream:
    """Python-side generator matching the renderer's in-kernel streams.

    Exposes the small slice of the numpy Generator API that
    sample_area_light needs, so tests can rebuild a pixel's exact light
    samples outside the compiled path.
    """

    def __init__(self, seed, index):
        self.state = stream_state(seed, index)

    def uniform(self):
        self.state = (self.state + GOLDEN) & MASK64
        return (mix64(self.state) >> 11) * 2.0**-53

    def random(self, shape):
        n = int(np.prod(shape))
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            out[i] = self.uniform()
        return out.reshape(shape)
