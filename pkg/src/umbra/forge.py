"""Dataset generation: procedural meshes, light grids, forged triplets.

Training triplets draw random light parameters, mesh rotations, and camera
dollies from one seeded generator, so a run is reproducible byte for byte.
The three benchmark tracks are pure functions of the mesh list: softness
steps, an azimuth orbit, and a polar sweep.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from umbra.mesh import TriangleMesh, normalize_mesh, rotate_z, settle
from umbra.scene import LightParams, default_camera
from umbra.render import render_triplet, write_triplet

log = logging.getLogger(__name__)

PRIMITIVE_KINDS = ("box", "cylinder", "torus", "cone", "composite")

TRACK_SPLITS = {1: "track1", 2: "track2", 3: "track3"}

MANIFEST_VERSION = 1


# ---------------------------------------------------------------------------
# procedural primitives

def _mesh_from(parts, name):
    verts = []
    tris = []
    offset = 0
    for v, t in parts:
        verts.append(v)
        tris.append(np.asarray(t, dtype=np.int64) + offset)
        offset += len(v)
    return TriangleMesh(np.vstack(verts), np.vstack(tris), name=name)


def _box_part(sx, sy, sz):
    xs = (-sx / 2, sx / 2)
    ys = (-sy / 2, sy / 2)
    zs = (0.0, sz)
    v = np.array([(x, y, z) for z in zs for y in ys for x in xs])
    quads = [
        (0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1),
        (2, 3, 7, 6), (1, 5, 7, 3), (0, 2, 6, 4),
    ]
    t = []
    for q in quads:
        t.append((q[0], q[1], q[2]))
        t.append((q[0], q[2], q[3]))
    return v, t


def _ring(radius, z, segments):
    ang = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
    return np.stack([radius * np.cos(ang), radius * np.sin(ang),
                     np.full(segments, float(z))], axis=1)


def _cylinder_part(radius, height, segments):
    bottom = _ring(radius, 0.0, segments)
    top = _ring(radius, height, segments)
    centers = np.array([(0.0, 0.0, 0.0), (0.0, 0.0, height)])
    v = np.vstack([bottom, top, centers])
    cb, ct = 2 * segments, 2 * segments + 1
    t = []
    for i in range(segments):
        j = (i + 1) % segments
        t.append((i, j, segments + j))
        t.append((i, segments + j, segments + i))
        t.append((cb, j, i))
        t.append((ct, segments + i, segments + j))
    return v, t


def _cone_part(radius, height, segments):
    base = _ring(radius, 0.0, segments)
    v = np.vstack([base, [(0.0, 0.0, height)], [(0.0, 0.0, 0.0)]])
    apex, center = segments, segments + 1
    t = []
    for i in range(segments):
        j = (i + 1) % segments
        t.append((i, j, apex))
        t.append((center, j, i))
    return v, t


def _torus_part(major, minor, major_seg, minor_seg):
    u = np.linspace(0.0, 2.0 * np.pi, major_seg, endpoint=False)
    w = np.linspace(0.0, 2.0 * np.pi, minor_seg, endpoint=False)
    uu, ww = np.meshgrid(u, w, indexing="ij")
    r = major + minor * np.cos(ww)
    v = np.stack([r * np.cos(uu), r * np.sin(uu), minor * np.sin(ww) + minor],
                 axis=-1).reshape(-1, 3)
    t = []
    for i in range(major_seg):
        i2 = (i + 1) % major_seg
        for j in range(minor_seg):
            j2 = (j + 1) % minor_seg
            a = i * minor_seg + j
            b = i2 * minor_seg + j
            c = i2 * minor_seg + j2
            d = i * minor_seg + j2
            t.append((a, b, c))
            t.append((a, c, d))
    return v, t


def make_primitive_mesh(kind, rng) -> TriangleMesh:
    """Randomly proportioned primitive, normalized and settled on z=0."""
    if kind == "box":
        parts = [_box_part(rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5),
                           rng.uniform(0.5, 1.5))]
    elif kind == "cylinder":
        parts = [_cylinder_part(rng.uniform(0.3, 0.8), rng.uniform(0.6, 1.6), 32)]
    elif kind == "cone":
        parts = [_cone_part(rng.uniform(0.4, 0.9), rng.uniform(0.7, 1.6), 32)]
    elif kind == "torus":
        minor = rng.uniform(0.12, 0.3)
        parts = [_torus_part(rng.uniform(0.5, 0.8), minor, 24, 12)]
    elif kind == "composite":
        parts = []
        z = 0.0
        scale = 1.0
        for level in range(int(rng.integers(2, 4))):
            sub = rng.choice(["box", "cylinder", "cone"])
            if sub == "box":
                v, t = _box_part(scale * rng.uniform(0.6, 1.2),
                                 scale * rng.uniform(0.6, 1.2),
                                 scale * rng.uniform(0.3, 0.8))
            elif sub == "cylinder":
                v, t = _cylinder_part(scale * rng.uniform(0.25, 0.5),
                                      scale * rng.uniform(0.3, 0.8), 24)
            else:
                v, t = _cone_part(scale * rng.uniform(0.3, 0.6),
                                  scale * rng.uniform(0.4, 0.9), 24)
            v = v + np.array([0.0, 0.0, z])
            z = v[:, 2].max()
            scale *= 0.7
            parts.append((v, t))
    else:
        raise ValueError(f"unknown primitive kind: {kind!r}")
    mesh = _mesh_from(parts, name=kind)
    return settle(normalize_mesh(mesh, target_extent=2.0))


def make_mesh_corpus(count, rng, kinds=PRIMITIVE_KINDS):
    """`count` primitives cycling through `kinds`, distinct names."""
    out = []
    for i in range(count):
        kind = kinds[i % len(kinds)]
        mesh = make_primitive_mesh(kind, rng)
        out.append(TriangleMesh(mesh.vertices, mesh.triangles,
                                name=f"{kind}-{i:03d}"))
    return out


# ---------------------------------------------------------------------------
# light parameter sampling

def sample_training_params(rng) -> LightParams:
    """Integer-degree draw from the training intervals; intensity fixed at 1.

    The azimuth interval is closed at 360, which aliases 0; both endpoints
    are kept so the draw matches the published interval verbatim.
    """
    theta = int(rng.integers(0, 46))
    phi = int(rng.integers(0, 361))
    size = int(rng.integers(2, 9))
    return LightParams(theta=float(theta), phi=float(phi), size=float(size),
                       intensity=1.0)


def generate_track(track, meshes):
    """Benchmark grid for one track: list of (mesh, LightParams).

    Track 1 steps light size {2,4,8} at a fixed oblique angle; track 2
    orbits azimuth 0..340 in 20-degree steps at fixed softness; track 3
    sweeps the polar angle 5..45 in 5-degree steps.
    """
    if not meshes:
        raise ValueError("generate_track requires at least one mesh")
    if track == 1:
        grid = [(30.0, 0.0, s) for s in (2.0, 4.0, 8.0)]
    elif track == 2:
        grid = [(35.0, float(phi), 2.0) for phi in range(0, 360, 20)]
    elif track == 3:
        grid = [(float(theta), 0.0, 2.0) for theta in range(5, 50, 5)]
    else:
        raise ValueError(f"unknown track id: {track!r}")
    out = []
    for mesh in meshes:
        for theta, phi, size in grid:
            out.append((mesh, LightParams(theta=theta, phi=phi, size=size,
                                          intensity=1.0)))
    return out


def intensity_augment(shadow, intensity):
    """Scale a shadow map by an intensity factor, clamped at full shadow."""
    if intensity <= 0:
        raise ValueError(f"intensity must be > 0, got {intensity}")
    return np.minimum(1.0, float(intensity) * np.asarray(shadow, dtype=np.float64))


# ---------------------------------------------------------------------------
# manifests

@dataclass(frozen=True)
class ManifestEntry:
    id: str
    split: str
    mesh: str
    seed: int
    grid: int
    light: LightParams
    paths: dict  # role -> path relative to the dataset root

    def to_record(self):
        return {
            "grid": self.grid,
            "id": self.id,
            "light": json.loads(self.light.to_json()),
            "mesh": self.mesh,
            "paths": dict(sorted(self.paths.items())),
            "seed": self.seed,
            "split": self.split,
        }

    @classmethod
    def from_record(cls, rec):
        return cls(
            id=rec["id"], split=rec["split"], mesh=rec["mesh"], seed=rec["seed"],
            grid=rec["grid"], light=LightParams(**rec["light"]),
            paths=dict(rec["paths"]),
        )


@dataclass
class DatasetManifest:
    root: Path
    entries: list
    version: int = MANIFEST_VERSION
    failures: list = field(default_factory=list)

    def split(self, tag):
        return [e for e in self.entries if e.split == tag]


def manifest_path(root, name="manifest.jsonl"):
    return Path(root) / name


def write_manifest(manifest: DatasetManifest, path=None):
    """JSON-lines: a version header line, then one entry per line."""
    path = Path(path) if path else manifest_path(manifest.root)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"format": "umbra-dataset", "version": manifest.version},
                        sort_keys=True)]
    lines.extend(json.dumps(e.to_record(), sort_keys=True) for e in manifest.entries)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise ValueError(f"empty manifest: {path}")
    header = json.loads(lines[0])
    if header.get("format") != "umbra-dataset":
        raise ValueError(f"not a dataset manifest: {path}")
    version = header.get("version")
    if version != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {version!r}")
    entries = [ManifestEntry.from_record(json.loads(line)) for line in lines[1:]]
    missing = [
        str(p) for e in entries for p in e.paths.values()
        if not (path.parent / p).exists()
    ]
    if missing:
        raise FileNotFoundError(
            f"manifest references {len(missing)} missing files, first: {missing[0]}"
        )
    return DatasetManifest(root=path.parent, entries=entries, version=version)


# ---------------------------------------------------------------------------
# forging

@dataclass(frozen=True)
class ForgeConfig:
    out_dir: Path
    grid: int = 16
    resolution: tuple = (256, 256)
    workers: int = None
    dolly: tuple = (5.0, 9.0)


def forge_dataset(meshes, count, rng, config: ForgeConfig, split="train"):
    """Render `count` training triplets and write a manifest.

    Each entry draws a mesh, a z-rotation, a camera dolly, and light
    parameters; render failures are collected per entry (the run continues)
    and reported on the returned manifest.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if not meshes:
        raise ValueError("forge_dataset requires at least one mesh")
    root = Path(config.out_dir)
    entries = []
    failures = []
    for i in range(count):
        mesh = meshes[int(rng.integers(len(meshes)))]
        angle = float(rng.uniform(0.0, 360.0))
        dolly = float(rng.uniform(*config.dolly))
        params = sample_training_params(rng)
        seed = int(rng.integers(np.int64(2) ** 62))
        ident = f"{split}-{i:06d}"
        try:
            posed = settle(rotate_z(mesh, angle))
            camera = default_camera(config.resolution, dolly)
            triplet = render_triplet(posed, camera, params, grid=config.grid,
                                     seed=seed, workers=config.workers)
            write_triplet(root / split, ident, triplet)
        except Exception as exc:  # keep forging, report at the end
            log.warning("entry %s failed: %s", ident, exc)
            failures.append({"id": ident, "mesh": mesh.name, "error": str(exc)})
            continue
        entries.append(_entry(ident, split, mesh.name, seed, config.grid, params))
    manifest = DatasetManifest(root=root, entries=entries, failures=failures)
    write_manifest(manifest, manifest_path(root, f"{split}.manifest.jsonl"))
    return manifest


def forge_tracks(meshes, config: ForgeConfig, tracks=(1, 2, 3), seed=0):
    """Render the benchmark tracks with the fixed camera (no dolly).

    `meshes` is either one list shared by every track or a dict keyed by
    track id, so each track can have its own held-out pool.
    """
    root = Path(config.out_dir)
    entries = []
    failures = []
    camera = default_camera(config.resolution, dolly=6.0)
    for track in tracks:
        split = TRACK_SPLITS[track]
        pool = meshes[track] if isinstance(meshes, dict) else meshes
        for k, (mesh, params) in enumerate(generate_track(track, pool)):
            ident = f"{split}-{k:05d}"
            try:
                triplet = render_triplet(mesh, camera, params, grid=config.grid,
                                         seed=seed, workers=config.workers)
                write_triplet(root / split, ident, triplet)
            except Exception as exc:
                log.warning("entry %s failed: %s", ident, exc)
                failures.append({"id": ident, "mesh": mesh.name, "error": str(exc)})
                continue
            entries.append(_entry(ident, split, mesh.name, seed, config.grid, params))
    manifest = DatasetManifest(root=root, entries=entries, failures=failures)
    write_manifest(manifest, manifest_path(root, "tracks.manifest.jsonl"))
    return manifest


def _entry(ident, split, mesh_name, seed, grid, params):
    rel = {
        "preview": f"{split}/{ident}.preview.png",
        "mask": f"{split}/{ident}.mask.png",
        "shadow": f"{split}/{ident}.shadow.png",
        "meta": f"{split}/{ident}.json",
    }
    return ManifestEntry(id=ident, split=split, mesh=mesh_name, seed=seed,
                         grid=grid, light=params, paths=rel)
