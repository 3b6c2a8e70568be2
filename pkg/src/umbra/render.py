"""Ground-truth triplet renderer: preview, object mask, soft shadow map.

Shadow values are area-light visibility fractions estimated with a
stratified jittered grid per ground pixel. Every pixel owns a counter-based
random stream keyed by (seed, pixel index), so frames are bit-identical for
any worker count or tile schedule.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit
from PIL import Image

from umbra.bvh import Bvh, build_bvh, closest_hit, any_hit, RAY_TMIN
from umbra.scene import Camera, LightParams, light_frame

SHADOW_EPS = 1e-4  # offset along the shadow ray against self-intersection
TILE_ROWS = 16

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 2.0 ** -53

_OBJ_ALBEDO = (0.80, 0.55, 0.38)


def resolve_workers(workers=None):
    """Worker count: explicit argument, then UMBRA_THREADS, then cpu count."""
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("UMBRA_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@njit(cache=True, nogil=True, error_model="numpy", inline="always")
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True, error_model="numpy", inline="always")
def _ground_t(oz, dz):
    if dz != 0.0:
        t = -oz / dz
        if t > RAY_TMIN:
            return t
    return np.inf


@njit(cache=True, nogil=True, error_model="numpy")
def _mask_tile(
    node_min, node_max, node_left, node_right, node_start, node_count,
    tri_a, tri_e1, tri_e2, tri_id,
    cpos, cright, cup, cfwd, tha, thv, w, h, r0, r1, out,
):
    for row in range(r0, r1):
        sy = 1.0 - (row + 0.5) / h * 2.0
        for col in range(w):
            sx = (col + 0.5) / w * 2.0 - 1.0
            px = sx * tha
            py = sy * thv
            dx = cfwd[0] + px * cright[0] + py * cup[0]
            dy = cfwd[1] + px * cright[1] + py * cup[1]
            dz = cfwd[2] + px * cright[2] + py * cup[2]
            inv = 1.0 / np.sqrt(dx * dx + dy * dy + dz * dz)
            dx *= inv
            dy *= inv
            dz *= inv
            t, tid = closest_hit(
                node_min, node_max, node_left, node_right, node_start, node_count,
                tri_a, tri_e1, tri_e2, tri_id,
                cpos[0], cpos[1], cpos[2], dx, dy, dz, RAY_TMIN, np.inf,
            )
            tg = _ground_t(cpos[2], dz)
            out[row - r0, col] = 1 if tid >= 0 and t <= tg else 0


@njit(cache=True, nogil=True, error_model="numpy")
def _shadow_tile(
    node_min, node_max, node_left, node_right, node_start, node_count,
    tri_a, tri_e1, tri_e2, tri_id,
    cpos, cright, cup, cfwd, tha, thv,
    lc, lu, lv, size, grid, seed,
    w, h, r0, r1, out,
):
    gridf = np.float64(grid)
    nsamp = gridf * gridf
    for row in range(r0, r1):
        sy = 1.0 - (row + 0.5) / h * 2.0
        for col in range(w):
            sx = (col + 0.5) / w * 2.0 - 1.0
            px = sx * tha
            py = sy * thv
            dx = cfwd[0] + px * cright[0] + py * cup[0]
            dy = cfwd[1] + px * cright[1] + py * cup[1]
            dz = cfwd[2] + px * cright[2] + py * cup[2]
            inv = 1.0 / np.sqrt(dx * dx + dy * dy + dz * dz)
            dx *= inv
            dy *= inv
            dz *= inv
            t, tid = closest_hit(
                node_min, node_max, node_left, node_right, node_start, node_count,
                tri_a, tri_e1, tri_e2, tri_id,
                cpos[0], cpos[1], cpos[2], dx, dy, dz, RAY_TMIN, np.inf,
            )
            tg = _ground_t(cpos[2], dz)
            if not (tg < t):
                out[row - r0, col] = 0.0
                continue
            gx = cpos[0] + tg * dx
            gy = cpos[1] + tg * dy
            gz = cpos[2] + tg * dz
            state = _mix(seed) + np.uint64(row * w + col) * _GOLD
            blocked = 0
            for c in range(grid * grid):
                state = state + _GOLD
                jx = np.float64(_mix(state) >> _S11) * _INV53
                state = state + _GOLD
                jy = np.float64(_mix(state) >> _S11) * _INV53
                i = c // grid
                j = c - i * grid
                fu = (i + jx) / gridf - 0.5
                fv = (j + jy) / gridf - 0.5
                qx = lc[0] + size * (fu * lu[0] + fv * lv[0])
                qy = lc[1] + size * (fu * lu[1] + fv * lv[1])
                qz = lc[2] + size * (fu * lu[2] + fv * lv[2])
                wx = qx - gx
                wy = qy - gy
                wz = qz - gz
                dist = np.sqrt(wx * wx + wy * wy + wz * wz)
                ivd = 1.0 / dist
                ux = wx * ivd
                uy = wy * ivd
                uz = wz * ivd
                if any_hit(
                    node_min, node_max, node_left, node_right, node_start, node_count,
                    tri_a, tri_e1, tri_e2, tri_id,
                    gx + SHADOW_EPS * ux, gy + SHADOW_EPS * uy, gz + SHADOW_EPS * uz,
                    ux, uy, uz, 0.0, dist - SHADOW_EPS,
                ):
                    blocked += 1
            out[row - r0, col] = blocked / nsamp


@njit(cache=True, nogil=True, error_model="numpy")
def _preview_tile(
    node_min, node_max, node_left, node_right, node_start, node_count,
    tri_a, tri_e1, tri_e2, tri_id, normals,
    cpos, cright, cup, cfwd, tha, thv,
    lc, intensity, albedo, shadow, w, h, r0, r1, out,
):
    for row in range(r0, r1):
        sy = 1.0 - (row + 0.5) / h * 2.0
        for col in range(w):
            sx = (col + 0.5) / w * 2.0 - 1.0
            px = sx * tha
            py = sy * thv
            dx = cfwd[0] + px * cright[0] + py * cup[0]
            dy = cfwd[1] + px * cright[1] + py * cup[1]
            dz = cfwd[2] + px * cright[2] + py * cup[2]
            inv = 1.0 / np.sqrt(dx * dx + dy * dy + dz * dz)
            dx *= inv
            dy *= inv
            dz *= inv
            t, tid = closest_hit(
                node_min, node_max, node_left, node_right, node_start, node_count,
                tri_a, tri_e1, tri_e2, tri_id,
                cpos[0], cpos[1], cpos[2], dx, dy, dz, RAY_TMIN, np.inf,
            )
            tg = _ground_t(cpos[2], dz)
            if tid >= 0 and t <= tg:
                hx = cpos[0] + t * dx
                hy = cpos[1] + t * dy
                hz = cpos[2] + t * dz
                lx = lc[0] - hx
                ly = lc[1] - hy
                lz = lc[2] - hz
                ivl = 1.0 / np.sqrt(lx * lx + ly * ly + lz * lz)
                ndl = abs(
                    normals[tid, 0] * lx + normals[tid, 1] * ly + normals[tid, 2] * lz
                ) * ivl
                shade = 0.2 + 0.8 * ndl
                if shade > 1.0:
                    shade = 1.0
                for ch in range(3):
                    out[row - r0, col, ch] = albedo[ch] * shade
            elif tg < np.inf:
                s = intensity * shadow[row, col]
                if s > 1.0:
                    s = 1.0
                g = 1.0 - s
                for ch in range(3):
                    out[row - r0, col, ch] = g
            else:
                for ch in range(3):
                    out[row - r0, col, ch] = 1.0


def _camera_pack(camera: Camera):
    pos, right, up, fwd = camera.basis()
    thv = camera.tan_half_fov
    return pos, right, up, fwd, thv * camera.aspect, thv


def _run_tiles(h, workers, task):
    """Run task(r0, r1) over row tiles; results must not depend on order."""
    tiles = [(r0, min(r0 + TILE_ROWS, h)) for r0 in range(0, h, TILE_ROWS)]
    n = resolve_workers(workers)
    if n == 1 or len(tiles) == 1:
        for r0, r1 in tiles:
            task(r0, r1)
        return
    with ThreadPoolExecutor(max_workers=n) as pool:
        list(pool.map(lambda tile: task(*tile), tiles))


def _face_normals(bvh: Bvh):
    n = np.cross(bvh.tri_e1, bvh.tri_e2)
    length = np.linalg.norm(n, axis=1, keepdims=True)
    length[length == 0] = 1.0
    n = n / length
    out = np.zeros_like(n)
    out[bvh.tri_id] = n  # back to original triangle order
    return out


def render_mask(mesh, bvh, camera: Camera, workers=None):
    """Binary object mask: 1 where the nearest primary hit is the mesh."""
    w, h = camera.image_size
    out = np.zeros((h, w), dtype=np.uint8)
    if mesh is None or bvh is None or bvh.num_triangles == 0:
        return out
    pos, right, up, fwd, tha, thv = _camera_pack(camera)

    def task(r0, r1):
        buf = np.empty((r1 - r0, w), dtype=np.uint8)
        _mask_tile(
            bvh.node_min, bvh.node_max, bvh.node_left, bvh.node_right,
            bvh.node_start, bvh.node_count,
            bvh.tri_a, bvh.tri_e1, bvh.tri_e2, bvh.tri_id,
            pos, right, up, fwd, tha, thv, w, h, r0, r1, buf,
        )
        out[r0:r1] = buf

    _run_tiles(h, workers, task)
    return out


def render_shadow_map(mesh, bvh, camera: Camera, light: LightParams, grid=16,
                      seed=0, workers=None):
    """Occlusion fraction of the light square per ground-plane pixel.

    Values are multiples of 1/grid^2; pixels whose primary ray does not hit
    the ground first (object, or sky) are 0.
    """
    if grid < 1:
        raise ValueError(f"grid must be >= 1, got {grid}")
    w, h = camera.image_size
    out = np.zeros((h, w), dtype=np.float64)
    if mesh is None or bvh is None or bvh.num_triangles == 0:
        return out
    pos, right, up, fwd, tha, thv = _camera_pack(camera)
    lc, lu, lv = light_frame(light)
    seed_u = np.uint64(int(seed) & ((1 << 64) - 1))

    def task(r0, r1):
        buf = np.empty((r1 - r0, w), dtype=np.float64)
        _shadow_tile(
            bvh.node_min, bvh.node_max, bvh.node_left, bvh.node_right,
            bvh.node_start, bvh.node_count,
            bvh.tri_a, bvh.tri_e1, bvh.tri_e2, bvh.tri_id,
            pos, right, up, fwd, tha, thv,
            lc, lu, lv, float(light.size), grid, seed_u,
            w, h, r0, r1, buf,
        )
        out[r0:r1] = buf

    _run_tiles(h, workers, task)
    return out


def render_preview(mesh, bvh, camera: Camera, light: LightParams, shadow=None,
                   grid=16, seed=0, workers=None):
    """Flat-shaded object over white ground with the shadow multiplied in.

    For human inspection only. Computes its own shadow map unless one is
    passed in.
    """
    w, h = camera.image_size
    if mesh is None or bvh is None or bvh.num_triangles == 0:
        return np.ones((h, w, 3), dtype=np.float64)
    if shadow is None:
        shadow = render_shadow_map(mesh, bvh, camera, light, grid=grid,
                                   seed=seed, workers=workers)
    pos, right, up, fwd, tha, thv = _camera_pack(camera)
    lc, _, _ = light_frame(light)
    normals = _face_normals(bvh)
    albedo = np.array(_OBJ_ALBEDO, dtype=np.float64)
    out = np.empty((h, w, 3), dtype=np.float64)

    def task(r0, r1):
        buf = np.empty((r1 - r0, w, 3), dtype=np.float64)
        _preview_tile(
            bvh.node_min, bvh.node_max, bvh.node_left, bvh.node_right,
            bvh.node_start, bvh.node_count,
            bvh.tri_a, bvh.tri_e1, bvh.tri_e2, bvh.tri_id, normals,
            pos, right, up, fwd, tha, thv,
            lc, float(light.intensity), albedo, shadow, w, h, r0, r1, buf,
        )
        out[r0:r1] = buf

    _run_tiles(h, workers, task)
    return out


@dataclass
class RenderTriplet:
    preview: np.ndarray  # (h, w, 3) float64 in [0, 1]
    mask: np.ndarray     # (h, w) uint8 in {0, 1}
    shadow: np.ndarray   # (h, w) float64 in [0, 1]
    params: LightParams
    mesh_name: str
    seed: int
    grid: int


def render_triplet(mesh, camera: Camera, light: LightParams, grid=16, seed=0,
                   workers=None, bvh=None):
    if bvh is None:
        bvh = build_bvh(mesh)
    mask = render_mask(mesh, bvh, camera, workers=workers)
    shadow = render_shadow_map(mesh, bvh, camera, light, grid=grid, seed=seed,
                               workers=workers)
    preview = render_preview(mesh, bvh, camera, light, shadow=shadow,
                             workers=workers)
    return RenderTriplet(
        preview=preview, mask=mask, shadow=shadow, params=light,
        mesh_name=mesh.name, seed=int(seed), grid=int(grid),
    )


def triplet_paths(root, stem):
    root = Path(root)
    return {
        "preview": root / f"{stem}.preview.png",
        "mask": root / f"{stem}.mask.png",
        "shadow": root / f"{stem}.shadow.png",
        "meta": root / f"{stem}.json",
    }


def write_triplet(root, stem, triplet: RenderTriplet):
    """Write preview (8-bit RGB), mask (8-bit 0/255), shadow (16-bit) PNGs
    plus a sidecar JSON; returns the path map."""
    paths = triplet_paths(root, stem)
    paths["preview"].parent.mkdir(parents=True, exist_ok=True)
    rgb = np.rint(np.clip(triplet.preview, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(rgb, mode="RGB").save(paths["preview"])
    Image.fromarray((triplet.mask * np.uint8(255)), mode="L").save(paths["mask"])
    sh = np.rint(np.clip(triplet.shadow, 0.0, 1.0) * 65535.0).astype(np.uint16)
    Image.fromarray(sh).save(paths["shadow"])
    meta = {
        "grid": triplet.grid,
        "light": json.loads(triplet.params.to_json()),
        "mesh": triplet.mesh_name,
        "seed": triplet.seed,
    }
    paths["meta"].write_text(json.dumps(meta, sort_keys=True) + "\n")
    return paths


def read_triplet(root, stem) -> RenderTriplet:
    paths = triplet_paths(root, stem)
    meta = json.loads(paths["meta"].read_text())
    preview = np.asarray(Image.open(paths["preview"]), dtype=np.float64) / 255.0
    mask = (np.asarray(Image.open(paths["mask"])) > 127).astype(np.uint8)
    shadow = np.asarray(Image.open(paths["shadow"])).astype(np.float64) / 65535.0
    return RenderTriplet(
        preview=preview, mask=mask, shadow=shadow,
        params=LightParams(**meta["light"]),
        mesh_name=meta["mesh"], seed=meta["seed"], grid=meta["grid"],
    )
