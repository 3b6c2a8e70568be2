import math

import numpy as np
import pytest

from umbra.mesh import TriangleMesh, MeshError, parse_obj, normalize_mesh, settle
from umbra.scene import Camera, LightParams, sample_area_light
from umbra.rng import PixelStream
from umbra.bvh import Bvh, build_bvh, closest_hits, any_hit
from umbra.render import (
    RenderTriplet,
    render_mask,
    render_shadow_map,
    render_preview,
    render_triplet,
    write_triplet,
    read_triplet,
    resolve_workers,
    SHADOW_EPS,
)
from tests.test_mesh import CUBE_OBJ


# ---------------------------------------------------------------------------
# independent brute-force oracles (pure python, same pinned arithmetic order)

def _mt(a, e1, e2, o, d):
    px = d[1] * e2[2] - d[2] * e2[1]
    py = d[2] * e2[0] - d[0] * e2[2]
    pz = d[0] * e2[1] - d[1] * e2[0]
    det = e1[0] * px + e1[1] * py + e1[2] * pz
    if abs(det) < 1e-12:
        return None
    inv = 1.0 / det
    tx = o[0] - a[0]
    ty = o[1] - a[1]
    tz = o[2] - a[2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return None
    qx = ty * e1[2] - tz * e1[1]
    qy = tz * e1[0] - tx * e1[2]
    qz = tx * e1[1] - ty * e1[0]
    w = (d[0] * qx + d[1] * qy + d[2] * qz) * inv
    if w < 0.0 or u + w > 1.0:
        return None
    return (e2[0] * qx + e2[1] * qy + e2[2] * qz) * inv


def _tri_edges(mesh, i):
    v, t = mesh.vertices, mesh.triangles
    a = v[t[i, 0]]
    return a, v[t[i, 1]] - a, v[t[i, 2]] - a


def oracle_closest(mesh, o, d, tmin=1e-9):
    best_t, best_id = math.inf, -1
    for i in range(mesh.num_triangles):
        a, e1, e2 = _tri_edges(mesh, i)
        t = _mt(a, e1, e2, o, d)
        if t is not None and t > tmin and (t < best_t or (t == best_t and i < best_id)):
            best_t, best_id = t, i
    return best_t, best_id


def oracle_any(mesh, o, d, tmax):
    for i in range(mesh.num_triangles):
        a, e1, e2 = _tri_edges(mesh, i)
        t = _mt(a, e1, e2, o, d)
        if t is not None and 0.0 < t < tmax:
            return True
    return False


def oracle_ray(camera, row, col):
    pos, right, up, fwd = camera.basis()
    w, h = camera.image_size
    thv = camera.tan_half_fov
    tha = thv * camera.aspect
    sy = 1.0 - (row + 0.5) / h * 2.0
    sx = (col + 0.5) / w * 2.0 - 1.0
    px = sx * tha
    py = sy * thv
    dx = fwd[0] + px * right[0] + py * up[0]
    dy = fwd[1] + px * right[1] + py * up[1]
    dz = fwd[2] + px * right[2] + py * up[2]
    inv = 1.0 / math.sqrt(dx * dx + dy * dy + dz * dz)
    return pos, (dx * inv, dy * inv, dz * inv)


def oracle_shadow(mesh, camera, light, grid, seed):
    w, h = camera.image_size
    out = np.zeros((h, w))
    for row in range(h):
        for col in range(w):
            o, d = oracle_ray(camera, row, col)
            tm, _ = oracle_closest(mesh, o, d)
            tg = -o[2] / d[2] if d[2] != 0.0 else math.inf
            if tg <= 1e-9:
                tg = math.inf
            if not tg < tm:
                continue
            gp = (o[0] + tg * d[0], o[1] + tg * d[1], o[2] + tg * d[2])
            pts = sample_area_light(light, grid, PixelStream(seed, row * w + col))
            blocked = 0
            for q in pts:
                wx = q[0] - gp[0]
                wy = q[1] - gp[1]
                wz = q[2] - gp[2]
                dist = math.sqrt(wx * wx + wy * wy + wz * wz)
                ivd = 1.0 / dist
                u = (wx * ivd, wy * ivd, wz * ivd)
                o2 = (
                    gp[0] + SHADOW_EPS * u[0],
                    gp[1] + SHADOW_EPS * u[1],
                    gp[2] + SHADOW_EPS * u[2],
                )
                if oracle_any(mesh, o2, u, dist - SHADOW_EPS):
                    blocked += 1
            out[row, col] = blocked / (float(grid) * float(grid))
    return out


def soup_mesh(ntri, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1.2, 1.2, size=(ntri * 3, 3))
    tris = np.arange(ntri * 3).reshape(ntri, 3)
    return TriangleMesh(pts, tris, name=f"soup{seed}")


def random_rays(n, seed):
    rng = np.random.default_rng(seed)
    o = rng.standard_normal((n, 3))
    o = o / np.linalg.norm(o, axis=1, keepdims=True) * 6.0
    target = rng.uniform(-1.0, 1.0, (n, 3))
    d = target - o
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    return o, d


def cube_mesh():
    return settle(normalize_mesh(parse_obj(CUBE_OBJ, name="cube")))


def ground_camera(size=64):
    return Camera(position=(0.0, -6.0, 2.0), image_size=(size, size))


def bvh_any(bvh, o, d, tmax):
    return any_hit(
        bvh.node_min, bvh.node_max, bvh.node_left, bvh.node_right,
        bvh.node_start, bvh.node_count,
        bvh.tri_a, bvh.tri_e1, bvh.tri_e2, bvh.tri_id,
        o[0], o[1], o[2], d[0], d[1], d[2], 0.0, tmax,
    )


# ---------------------------------------------------------------------------
# BVH structure

def test_single_triangle_single_leaf():
    mesh = TriangleMesh(np.eye(3), np.array([[0, 1, 2]]))
    bvh = build_bvh(mesh)
    assert bvh.num_nodes == 1
    assert bvh.node_count[0] == 1


def test_empty_mesh_rejected():
    with pytest.raises(MeshError):
        build_bvh(TriangleMesh(np.zeros((3, 3)), np.zeros((0, 3), dtype=np.int64)))
    with pytest.raises(MeshError):
        build_bvh(None)


def test_bvh_boxes_contain_children():
    bvh = build_bvh(cube_mesh())
    for n in range(bvh.num_nodes):
        if bvh.node_count[n] > 0:
            assert bvh.node_count[n] <= 4
            continue
        for child in (bvh.node_left[n], bvh.node_right[n]):
            assert np.all(bvh.node_min[n] <= bvh.node_min[child] + 1e-15)
            assert np.all(bvh.node_max[n] >= bvh.node_max[child] - 1e-15)
    assert sorted(bvh.tri_id.tolist()) == list(range(12))


def test_bvh_build_deterministic():
    a = build_bvh(soup_mesh(200, 3))
    b = build_bvh(soup_mesh(200, 3))
    np.testing.assert_array_equal(a.node_min, b.node_min)
    np.testing.assert_array_equal(a.tri_id, b.tri_id)


def test_bvh_matches_brute_force_closest():
    for mseed in (0, 1):
        mesh = soup_mesh(500, mseed)
        bvh = build_bvh(mesh)
        o, d = random_rays(300, 10 + mseed)
        t, tid = closest_hits(bvh, o, d)
        for i in range(len(o)):
            et, eid = oracle_closest(mesh, o[i], d[i])
            assert t[i] == et and tid[i] == eid, f"ray {i}: {(t[i], tid[i])} != {(et, eid)}"


def test_bvh_matches_brute_force_any():
    mesh = soup_mesh(300, 5)
    bvh = build_bvh(mesh)
    o, d = random_rays(200, 99)
    for i in range(len(o)):
        tmax = 4.0 + (i % 7)
        assert bool(bvh_any(bvh, o[i], d[i], tmax)) == oracle_any(mesh, o[i], d[i], tmax)


# ---------------------------------------------------------------------------
# mask

def test_mask_empty_scene():
    cam = ground_camera(32)
    assert render_mask(None, None, cam).sum() == 0


def test_mask_centroid_near_projection():
    mesh = cube_mesh()
    cam = ground_camera(64)
    mask = render_mask(mesh, build_bvh(mesh), cam)
    assert mask.sum() > 0
    rows, cols = np.nonzero(mask)
    pos, right, up, fwd = cam.basis()
    centroid = mesh.vertices.mean(axis=0)
    v = centroid - pos
    xc, yc, zc = v @ right, v @ up, v @ fwd
    sx = xc / (zc * cam.tan_half_fov * cam.aspect)
    sy = yc / (zc * cam.tan_half_fov)
    w, h = cam.image_size
    exp_col = (sx + 1.0) / 2.0 * w - 0.5
    exp_row = (1.0 - sy) / 2.0 * h - 0.5
    assert abs(cols.mean() - exp_col) < 5
    assert abs(rows.mean() - exp_row) < 5


def test_mask_matches_brute_force_frame():
    mesh = cube_mesh()
    cam = ground_camera(64)
    mask = render_mask(mesh, build_bvh(mesh), cam)
    w, h = cam.image_size
    expect = np.zeros((h, w), dtype=np.uint8)
    for row in range(h):
        for col in range(w):
            o, d = oracle_ray(cam, row, col)
            tm, tid = oracle_closest(mesh, o, d)
            tg = -o[2] / d[2] if d[2] != 0.0 else math.inf
            if tg <= 1e-9:
                tg = math.inf
            expect[row, col] = 1 if (tid >= 0 and tm <= tg) else 0
    np.testing.assert_array_equal(mask, expect)


# ---------------------------------------------------------------------------
# shadow map

def test_shadow_empty_scene():
    cam = ground_camera(32)
    light = LightParams(theta=20.0, phi=0.0, size=4.0)
    sh = render_shadow_map(None, None, cam, light, grid=4, seed=0)
    assert not sh.any()


def test_shadow_matches_python_oracle_bitwise():
    mesh = cube_mesh()
    cam = ground_camera(12)
    light = LightParams(theta=30.0, phi=40.0, size=4.0)
    got = render_shadow_map(mesh, build_bvh(mesh), cam, light, grid=3, seed=11)
    expect = oracle_shadow(mesh, cam, light, grid=3, seed=11)
    np.testing.assert_array_equal(got, expect)


def test_shadow_quantized_and_bounded():
    mesh = cube_mesh()
    cam = ground_camera(48)
    light = LightParams(theta=25.0, phi=10.0, size=4.0)
    sh = render_shadow_map(mesh, build_bvh(mesh), cam, light, grid=4, seed=0)
    assert sh.min() >= 0.0 and sh.max() <= 1.0
    scaled = sh * 16.0
    np.testing.assert_array_equal(scaled, np.rint(scaled))
    assert sh.max() == 1.0  # cube sits on the ground: umbra present


def test_shadow_full_occlusion_plate():
    # wide plate between the whole light square and the ground point below it
    plate = "v -6 -6 2\nv 6 -6 2\nv 6 6 2\nv -6 6 2\nf 1 2 3 4\n"
    mesh = parse_obj(plate, name="plate")
    cam = ground_camera(16)
    light = LightParams(theta=0.0, phi=0.0, size=2.0)
    sh = render_shadow_map(mesh, build_bvh(mesh), cam, light, grid=4, seed=0)
    # pixels under the plate see shadow 1; find the ground pixel nearest image
    # center that is under the plate interior
    assert sh.max() == 1.0


def test_shadow_mask_disjoint():
    mesh = cube_mesh()
    cam = ground_camera(48)
    light = LightParams(theta=30.0, phi=0.0, size=4.0)
    bvh = build_bvh(mesh)
    mask = render_mask(mesh, bvh, cam)
    sh = render_shadow_map(mesh, bvh, cam, light, grid=2, seed=0)
    assert not sh[mask == 1].any()


def test_shadow_worker_count_invariance():
    mesh = cube_mesh()
    cam = ground_camera(64)
    light = LightParams(theta=30.0, phi=120.0, size=6.0)
    bvh = build_bvh(mesh)
    maps = [
        render_shadow_map(mesh, bvh, cam, light, grid=2, seed=5, workers=n)
        for n in (1, 4, 8)
    ]
    np.testing.assert_array_equal(maps[0], maps[1])
    np.testing.assert_array_equal(maps[0], maps[2])


def test_shadow_penumbra_grows_with_size():
    mesh = cube_mesh()
    cam = ground_camera(64)
    bvh = build_bvh(mesh)
    partial = []
    for s in (2.0, 8.0):
        sh = render_shadow_map(
            mesh, bvh, cam, LightParams(theta=30.0, phi=0.0, size=s), grid=8, seed=0
        )
        partial.append(int(((sh > 0.05) & (sh < 0.95)).sum()))
    assert partial[1] > partial[0]


def test_shadow_env_thread_cap(monkeypatch):
    monkeypatch.setenv("UMBRA_THREADS", "3")
    assert resolve_workers() == 3
    assert resolve_workers(2) == 2
    monkeypatch.delenv("UMBRA_THREADS")
    assert resolve_workers(1) == 1


# ---------------------------------------------------------------------------
# preview + triplet io

def test_preview_empty_scene_white():
    cam = ground_camera(16)
    light = LightParams(theta=0.0, phi=0.0, size=2.0)
    prev = render_preview(None, None, cam, light)
    np.testing.assert_array_equal(prev, np.ones((16, 16, 3)))


def test_preview_range_and_shadow_support():
    mesh = cube_mesh()
    cam = ground_camera(64)
    light = LightParams(theta=30.0, phi=0.0, size=4.0)
    bvh = build_bvh(mesh)
    mask = render_mask(mesh, bvh, cam)
    sh = render_shadow_map(mesh, bvh, cam, light, grid=4, seed=0)
    prev = render_preview(mesh, bvh, cam, light, shadow=sh)
    assert prev.min() >= 0.0 and prev.max() <= 1.0
    dark = (prev[:, :, 0] < 1.0 - 1e-12) & (mask == 0)
    support = sh > 0
    inter = (dark & support).sum()
    union = (dark | support).sum()
    assert inter / union > 0.95


def test_triplet_roundtrip(tmp_path):
    mesh = cube_mesh()
    cam = ground_camera(32)
    light = LightParams(theta=25.0, phi=45.0, size=3.0)
    trip = render_triplet(mesh, cam, light, grid=4, seed=7)
    paths = write_triplet(tmp_path, "t0", trip)
    for p in paths.values():
        assert p.exists()
    back = read_triplet(tmp_path, "t0")
    np.testing.assert_array_equal(back.mask, trip.mask)
    assert np.abs(back.shadow - trip.shadow).max() <= 0.5 / 65535 + 1e-12
    assert back.params == trip.params
    assert back.mesh_name == "cube"
    assert back.seed == 7 and back.grid == 4
    # byte-identical rewrite
    blobs = {k: p.read_bytes() for k, p in paths.items()}
    write_triplet(tmp_path, "t0", trip)
    for k, p in paths.items():
        assert p.read_bytes() == blobs[k]


def test_render_deterministic():
    mesh = cube_mesh()
    cam = ground_camera(32)
    light = LightParams(theta=35.0, phi=200.0, size=5.0)
    a = render_triplet(mesh, cam, light, grid=2, seed=3)
    b = render_triplet(mesh, cam, light, grid=2, seed=3)
    np.testing.assert_array_equal(a.shadow, b.shadow)
    np.testing.assert_array_equal(a.mask, b.mask)
    np.testing.assert_array_equal(a.preview, b.preview)
