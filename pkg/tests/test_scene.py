import json

import numpy as np
import pytest

from umbra.scene import (
    LightParams,
    Camera,
    default_camera,
    light_position,
    light_frame,
    sample_area_light,
    blob_map,
    blob_center_pixel,
    blob_sigma,
)


def test_light_params_json_roundtrip():
    p = LightParams(theta=35.0, phi=120.0, size=4.0, intensity=1.3)
    q = LightParams.from_json(p.to_json())
    assert p == q
    # flat dict with all five scalars
    d = json.loads(p.to_json())
    assert set(d) == {"theta", "phi", "size", "intensity", "radius"}


def test_light_params_validation():
    with pytest.raises(ValueError):
        LightParams(theta=0, phi=0, size=0)
    with pytest.raises(ValueError):
        LightParams(theta=0, phi=0, size=1, intensity=-1)
    with pytest.raises(ValueError):
        LightParams(theta=0, phi=0, size=1, radius=0)


def test_light_position_overhead():
    p = LightParams(theta=0.0, phi=0.0, size=2.0)
    np.testing.assert_allclose(light_position(p), [0, 0, 8], atol=1e-12)


def test_light_position_equator():
    p = LightParams(theta=90.0, phi=90.0, size=2.0)
    np.testing.assert_allclose(light_position(p), [0, 8, 0], atol=1e-12)


def test_light_position_oblique():
    p = LightParams(theta=30.0, phi=45.0, size=2.0)
    r = 8.0
    ex = r * np.sin(np.pi / 6) * np.cos(np.pi / 4)
    ey = r * np.sin(np.pi / 6) * np.sin(np.pi / 4)
    ez = r * np.cos(np.pi / 6)
    np.testing.assert_allclose(light_position(p), [ex, ey, ez], atol=1e-12)


def test_light_position_radius_scales():
    p = LightParams(theta=17.0, phi=200.0, size=1.0, radius=3.0)
    assert np.linalg.norm(light_position(p)) == pytest.approx(3.0)


def test_light_frame_orthonormal():
    for theta, phi in [(0, 0), (30, 45), (90, 10), (45, 300), (0.001, 77)]:
        p = LightParams(theta=theta, phi=phi, size=2.0)
        center, u, v = light_frame(p)
        d = -center / np.linalg.norm(center)
        assert np.linalg.norm(u) == pytest.approx(1.0)
        assert np.linalg.norm(v) == pytest.approx(1.0)
        assert abs(np.dot(u, v)) < 1e-9
        assert abs(np.dot(u, d)) < 1e-9
        assert abs(np.dot(v, d)) < 1e-9


def test_light_frame_pole_fixed_basis():
    p = LightParams(theta=0.0, phi=123.0, size=2.0)
    _, u, v = light_frame(p)
    np.testing.assert_allclose(u, [1, 0, 0], atol=1e-12)
    np.testing.assert_allclose(v, [0, 1, 0], atol=1e-12)


def test_sample_area_light_stratified():
    p = LightParams(theta=25.0, phi=60.0, size=3.0)
    grid = 8
    rng = np.random.default_rng(0)
    pts = sample_area_light(p, grid, rng)
    assert pts.shape == (grid * grid, 3)
    center, u, v = light_frame(p)
    rel = pts - center
    a = rel @ u
    b = rel @ v
    # all inside the square
    assert np.all(np.abs(a) <= p.size / 2 + 1e-12)
    assert np.all(np.abs(b) <= p.size / 2 + 1e-12)
    # in-plane: no component along the normal
    d = -center / np.linalg.norm(center)
    assert np.max(np.abs(rel @ d)) < 1e-9
    # one sample per stratum cell, row-major
    ci = np.floor((a / p.size + 0.5) * grid).astype(int)
    cj = np.floor((b / p.size + 0.5) * grid).astype(int)
    assert ci.tolist() == np.repeat(np.arange(grid), grid).tolist()
    assert cj.tolist() == np.tile(np.arange(grid), grid).tolist()


def test_sample_area_light_mean_near_center():
    p = LightParams(theta=40.0, phi=200.0, size=5.0)
    rng = np.random.default_rng(3)
    pts = sample_area_light(p, 32, rng)
    center, _, _ = light_frame(p)
    np.testing.assert_allclose(pts.mean(axis=0), center, atol=0.02)


def test_sample_area_light_rejects_bad_grid():
    p = LightParams(theta=0, phi=0, size=1)
    with pytest.raises(ValueError):
        sample_area_light(p, 0, np.random.default_rng(0))


def test_blob_map_peak_at_projected_center():
    p = LightParams(theta=90.0, phi=0.0, size=2.0)  # ground position (8, 0)
    img = blob_map(p, (64, 64))
    assert img.shape == (64, 64)
    row, col = np.unravel_index(np.argmax(img), img.shape)
    ecol, erow = blob_center_pixel(p, (64, 64))
    assert col == pytest.approx(ecol, abs=0.5)
    assert row == pytest.approx(erow, abs=0.5)
    # x = +8 maps to the right edge, y = 0 to the middle row
    assert col == 63
    assert row == pytest.approx(31.5, abs=0.5)
    assert 0.9 < img.max() <= 1.0


def test_blob_map_overhead_centered():
    p = LightParams(theta=0.0, phi=0.0, size=2.0)
    img = blob_map(p, (65, 65))
    row, col = np.unravel_index(np.argmax(img), img.shape)
    assert (row, col) == (32, 32)
    # center lands exactly on a pixel, so the sampled peak is 1
    assert img.max() == pytest.approx(1.0, abs=1e-12)


def test_blob_map_sigma_tracks_size():
    # half-max radius of a Gaussian is sigma*sqrt(2 ln 2)
    for size in (2.0, 4.0):
        p = LightParams(theta=0.0, phi=0.0, size=size)
        img = blob_map(p, (129, 129))
        mid = img[64]
        above = np.flatnonzero(mid >= 0.5)
        measured = (above[-1] - above[0]) / 2.0
        expect = blob_sigma(size, 129) * np.sqrt(2 * np.log(2))
        assert measured == pytest.approx(expect, abs=1.0)


def test_blob_map_phi_rotation_moves_peak():
    a = blob_map(LightParams(theta=45.0, phi=0.0, size=2.0), (64, 64))
    b = blob_map(LightParams(theta=45.0, phi=90.0, size=2.0), (64, 64))
    ra, ca = np.unravel_index(np.argmax(a), a.shape)
    rb, cb = np.unravel_index(np.argmax(b), b.shape)
    assert ca > 32 and abs(ra - 31.5) < 1.0  # +x: right of center
    assert rb < 32 and abs(cb - 31.5) < 1.0  # +y: above center


def test_camera_basis_orthonormal():
    cam = default_camera()
    pos, right, up, fwd = cam.basis()
    np.testing.assert_allclose(pos, [0, -6, 2])
    for vec in (right, up, fwd):
        assert np.linalg.norm(vec) == pytest.approx(1.0)
    assert abs(np.dot(right, up)) < 1e-12
    assert abs(np.dot(right, fwd)) < 1e-12
    assert abs(np.dot(up, fwd)) < 1e-12
    # handedness: forward x up == right (screen x runs along world +x here)
    np.testing.assert_allclose(np.cross(fwd, up), right, atol=1e-12)
    assert right[0] > 0


def test_camera_rejects_degenerate():
    with pytest.raises(ValueError):
        Camera(position=(0, 0, 0), look_at=(0, 0, 0))
    with pytest.raises(ValueError):
        Camera(position=(0, 0, 5), look_at=(0, 0, 0), up=(0, 0, 1)).basis()
    with pytest.raises(ValueError):
        Camera(position=(0, -6, 2), vertical_fov=0.0)
