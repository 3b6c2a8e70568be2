import math

import numpy as np
import pytest

from umbra.metrics import (
    MetricReport,
    MetricRow,
    aggregate,
    boundary_gradient,
    evaluate_pair,
    rmse,
    scaled_rmse,
    soft_iou,
    weighted_centroid,
    zncc,
)


# ---------------------------------------------------------------------------
# oracles

def loop_rmse(p, g):
    acc = 0.0
    n = 0
    for a, b in zip(p.ravel(), g.ravel()):
        acc += (a - b) ** 2
        n += 1
    return math.sqrt(acc / n)


def golden_section_scale(p, g, lo=0.0, hi=10.0, iters=200):
    """Minimize rmse(a*p, g) over a in [lo, hi] by golden-section search."""
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc = loop_rmse(c * p, g)
    fd = loop_rmse(d * p, g)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = loop_rmse(c * p, g)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = loop_rmse(d * p, g)
    return (a + b) / 2.0


def two_pass_mean_std(values):
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


# ---------------------------------------------------------------------------
# soft_iou

def test_iou_identical_maps():
    g = np.random.default_rng(0).random((16, 16))
    assert soft_iou(g, g) == pytest.approx(1.0)


def test_iou_disjoint_supports():
    p = np.zeros((8, 8))
    g = np.zeros((8, 8))
    p[:4] = 0.7
    g[4:] = 0.7
    assert soft_iou(p, g) == 0.0


def test_iou_uniform_ratio():
    p = np.full((8, 8), 0.5)
    g = np.ones((8, 8))
    assert soft_iou(p, g) == pytest.approx(0.5)


def test_iou_both_empty():
    z = np.zeros((8, 8))
    assert soft_iou(z, z) == 1.0


def test_iou_symmetric_and_bounded():
    rng = np.random.default_rng(1)
    for _ in range(20):
        p = rng.random((12, 12))
        g = rng.random((12, 12))
        v = soft_iou(p, g)
        assert v == soft_iou(g, p)
        assert 0.0 <= v <= 1.0


def test_iou_shape_mismatch():
    with pytest.raises(ValueError):
        soft_iou(np.zeros((4, 4)), np.zeros((4, 5)))


# ---------------------------------------------------------------------------
# rmse

def test_rmse_basics():
    assert rmse(np.ones((4, 4)), np.ones((4, 4))) == 0.0
    assert rmse(np.zeros((4, 4)), np.ones((4, 4))) == 1.0


def test_rmse_matches_scalar_loop():
    rng = np.random.default_rng(2)
    for _ in range(10):
        p = rng.random((16, 16))
        g = rng.random((16, 16))
        assert rmse(p, g) == pytest.approx(loop_rmse(p, g), abs=1e-12)


def test_rmse_triangle_sanity():
    rng = np.random.default_rng(3)
    for _ in range(20):
        p, g, h = (rng.random((10, 10)) for _ in range(3))
        assert rmse(p, g) <= rmse(p, h) + rmse(h, g) + 1e-9


# ---------------------------------------------------------------------------
# scaled rmse

def test_scaled_rmse_scale_invariance():
    g = np.random.default_rng(4).random((12, 12)) + 0.1
    assert scaled_rmse(2.0 * g, g) == pytest.approx(0.0, abs=1e-12)


def test_scaled_rmse_zero_prediction():
    g = np.random.default_rng(5).random((12, 12))
    assert scaled_rmse(np.zeros_like(g), g) == pytest.approx(rmse(np.zeros_like(g), g))


def test_scaled_rmse_matches_golden_section():
    rng = np.random.default_rng(6)
    for _ in range(5):
        p = rng.random((16, 16)) + 0.05
        g = rng.random((16, 16))
        a_closed = max(0.0, float((p * g).sum() / (p * p).sum()))
        a_search = golden_section_scale(p, g)
        assert a_closed == pytest.approx(a_search, abs=1e-6)
        assert scaled_rmse(p, g) == pytest.approx(loop_rmse(a_search * p, g), abs=1e-9)


def test_scaled_rmse_never_worse_than_rmse():
    rng = np.random.default_rng(7)
    for _ in range(30):
        p = rng.random((8, 8))
        g = rng.random((8, 8))
        assert scaled_rmse(p, g) <= rmse(p, g) + 1e-12


def test_scaled_rmse_negative_correlation_clamps_to_zero():
    g = np.random.default_rng(8).random((8, 8))
    p = -g  # optimal unconstrained scale is negative; clamp at 0
    assert scaled_rmse(p, g) == pytest.approx(rmse(np.zeros_like(g), g))


# ---------------------------------------------------------------------------
# zncc

def test_zncc_self():
    p = np.random.default_rng(9).random((10, 10))
    assert zncc(p, p) == pytest.approx(1.0, abs=1e-9)


def test_zncc_affine_invariance():
    rng = np.random.default_rng(10)
    p = rng.random((10, 10))
    g = 3.0 * p + 0.25
    assert zncc(p, g) == pytest.approx(1.0, abs=1e-9)
    for _ in range(10):
        q = rng.random((10, 10))
        a = rng.uniform(0.1, 5.0)
        b = rng.uniform(-1.0, 1.0)
        assert zncc(a * p + b, q) == pytest.approx(zncc(p, q), abs=1e-9)


def test_zncc_anticorrelation():
    p = np.random.default_rng(11).random((10, 10))
    assert zncc(p, 1.0 - p) == pytest.approx(-1.0, abs=1e-9)


def test_zncc_degenerate_rules():
    flat = np.full((6, 6), 0.3)
    assert zncc(flat, flat) == 1.0
    assert zncc(flat, np.full((6, 6), 0.9)) == 0.0
    varied = np.random.default_rng(12).random((6, 6))
    assert zncc(flat, varied) == 0.0


def test_zncc_bounded():
    rng = np.random.default_rng(13)
    for _ in range(20):
        v = zncc(rng.random((9, 9)), rng.random((9, 9)))
        assert -1.0 <= v <= 1.0


# ---------------------------------------------------------------------------
# aggregation + report

def test_aggregate_single_seed_zero_std():
    report = aggregate([("track1", 0, {"iou": 0.5}), ("track1", 0, {"iou": 0.7})])
    row = report.get("track1", "iou")
    assert row.mean == pytest.approx(0.6)
    assert row.std == 0.0
    assert row.n == 1


def test_aggregate_two_seeds():
    report = aggregate([("g", 0, {"rmse": 0.7}), ("g", 1, {"rmse": 0.8})])
    row = report.get("g", "rmse")
    assert row.mean == pytest.approx(0.75)
    assert row.std == pytest.approx(0.05)
    assert row.n == 2


def test_aggregate_matches_two_pass_reference():
    rng = np.random.default_rng(14)
    samples = []
    per_seed = []
    for seed in range(10):
        vals = rng.random(5)
        per_seed.append(float(vals.mean()))
        samples.extend(("g", seed, {"zncc": float(v)}) for v in vals)
    mean, std = two_pass_mean_std(per_seed)
    row = aggregate(samples).get("g", "zncc")
    assert row.mean == pytest.approx(mean, abs=1e-12)
    assert row.std == pytest.approx(std, abs=1e-12)
    assert row.n == 10


def test_aggregate_empty_errors():
    with pytest.raises(ValueError):
        aggregate([])


def test_report_csv_layout():
    report = aggregate([("a", 0, {"iou": 0.5, "rmse": 0.1})])
    lines = report.to_csv().splitlines()
    assert lines[0] == "group,metric,mean,std,n"
    assert lines[1].startswith("a,iou,0.5,0,1")
    assert len(lines) == 3


def test_report_json_roundtrip():
    report = aggregate(
        [("a", s, {"iou": 0.4 + 0.01 * s, "zncc": 0.9}) for s in range(3)]
    )
    again = MetricReport.from_json(report.to_json())
    assert again == report


def test_evaluate_pair_keys():
    rng = np.random.default_rng(15)
    out = evaluate_pair(rng.random((8, 8)), rng.random((8, 8)))
    assert set(out) == {"iou", "rmse", "s_rmse", "zncc"}


# ---------------------------------------------------------------------------
# analysis helpers

def test_boundary_gradient_sharp_vs_soft():
    x = np.linspace(-1, 1, 64)
    xx = np.tile(x, (64, 1))
    sharp = (xx > 0).astype(np.float64)
    soft = np.clip(xx / 0.8 + 0.5, 0.0, 1.0)
    assert boundary_gradient(sharp) > boundary_gradient(soft) > 0.0
    assert boundary_gradient(np.zeros((16, 16))) == 0.0


def test_weighted_centroid():
    m = np.zeros((9, 9))
    m[2, 6] = 2.0
    assert weighted_centroid(m) == (2.0, 6.0)
    m[4, 4] = 2.0
    assert weighted_centroid(m) == (3.0, 5.0)
    assert weighted_centroid(np.zeros((4, 4))) is None
