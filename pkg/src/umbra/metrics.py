"""Evaluation metrics for gray-scale shadow maps and seed-aggregated reports."""

import csv
import io
import json
from dataclasses import dataclass, asdict

import numpy as np

METRIC_NAMES = ("iou", "rmse", "s_rmse", "zncc")


def _pair(p, g):
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
    return p, g


def soft_iou(p, g):
    """Fuzzy intersection-over-union: sum(min)/sum(max).

    Equals set IoU on binary maps; defined as 1 when both maps are all zero
    (perfect agreement on "no shadow").
    """
    p, g = _pair(p, g)
    denom = np.maximum(p, g).sum()
    if denom == 0.0:
        return 1.0
    return float(np.minimum(p, g).sum() / denom)


def rmse(p, g):
    p, g = _pair(p, g)
    return float(np.sqrt(np.mean((p - g) ** 2)))


def scaled_rmse(p, g):
    """rmse after the best non-negative single scale on the prediction.

    The optimal scale is the clamped least-squares solution
    a = max(0, <p,g>/<p,p>); an all-zero prediction falls back to rmse(0, g).
    """
    p, g = _pair(p, g)
    pp = float((p * p).sum())
    if pp == 0.0:
        return rmse(np.zeros_like(g), g)
    a = max(0.0, float((p * g).sum()) / pp)
    return rmse(a * p, g)


def zncc(p, g):
    """Zero-normalized cross-correlation in [-1, 1].

    Degenerate (near-constant) inputs compare by value: 1 when the maps
    agree to rmse < 1e-8, else 0.
    """
    p, g = _pair(p, g)
    sp = float(p.std())
    sg = float(g.std())
    if sp < 1e-8 or sg < 1e-8:
        return 1.0 if rmse(p, g) < 1e-8 else 0.0
    return float(np.mean((p - p.mean()) * (g - g.mean())) / (sp * sg))


def evaluate_pair(p, g):
    """All four metrics for one prediction/ground-truth pair."""
    return {
        "iou": soft_iou(p, g),
        "rmse": rmse(p, g),
        "s_rmse": scaled_rmse(p, g),
        "zncc": zncc(p, g),
    }


@dataclass(frozen=True)
class MetricRow:
    group: str
    metric: str
    mean: float
    std: float
    n: int


@dataclass(frozen=True)
class MetricReport:
    rows: tuple

    def get(self, group, metric) -> MetricRow:
        for row in self.rows:
            if row.group == group and row.metric == metric:
                return row
        raise KeyError(f"no row for ({group!r}, {metric!r})")

    def groups(self):
        return sorted({row.group for row in self.rows})

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["group", "metric", "mean", "std", "n"])
        for row in self.rows:
            writer.writerow(
                [row.group, row.metric, f"{row.mean:.17g}", f"{row.std:.17g}", row.n]
            )
        return buf.getvalue()

    def to_json(self):
        return json.dumps([asdict(row) for row in self.rows], sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(rows=tuple(MetricRow(**d) for d in json.loads(text)))


def aggregate(samples) -> MetricReport:
    """Seed-aggregated report from per-sample metric values.

    `samples` is an iterable of (group, seed, {metric: value}). Per group
    and metric, sample values are first averaged within each seed, then the
    mean and population standard deviation are taken across the per-seed
    means; n reports the seed count.
    """
    per_seed = {}
    for group, seed, metrics in samples:
        for metric, value in metrics.items():
            per_seed.setdefault((group, metric), {}).setdefault(seed, []).append(
                float(value)
            )
    if not per_seed:
        raise ValueError("aggregate requires at least one sample")
    rows = []
    for (group, metric) in sorted(per_seed):
        seed_means = [
            float(np.mean(vals)) for _, vals in sorted(per_seed[(group, metric)].items())
        ]
        arr = np.asarray(seed_means)
        rows.append(
            MetricRow(
                group=group,
                metric=metric,
                mean=float(arr.mean()),
                std=float(arr.std()),  # population std across seeds
                n=len(arr),
            )
        )
    return MetricReport(rows=tuple(rows))


def boundary_gradient(shadow, threshold=0.25):
    """Mean gradient magnitude over the shadow boundary.

    The boundary is the set of pixels whose central-difference gradient
    magnitude exceeds `threshold` times the peak gradient (a relative cut,
    so arbitrarily soft ramps still register). Sharper shadows concentrate
    their transition in fewer, steeper pixels and score higher. Returns 0
    for constant maps.
    """
    shadow = np.asarray(shadow, dtype=np.float64)
    gy, gx = np.gradient(shadow)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak == 0.0:
        return 0.0
    return float(mag[mag > threshold * peak].mean())


def weighted_centroid(values):
    """(row, col) centroid of a non-negative map; None if the map is zero."""
    values = np.asarray(values, dtype=np.float64)
    total = values.sum()
    if total <= 0.0:
        return None
    rows, cols = np.indices(values.shape)
    return float((rows * values).sum() / total), float((cols * values).sum() / total)
