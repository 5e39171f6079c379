"""Grounding metrics and box-size distribution analysis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import EmptySample
from .scene import BBox

DEFAULT_THRESHOLD = 0.5
DEFAULT_SMOOTHNESS = 3.0


@dataclass(frozen=True)
class EvalPair:
    id: str
    gold_box: BBox
    # None records a grounding failure, scored as IoU 0
    predicted_box: Optional[BBox]


@dataclass
class EvalReport:
    n: int
    precision_at_threshold: float
    threshold: float
    ious: List[Tuple[str, float]]
    failure_ids: List[str]
    flagged: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "threshold": self.threshold,
            "precision_at_threshold": self.precision_at_threshold,
            "failure_ids": self.failure_ids,
            "flagged": self.flagged,
            "pairs": [{"id": i, "iou": v} for i, v in self.ious],
        }


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def precision_at(
    pairs: Sequence[EvalPair], threshold: float = DEFAULT_THRESHOLD, flagged: Optional[dict] = None
) -> EvalReport:
    """Share of pairs whose IoU is strictly greater than ``threshold``."""
    if not pairs:
        raise EmptySample("no evaluation pairs")
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    ious = [
        (p.id, 0.0 if p.predicted_box is None else iou(p.gold_box, p.predicted_box)) for p in pairs
    ]
    hits = sum(1 for _, v in ious if v > threshold)
    failures = [i for i, v in ious if not v > threshold]
    return EvalReport(len(ious), hits / len(ious), threshold, ious, failures, dict(flagged or {}))


@dataclass(frozen=True)
class AreaSample:
    """Box areas as percent of the image area."""

    values: Tuple[float, ...]
    label: str = ""

    def __post_init__(self) -> None:
        if any(v < 0 or not math.isfinite(v) for v in self.values):
            raise ValueError("area values must be finite and non-negative")

    @classmethod
    def from_boxes(cls, boxes: Iterable[Tuple[BBox, float, float]], label: str = "") -> "AreaSample":
        """Build from (box, image_width, image_height) triples."""
        return cls(tuple(100.0 * b.area / (w * h) for b, w, h in boxes), label)


@dataclass(frozen=True)
class DensityCurve:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float
    label: str = ""


def scott_bandwidth(values: np.ndarray) -> float:
    n = values.size
    return float(np.std(values, ddof=1)) * n ** (-1.0 / 5.0)


def kde_density(
    sample: Union[AreaSample, Sequence[float]],
    bandwidth_factor: float = DEFAULT_SMOOTHNESS,
    grid: Union[None, Sequence[float], Tuple[float, float, int]] = None,
    min_bandwidth: float = 1e-3,
) -> DensityCurve:
    """Gaussian KDE with bandwidth ``bandwidth_factor`` times Scott's rule, floored at
    ``min_bandwidth`` so constant samples still give a finite peak.

    ``grid`` is either explicit evaluation points or ``(start, stop, num)``; by default it
    spans the sample plus four bandwidths on each side.
    """
    label = sample.label if isinstance(sample, AreaSample) else ""
    values = np.asarray(sample.values if isinstance(sample, AreaSample) else sample, dtype=float)
    if values.size < 2:
        raise EmptySample("kernel density needs at least two values")
    if bandwidth_factor <= 0:
        raise ValueError("bandwidth_factor must be positive")
    h = max(bandwidth_factor * scott_bandwidth(values), min_bandwidth)
    if grid is None:
        xs = np.linspace(values.min() - 4 * h, values.max() + 4 * h, 512)
    elif isinstance(grid, tuple) and len(grid) == 3 and isinstance(grid[2], int):
        xs = np.linspace(grid[0], grid[1], grid[2])
    else:
        xs = np.asarray(grid, dtype=float)
    norm = 1.0 / (values.size * h * math.sqrt(2 * math.pi))
    dens = np.empty_like(xs)
    step = max(1, 2_000_000 // values.size)
    for i in range(0, xs.size, step):
        z = (xs[i : i + step, None] - values[None, :]) / h
        dens[i : i + step] = np.exp(-0.5 * z * z).sum(axis=1) * norm
    return DensityCurve(xs, dens, h, label)


def wasserstein_1d(
    a: Union[AreaSample, Sequence[float]], b: Union[AreaSample, Sequence[float]]
) -> float:
    """Order-1 Wasserstein distance between two empirical distributions,
    computed as the integral of the absolute CDF difference."""
    u = np.sort(np.asarray(a.values if isinstance(a, AreaSample) else a, dtype=float))
    v = np.sort(np.asarray(b.values if isinstance(b, AreaSample) else b, dtype=float))
    if u.size == 0 or v.size == 0:
        raise EmptySample("Wasserstein distance needs two non-empty samples")
    knots = np.concatenate([u, v])
    knots.sort(kind="mergesort")
    widths = np.diff(knots)
    cdf_u = np.searchsorted(u, knots[:-1], side="right") / u.size
    cdf_v = np.searchsorted(v, knots[:-1], side="right") / v.size
    return float(np.sum(np.abs(cdf_u - cdf_v) * widths))


def distance_table(samples: Sequence[AreaSample]) -> List[List[float]]:
    n = len(samples)
    table = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            d = wasserstein_1d(samples[i], samples[j])
            table[i][j] = table[j][i] = d
    return table
