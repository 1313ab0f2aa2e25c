"""Prediction sets: full and split conformal prediction, set metrics.

Full conformal prediction sweeps a label grid; a candidate label enters
the set when its conformity score ranks at most ceil((1-kappa)(n+1))-th
smallest among the n+1 augmented scores.  Score backends: brute-force
exact refits, one AMP fit per label (warm-started along the grid), or a
single Taylor expansion covering the whole grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .amp import AmpOptions, amp_fit, loo_predictions
from .data import Dataset, SplitSpec, augment, split
from .exact import erm_solve, exact_loo_scores
from .glm import GlmSpec
from .taylor import taylor_fit, taylor_scores

__all__ = [
    "BACKENDS",
    "LabelGrid",
    "PredictionSet",
    "ConformalConfig",
    "Metrics",
    "conformal_rank",
    "conformal_threshold",
    "default_grid",
    "fcp_predict",
    "scp_predict",
    "jaccard",
    "evaluate",
]

BACKENDS = ("exact_loo", "amp", "taylor_amp")


@dataclass(frozen=True)
class LabelGrid:
    """Uniform candidate-label grid: center +/- half_width, num_points points."""

    center: float
    half_width: float
    num_points: int = 200

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError(f"half_width must be > 0, got {self.half_width}")
        if self.num_points < 2:
            raise ValueError(f"num_points must be >= 2, got {self.num_points}")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(
            self.center - self.half_width, self.center + self.half_width, self.num_points
        )

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.num_points - 1)


@dataclass(frozen=True)
class PredictionSet:
    """A set of labels, as disjoint sorted closed intervals.

    Grid-backed sets keep the inclusion mask; each maximal run of
    included points becomes an interval padded by half a spacing on each
    side, so `total_length` equals (#included points) * spacing exactly.
    `grid_too_narrow` flags sets that touch the grid boundary (mass may
    have been missed).  An empty set is valid and reported as such.
    """

    intervals: tuple[tuple[float, float], ...]
    grid: LabelGrid | None = None
    included: np.ndarray | None = None

    @classmethod
    def from_grid(cls, grid: LabelGrid, included: np.ndarray) -> "PredictionSet":
        included = np.asarray(included, dtype=bool)
        if included.shape != (grid.num_points,):
            raise ValueError(
                f"mask has shape {included.shape}, expected ({grid.num_points},)"
            )
        values = grid.values
        half = 0.5 * grid.spacing
        intervals = []
        for start, stop in _runs(included):
            intervals.append((values[start] - half, values[stop - 1] + half))
        return cls(intervals=tuple(intervals), grid=grid, included=included)

    @classmethod
    def from_intervals(cls, intervals) -> "PredictionSet":
        cleaned = sorted((float(a), float(b)) for a, b in intervals if b >= a)
        for (_, b0), (a1, _) in zip(cleaned, cleaned[1:]):
            if a1 <= b0:
                raise ValueError("intervals must be disjoint and sorted")
        return cls(intervals=tuple(cleaned))

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    @property
    def total_length(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    @property
    def grid_too_narrow(self) -> bool:
        return self.included is not None and bool(self.included[0] or self.included[-1])

    def contains(self, y: float) -> bool:
        return any(a <= y <= b for a, b in self.intervals)


def _runs(mask: np.ndarray):
    """Maximal runs of True as (start, stop) index pairs, stop exclusive."""
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return list(zip(edges[::2], edges[1::2]))


@dataclass(frozen=True)
class ConformalConfig:
    """Target miscoverage kappa, optional explicit grid, and score backend.

    With `grid=None` the grid defaults to center = point prediction of
    the n-sample fit, half_width = 5 * (1 + std of training residuals),
    and `grid_points` points.
    """

    kappa: float
    backend: str = "taylor_amp"
    grid: LabelGrid | None = None
    grid_points: int = 200

    def __post_init__(self):
        if not 0.0 < self.kappa < 1.0:
            raise ValueError(f"kappa must lie in (0, 1), got {self.kappa}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")


def conformal_rank(m: int, kappa: float) -> int:
    """The rank ceil((1 - kappa) * m), clipped to [1, m].

    Evaluated in exact rational arithmetic, including the subtraction:
    for m=10, kappa=0.1 this yields 9, where float arithmetic gives
    ceil(0.9 * 10) = ceil(9.000000000000002) = 10.
    """
    rank = math.ceil((1 - Fraction(kappa)) * m)
    return min(max(int(rank), 1), m)


def conformal_threshold(scores: np.ndarray, kappa: float, rank: int | None = None) -> float:
    """The k-th smallest score with k = ceil((1 - kappa) * m) by default.

    `rank` overrides k (it is still clipped to [1, m]); split conformal
    uses that to rank against ceil((1 - kappa) * (m + 1)).
    """
    scores = np.asarray(scores, dtype=float).ravel()
    m = scores.size
    if m == 0:
        raise ValueError("empty score vector")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores contain non-finite entries")
    k = conformal_rank(m, kappa) if rank is None else min(max(int(rank), 1), m)
    return float(np.partition(scores, k - 1)[k - 1])


def default_grid(point: float, residuals: np.ndarray, num_points: int = 200) -> LabelGrid:
    """The default candidate grid: centered at the point prediction, half
    width 5 * (1 + std of the training residuals), wide enough that missed
    mass shows up as boundary inclusion."""
    half_width = 5.0 * (1.0 + float(np.std(residuals)))
    return LabelGrid(center=point, half_width=half_width, num_points=num_points)


def fcp_predict(train: Dataset, x_test: np.ndarray, spec: GlmSpec,
                cfg: ConformalConfig, amp_opts: AmpOptions | None = None) -> PredictionSet:
    """Full conformal prediction set for one test input.

    exact_loo / amp recompute the n+1 scores for every grid label (the
    amp backend warm-starts each label's fit from the previous one);
    taylor_amp fits once at the reference label and scores the whole
    grid from the expansion.
    """
    x_test = np.asarray(x_test, dtype=float).ravel()
    amp_opts = amp_opts or AmpOptions()
    backend = cfg.backend

    train_state = None
    if backend in ("amp", "taylor_amp"):
        train_state = amp_fit(train, spec, amp_opts)
        point = float(train_state.theta_hat @ x_test)
        residuals = train.y - train.X @ train_state.theta_hat
    else:
        sol = erm_solve(train, spec)
        point = float(sol.theta @ x_test)
        residuals = train.y - train.X @ sol.theta
    grid = cfg.grid or default_grid(point, residuals, cfg.grid_points)
    labels = grid.values
    kappa = cfg.kappa

    if backend == "taylor_amp":
        ds_aug = augment(train, x_test, point)
        base = amp_fit(ds_aug, spec, amp_opts)
        ts = taylor_fit(base, ds_aug, spec, tol=amp_opts.tol, max_iter=amp_opts.max_iter)
        score_matrix = taylor_scores(base, ts, ds_aug, labels)
        k = conformal_rank(train.n + 1, kappa)
        thresholds = np.partition(score_matrix, k - 1, axis=1)[:, k - 1]
        included = score_matrix[:, -1] <= thresholds
        return PredictionSet.from_grid(grid, included)

    included = np.zeros(grid.num_points, dtype=bool)
    warm: AmpOptions | None = None
    for idx, label in enumerate(labels):
        ds_aug = augment(train, x_test, float(label))
        if backend == "exact_loo":
            scores = exact_loo_scores(ds_aug, spec)
        else:
            state = amp_fit(ds_aug, spec, warm or amp_opts)
            warm = AmpOptions(
                tol=amp_opts.tol, max_iter=amp_opts.max_iter,
                damping=amp_opts.damping, warm_start=state,
            )
            scores = np.abs(ds_aug.y - loo_predictions(state, ds_aug))
        included[idx] = scores[-1] <= conformal_threshold(scores, kappa)
    return PredictionSet.from_grid(grid, included)


def scp_predict(ds: Dataset, x_test: np.ndarray, spec: GlmSpec, kappa: float,
                split_spec: SplitSpec | None = None) -> PredictionSet:
    """Split conformal interval: fit on the train part, calibrate the
    residual quantile on the held-out part, return point +/- quantile."""
    if not 0.0 < kappa < 1.0:
        raise ValueError(f"kappa must lie in (0, 1), got {kappa}")
    x_test = np.asarray(x_test, dtype=float).ravel()
    train, cal = split(ds, split_spec or SplitSpec())
    if cal.n == 0:
        raise ValueError("calibration part is empty")
    sol = erm_solve(train, spec)
    scores = np.abs(cal.y - cal.X @ sol.theta)
    q = conformal_threshold(scores, kappa, rank=conformal_rank(cal.n + 1, kappa))
    point = float(sol.theta @ x_test)
    return PredictionSet.from_intervals([(point - q, point + q)])


def _interval_overlap(a, b) -> float:
    total = 0.0
    for lo_a, hi_a in a:
        for lo_b, hi_b in b:
            total += max(0.0, min(hi_a, hi_b) - max(lo_a, lo_b))
    return total


def jaccard(a: PredictionSet, b: PredictionSet) -> float:
    """Lebesgue measure of intersection over union; 1.0 when both empty."""
    len_a, len_b = a.total_length, b.total_length
    inter = _interval_overlap(a.intervals, b.intervals)
    union = len_a + len_b - inter
    if union <= 0.0:
        return 1.0
    return inter / union


@dataclass(frozen=True)
class Metrics:
    coverage: float
    mean_length: float
    std_length: float


def evaluate(sets: list[PredictionSet], y_true: np.ndarray) -> Metrics:
    """Coverage and length statistics of per-sample prediction sets."""
    y_true = np.asarray(y_true, dtype=float).ravel()
    if len(sets) != y_true.size:
        raise ValueError(f"{len(sets)} sets vs {y_true.size} labels")
    covered = np.array([s.contains(y) for s, y in zip(sets, y_true)])
    lengths = np.array([s.total_length for s in sets])
    return Metrics(
        coverage=float(covered.mean()),
        mean_length=float(lengths.mean()),
        std_length=float(lengths.std()),
    )
