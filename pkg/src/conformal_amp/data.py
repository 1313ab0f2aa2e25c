"""Datasets: teacher-student generation, CSV ingestion, and splitting.

All solvers in this package assume the feature-scaling convention
Var(x_{i,mu}) ~ 1/d.  `generate_synthetic` produces data in that
convention directly; `load_csv` standardizes real data and rescales it
to match.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Dataset",
    "SyntheticConfig",
    "SplitSpec",
    "RealDataConfig",
    "generate_synthetic",
    "load_csv",
    "split",
    "augment",
]

TEACHER_PRIORS = ("gaussian", "laplace")


@dataclass(frozen=True)
class Dataset:
    """A design matrix `X` (n rows, d columns) with a label vector `y`.

    Instances are immutable after construction and safe to share across
    threads.  Construction validates shapes and finiteness.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2:
            raise ValueError(f"X must be a 2-d matrix, got ndim={X.ndim}")
        if X.shape[0] != y.shape[0]:
            raise ValueError(
                f"row mismatch: X has {X.shape[0]} rows, y has {y.shape[0]} entries"
            )
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"need n >= 1 and d >= 1, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite entries")
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def alpha(self) -> float:
        """Sampling ratio n/d."""
        return self.n / self.d


@dataclass(frozen=True)
class SyntheticConfig:
    """Teacher-student generator settings.

    Inputs are drawn i.i.d. N(0, 1/d), the teacher vector from the chosen
    prior (standard normal, or Laplace with density exp(-|z|)/2), and
    labels as y = theta_star . x + noise with noise variance
    `noise_variance`.
    """

    n: int
    d: int
    teacher_prior: str = "gaussian"
    noise_variance: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError(f"need n >= 1 and d >= 1, got n={self.n}, d={self.d}")
        if self.teacher_prior not in TEACHER_PRIORS:
            raise ValueError(
                f"teacher_prior must be one of {TEACHER_PRIORS}, got {self.teacher_prior!r}"
            )
        if self.noise_variance < 0:
            raise ValueError(f"noise_variance must be >= 0, got {self.noise_variance}")


@dataclass(frozen=True)
class RealDataConfig:
    """Pointer to a CSV data source and the name of its target column."""

    csv_path: str
    target_column: str


@dataclass(frozen=True)
class SplitSpec:
    """Random train/test split: fraction of rows that go to the train part."""

    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(
                f"train_fraction must lie in (0, 1), got {self.train_fraction}"
            )


def generate_synthetic(cfg: SyntheticConfig) -> tuple[Dataset, np.ndarray]:
    """Draw a teacher-student dataset; returns (dataset, teacher vector).

    Deterministic given ``cfg.seed``: the stream draws X, then the
    teacher, then the label noise.
    """
    rng = np.random.default_rng(cfg.seed)
    X = rng.normal(0.0, 1.0 / np.sqrt(cfg.d), size=(cfg.n, cfg.d))
    if cfg.teacher_prior == "gaussian":
        teacher = rng.standard_normal(cfg.d)
    else:
        teacher = rng.laplace(0.0, 1.0, size=cfg.d)
    noise = rng.normal(0.0, np.sqrt(cfg.noise_variance), size=cfg.n)
    y = X @ teacher + noise
    return Dataset(X, y), teacher


def load_csv(path: str | Path, target_column_name: str) -> Dataset:
    """Load a UTF-8, comma-separated file with a header row.

    The column named `target_column_name` becomes the label; all other
    columns become features in header order.  Features are standardized
    per column (population variance) and scaled by 1/sqrt(d); the target
    is standardized to mean 0 and variance 1.  Exactly-constant feature
    columns map to all-zero columns.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        header = [name.strip() for name in header]
        if target_column_name not in header:
            raise ValueError(
                f"{path}: no column named {target_column_name!r}; "
                f"available columns: {header}"
            )
        target_idx = header.index(target_column_name)
        rows = []
        for row_number, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: row {row_number} has {len(row)} cells, expected {len(header)}"
                )
            parsed = []
            for col_idx, cell in enumerate(row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: cannot parse cell at row {row_number}, "
                        f"column {header[col_idx]!r}: {cell!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=float)
    y = table[:, target_idx]
    X = np.delete(table, target_idx, axis=1)
    if X.shape[1] < 1:
        raise ValueError(f"{path}: no feature columns besides the target")

    d = X.shape[1]
    constant = np.all(X == X[0, :], axis=0)
    mean = X.mean(axis=0)
    std = X.std(axis=0)  # population (1/n) variance
    std[constant] = 1.0
    X = (X - mean) / std / np.sqrt(d)
    X[:, constant] = 0.0

    y_std = y.std()
    if y_std == 0.0:
        raise ValueError(f"{path}: target column {target_column_name!r} is constant")
    y = (y - y.mean()) / y_std
    return Dataset(X, y)


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Random disjoint row partition; |train| = round(train_fraction * n).

    Rows inside each part keep the shuffled order, so the train part of a
    smaller fraction is a prefix of a larger one under the same seed.
    The train size is clamped to [1, n-1] so both parts are nonempty.
    """
    if ds.n < 2:
        raise ValueError(f"need at least 2 rows to split, got {ds.n}")
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(ds.n)
    n_train = int(round(spec.train_fraction * ds.n))
    n_train = min(max(n_train, 1), ds.n - 1)
    train_idx, test_idx = order[:n_train], order[n_train:]
    return Dataset(ds.X[train_idx], ds.y[train_idx]), Dataset(ds.X[test_idx], ds.y[test_idx])


def augment(ds: Dataset, x: np.ndarray, y: float) -> Dataset:
    """Append the pair (x, y) as the last row."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != ds.d:
        raise ValueError(f"x has {x.shape[0]} entries, expected d={ds.d}")
    return Dataset(np.vstack([ds.X, x[None, :]]), np.append(ds.y, float(y)))
