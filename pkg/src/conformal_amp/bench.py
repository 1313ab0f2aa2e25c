"""Experiment harness: interval length, coverage, Jaccard overlap,
Bayes comparison, timing sweeps, and real-data runs.

Every experiment is driven by an `ExperimentConfig`, spawns one RNG
stream per trial from the master seed (so results are reproducible
bit-for-bit, timings aside), tolerates per-trial solver failures by
recording them, and returns a `Report` that serializes to JSON and to a
flat per-method CSV table.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from time import perf_counter

import numpy as np
from joblib import Parallel, delayed

from ._version import __version__
from .amp import AmpOptions
from .bayes import BayesConfig, bayes_interval_gaussian, bayes_interval_laplace
from .conformal import (
    ConformalConfig,
    PredictionSet,
    default_grid,
    fcp_predict,
    jaccard,
    scp_predict,
)
from .data import (
    Dataset,
    RealDataConfig,
    SplitSpec,
    SyntheticConfig,
    generate_synthetic,
    load_csv,
    split,
)
from .exact import erm_solve
from .glm import GlmSpec

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "MethodMetrics",
    "Report",
    "run_experiment",
    "emit_report",
]

EXPERIMENTS = ("length", "coverage", "jaccard", "bayes_compare", "timing", "real_data")
CSV_HEADER = "method,coverage,mean_length,std_length,mean_jaccard,wall_time_seconds"
THREADS_ENV = "CONFORMAL_AMP_THREADS"

_SOLVER_FAILURES = (RuntimeError, FloatingPointError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment run: which protocol, on what data, how many trials."""

    experiment: str
    glm: GlmSpec
    data: SyntheticConfig | RealDataConfig
    kappa: float = 0.1
    trials: int = 200
    test_samples: int = 20
    seed: int = 0
    output: str | None = None
    grid_points: int = 200
    dims: tuple[int, ...] = (250, 1000)
    timing_reps: int = 5
    train_fraction: float = 0.8
    damping: float = 0.0

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(
                f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}"
            )
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.test_samples < 1:
            raise ValueError(f"test_samples must be >= 1, got {self.test_samples}")
        if self.experiment == "real_data":
            if not isinstance(self.data, RealDataConfig):
                raise ValueError("real_data experiment needs csv_path/target_column data")
            if not Path(self.data.csv_path).exists():
                raise FileNotFoundError(f"no such file: {self.data.csv_path}")
        elif not isinstance(self.data, SyntheticConfig):
            raise ValueError(f"{self.experiment} experiment needs synthetic data settings")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["dims"] = list(self.dims)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        glm = GlmSpec(**raw.pop("glm"))
        data_raw = dict(raw.pop("data"))
        if "csv_path" in data_raw:
            data = RealDataConfig(**data_raw)
        else:
            data_raw.setdefault("seed", 0)
            data = SyntheticConfig(**data_raw)
        if "dims" in raw:
            raw["dims"] = tuple(raw["dims"])
        return cls(glm=glm, data=data, **raw)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        with Path(path).open("r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class MethodMetrics:
    coverage: float | None = None
    mean_length: float | None = None
    std_length: float | None = None
    mean_jaccard: float | None = None
    wall_time_seconds: float | None = None
    failures: int = 0
    trials: int = 0


@dataclass
class Report:
    experiment: str
    config: dict
    seed: int
    version: str
    methods: dict[str, MethodMetrics]
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "config": self.config,
            "seed": self.seed,
            "version": self.version,
            "methods": {name: asdict(m) for name, m in self.methods.items()},
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Report":
        return cls(
            experiment=raw["experiment"],
            config=raw["config"],
            seed=raw["seed"],
            version=raw["version"],
            methods={name: MethodMetrics(**m) for name, m in raw["methods"].items()},
            notes=raw.get("notes", {}),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "Report":
        with Path(path).open("r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def emit_report(report: Report, fmt: str, output_dir: str | Path = ".") -> Path:
    """Write report.json (full report) or report.csv (flat metric table)."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = output_dir / "report.json"
        with path.open("w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
            fh.write("\n")
        return path
    if fmt == "csv":
        path = output_dir / "report.csv"
        with path.open("w", encoding="utf-8") as fh:
            fh.write(CSV_HEADER + "\n")
            for name, m in report.methods.items():
                cells = [name] + [
                    "" if v is None else repr(float(v))
                    for v in (m.coverage, m.mean_length, m.std_length,
                              m.mean_jaccard, m.wall_time_seconds)
                ]
                fh.write(",".join(cells) + "\n")
        return path
    raise ValueError(f"unknown report format {fmt!r} (expected 'json' or 'csv')")


# ---------------------------------------------------------------------------
# worker pool
# ---------------------------------------------------------------------------

def _worker_count(n_tasks: int) -> int:
    env = os.environ.get(THREADS_ENV)
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


def _pmap(fn, items):
    n_jobs = _worker_count(len(items))
    if n_jobs == 1:
        return [fn(item) for item in items]
    return Parallel(n_jobs=n_jobs)(delayed(fn)(item) for item in items)


def _trial_seeds(master_seed: int, count: int) -> list[tuple[int, int]]:
    root = np.random.SeedSequence(master_seed)
    return [tuple(int(s) for s in child.generate_state(2)) for child in root.spawn(count)]


# ---------------------------------------------------------------------------
# length / coverage
# ---------------------------------------------------------------------------

def _draw_trial(syn: SyntheticConfig, data_seed: int, extra: int = 1):
    """One train set plus `extra` held-out rows from the same teacher."""
    cfg = replace(syn, n=syn.n + extra, seed=data_seed)
    ds_all, teacher = generate_synthetic(cfg)
    train = Dataset(ds_all.X[: syn.n], ds_all.y[: syn.n])
    held_x = ds_all.X[syn.n:]
    held_y = ds_all.y[syn.n:]
    return train, held_x, held_y, teacher


def _interval_trial(args):
    cfg, methods, (data_seed, split_seed) = args
    syn: SyntheticConfig = cfg.data
    train, held_x, held_y, _ = _draw_trial(syn, data_seed)
    x_t, y_t = held_x[0], float(held_y[0])
    amp_opts = AmpOptions(damping=cfg.damping)
    result = {}
    for method in methods:
        start = perf_counter()
        try:
            if method == "scp":
                ps = scp_predict(
                    train, x_t, cfg.glm, cfg.kappa,
                    SplitSpec(cfg.train_fraction, seed=split_seed),
                )
            else:
                ps = fcp_predict(
                    train, x_t, cfg.glm,
                    ConformalConfig(kappa=cfg.kappa, backend=method,
                                    grid_points=cfg.grid_points),
                    amp_opts,
                )
            result[method] = (ps.total_length, ps.contains(y_t), perf_counter() - start)
        except _SOLVER_FAILURES:
            result[method] = (None, None, perf_counter() - start)
    return result


def _aggregate_interval_results(results, methods) -> dict[str, MethodMetrics]:
    out = {}
    for method in methods:
        lengths = [r[method][0] for r in results if r[method][0] is not None]
        covered = [r[method][1] for r in results if r[method][1] is not None]
        wall = sum(r[method][2] for r in results)
        out[method] = MethodMetrics(
            coverage=float(np.mean(covered)) if covered else None,
            mean_length=float(np.mean(lengths)) if lengths else None,
            std_length=float(np.std(lengths)) if lengths else None,
            wall_time_seconds=wall,
            failures=len(results) - len(lengths),
            trials=len(results),
        )
    return out


def _run_interval_experiment(cfg: ExperimentConfig, methods) -> Report:
    seeds = _trial_seeds(cfg.seed, cfg.trials)
    results = _pmap(_interval_trial, [(cfg, methods, s) for s in seeds])
    return Report(
        experiment=cfg.experiment,
        config=cfg.to_dict(),
        seed=cfg.seed,
        version=__version__,
        methods=_aggregate_interval_results(results, methods),
    )


# ---------------------------------------------------------------------------
# jaccard
# ---------------------------------------------------------------------------

def _jaccard_sample(args):
    cfg, train, x_t = args
    grid_sol = erm_solve(train, cfg.glm)
    grid = default_grid(
        float(grid_sol.theta @ x_t),
        train.y - train.X @ grid_sol.theta,
        cfg.grid_points,
    )
    amp_opts = AmpOptions(damping=cfg.damping)
    start = perf_counter()
    exact_set = fcp_predict(
        train, x_t, cfg.glm,
        ConformalConfig(kappa=cfg.kappa, backend="exact_loo", grid=grid),
    )
    t_exact = perf_counter() - start
    start = perf_counter()
    taylor_set = fcp_predict(
        train, x_t, cfg.glm,
        ConformalConfig(kappa=cfg.kappa, backend="taylor_amp", grid=grid),
        amp_opts,
    )
    t_taylor = perf_counter() - start
    start = perf_counter()
    scp_set = scp_predict(train, x_t, cfg.glm, cfg.kappa,
                          SplitSpec(cfg.train_fraction, seed=cfg.seed))
    t_scp = perf_counter() - start
    return (
        jaccard(exact_set, taylor_set),
        jaccard(exact_set, scp_set),
        exact_set.total_length,
        (t_exact, t_taylor, t_scp),
    )


def _run_jaccard_experiment(cfg: ExperimentConfig) -> Report:
    syn: SyntheticConfig = cfg.data
    (data_seed, _), = _trial_seeds(cfg.seed, 1)
    train, held_x, _, _ = _draw_trial(syn, data_seed, extra=cfg.test_samples)
    results = _pmap(_jaccard_sample, [(cfg, train, held_x[i]) for i in range(cfg.test_samples)])
    ji_taylor = np.array([r[0] for r in results])
    ji_scp = np.array([r[1] for r in results])
    exact_lengths = np.array([r[2] for r in results])
    walls = np.array([r[3] for r in results])
    methods = {
        "exact_loo": MethodMetrics(
            mean_length=float(exact_lengths.mean()),
            std_length=float(exact_lengths.std()),
            mean_jaccard=1.0,
            wall_time_seconds=float(walls[:, 0].sum()),
            trials=len(results),
        ),
        "taylor_amp": MethodMetrics(
            mean_jaccard=float(ji_taylor.mean()),
            wall_time_seconds=float(walls[:, 1].sum()),
            trials=len(results),
        ),
        "scp": MethodMetrics(
            mean_jaccard=float(ji_scp.mean()),
            wall_time_seconds=float(walls[:, 2].sum()),
            trials=len(results),
        ),
    }
    return Report(
        experiment="jaccard",
        config=cfg.to_dict(),
        seed=cfg.seed,
        version=__version__,
        methods=methods,
        notes={
            "jaccard_std_taylor_amp": float(ji_taylor.std()),
            "jaccard_std_scp": float(ji_scp.std()),
        },
    )


# ---------------------------------------------------------------------------
# bayes comparison
# ---------------------------------------------------------------------------

def _bayes_trial(args):
    cfg, (data_seed, _) = args
    syn: SyntheticConfig = cfg.data
    train, held_x, held_y, _ = _draw_trial(syn, data_seed)
    x_t, y_t = held_x[0], float(held_y[0])
    bayes_cfg = BayesConfig(
        prior=syn.teacher_prior, noise_variance=syn.noise_variance, kappa=cfg.kappa
    )
    result = {}
    start = perf_counter()
    try:
        ps = fcp_predict(
            train, x_t, cfg.glm,
            ConformalConfig(kappa=cfg.kappa, backend="taylor_amp",
                            grid_points=cfg.grid_points),
            AmpOptions(damping=cfg.damping),
        )
        result["taylor_amp"] = (ps.total_length, ps.contains(y_t), perf_counter() - start)
    except _SOLVER_FAILURES:
        result["taylor_amp"] = (None, None, perf_counter() - start)
    start = perf_counter()
    try:
        if syn.teacher_prior == "gaussian":
            lo, hi = bayes_interval_gaussian(train, x_t, bayes_cfg)
        else:
            lo, hi = bayes_interval_laplace(train, x_t, bayes_cfg)
        bayes_set = PredictionSet.from_intervals([(lo, hi)])
        result["bayes"] = (bayes_set.total_length, bayes_set.contains(y_t),
                           perf_counter() - start)
    except _SOLVER_FAILURES:
        result["bayes"] = (None, None, perf_counter() - start)
    return result


def _run_bayes_experiment(cfg: ExperimentConfig) -> Report:
    seeds = _trial_seeds(cfg.seed, cfg.trials)
    results = _pmap(_bayes_trial, [(cfg, s) for s in seeds])
    methods = _aggregate_interval_results(results, ("taylor_amp", "bayes"))
    return Report(
        experiment="bayes_compare",
        config=cfg.to_dict(),
        seed=cfg.seed,
        version=__version__,
        methods=methods,
    )


# ---------------------------------------------------------------------------
# timing
# ---------------------------------------------------------------------------

def _time_single_prediction(cfg: ExperimentConfig, method: str, dim: int,
                            data_seed: int, reps: int) -> tuple[float, float]:
    syn: SyntheticConfig = cfg.data
    alpha = syn.n / syn.d
    n_dim = max(2, int(round(alpha * dim)))
    sized = replace(syn, n=n_dim, d=dim, seed=data_seed)
    train, held_x, _, _ = _draw_trial(sized, data_seed)
    x_t = held_x[0]
    conf = ConformalConfig(kappa=cfg.kappa, backend=method, grid_points=cfg.grid_points)
    amp_opts = AmpOptions(damping=cfg.damping)
    times = []
    length = 0.0
    for _ in range(reps):
        start = perf_counter()
        ps = fcp_predict(train, x_t, cfg.glm, conf, amp_opts)
        times.append(perf_counter() - start)
        length = ps.total_length
    return float(np.median(times)), length


def _run_timing_experiment(cfg: ExperimentConfig) -> Report:
    # timing stays on one worker so measurements do not fight for cores
    (data_seed, _), = _trial_seeds(cfg.seed, 1)
    methods: dict[str, MethodMetrics] = {}
    for dim in cfg.dims:
        for method in ("taylor_amp", "exact_loo"):
            reps = cfg.timing_reps
            if method == "exact_loo" and dim >= 1000:
                # a single exact-LOO interval takes minutes at this size;
                # the >=20x margin does not need five repetitions of it
                reps = 1
            median, length = _time_single_prediction(cfg, method, dim, data_seed, reps)
            methods[f"{method}_d{dim}"] = MethodMetrics(
                mean_length=length,
                wall_time_seconds=median,
                trials=reps,
            )
    return Report(
        experiment="timing",
        config=cfg.to_dict(),
        seed=cfg.seed,
        version=__version__,
        methods=methods,
        notes={"alpha": cfg.data.n / cfg.data.d, "per_sample_median_seconds": True},
    )


# ---------------------------------------------------------------------------
# real data
# ---------------------------------------------------------------------------

def _real_data_sample(args):
    cfg, train, x_t, y_t = args
    amp_opts = AmpOptions(damping=cfg.damping)
    result = {}
    for method in ("amp", "taylor_amp"):
        start = perf_counter()
        try:
            ps = fcp_predict(
                train, x_t, cfg.glm,
                ConformalConfig(kappa=cfg.kappa, backend=method,
                                grid_points=cfg.grid_points),
                amp_opts,
            )
            result[method] = (ps.total_length, ps.contains(y_t), perf_counter() - start)
        except _SOLVER_FAILURES:
            result[method] = (None, None, perf_counter() - start)
    return result


def _run_real_data_experiment(cfg: ExperimentConfig) -> Report:
    real: RealDataConfig = cfg.data
    ds = load_csv(real.csv_path, real.target_column)
    train, test = split(ds, SplitSpec(cfg.train_fraction, seed=cfg.seed))
    n_test = min(test.n, cfg.test_samples)
    tasks = [(cfg, train, test.X[i], float(test.y[i])) for i in range(n_test)]
    results = _pmap(_real_data_sample, tasks)
    methods = _aggregate_interval_results(results, ("amp", "taylor_amp"))
    return Report(
        experiment="real_data",
        config=cfg.to_dict(),
        seed=cfg.seed,
        version=__version__,
        methods=methods,
        notes={"target_standardized": True, "n_train": train.n, "n_test_used": n_test,
               "d": ds.d},
    )


def run_experiment(cfg: ExperimentConfig) -> Report:
    """Run the configured experiment and return its report."""
    if cfg.experiment == "length":
        return _run_interval_experiment(cfg, ("exact_loo", "taylor_amp", "scp"))
    if cfg.experiment == "coverage":
        return _run_interval_experiment(cfg, ("taylor_amp",))
    if cfg.experiment == "jaccard":
        return _run_jaccard_experiment(cfg)
    if cfg.experiment == "bayes_compare":
        return _run_bayes_experiment(cfg)
    if cfg.experiment == "timing":
        return _run_timing_experiment(cfg)
    return _run_real_data_experiment(cfg)
