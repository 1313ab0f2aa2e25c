"""Approximate message passing (AMP) for penalized squared-loss regression.

A single converged fit exposes, besides the estimator itself, all n
leave-one-out estimators through the cavity construction
theta_{-i} = theta_hat - g_i * x_i (x) v_hat, which is what makes full
conformal prediction affordable: one fit instead of n refits per
candidate label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .glm import GlmSpec, denoiser

__all__ = [
    "AmpOptions",
    "AmpState",
    "DivergenceError",
    "NotConvergedError",
    "amp_fit",
    "loo_predictions",
    "loo_coefficients",
    "conformity_scores_amp",
]


class DivergenceError(RuntimeError):
    """The iteration produced non-finite values."""

    def __init__(self, iteration: int):
        super().__init__(f"iteration diverged at step {iteration}")
        self.iteration = iteration


class NotConvergedError(RuntimeError):
    """An operation that requires a converged state received an unconverged one."""


@dataclass(frozen=True)
class AmpOptions:
    """Iteration controls.

    `init_seed=None` selects the deterministic start (theta=0, v=1, g=0),
    which makes permutation-symmetry exact; an integer seed selects a
    random normal start for theta instead.  `damping` in [0, 1) mixes the
    previous iterate into each update, useful on hostile real-data
    matrices.  `warm_start` resumes from a previous state of matching
    shape, e.g. across neighboring candidate labels in a grid sweep.
    """

    tol: float = 1e-10
    max_iter: int = 1000
    damping: float = 0.0
    init_seed: int | None = None
    warm_start: "AmpState | None" = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError(f"damping must lie in [0, 1), got {self.damping}")


@dataclass(frozen=True)
class AmpState:
    """Full fixed-point vector of the iteration.

    At convergence theta_hat = f(b, A) and v_hat = df/db(b, A) hold
    entrywise, and g equals the training residuals y - X theta_hat for
    the squared loss.
    """

    theta_hat: np.ndarray
    v_hat: np.ndarray
    omega: np.ndarray
    V: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    b: np.ndarray
    A: np.ndarray
    iterations: int
    converged: bool


def run_message_passing(X, y, channel, denoise, *, tol, max_iter, damping,
                        theta0, v0, g0):
    """Generic AMP loop over a (channel, denoiser) pair.

    `channel(y, omega, V) -> (g, dg_domega)` and
    `denoise(b, A) -> (f, df_db)` are applied elementwise.  Returns an
    `AmpState`; raises `DivergenceError` on non-finite iterates.
    """
    X2 = np.square(X)
    theta_hat = np.array(theta0, dtype=float)
    v_hat = np.array(v0, dtype=float)
    g = np.array(g0, dtype=float)
    omega = V = dg = A = b = None
    converged = False
    iterations = 0
    for t in range(1, max_iter + 1):
        iterations = t
        V = X2 @ v_hat
        omega = X @ theta_hat - V * g
        g, dg = channel(y, omega, V)
        A = -(X2.T @ dg)
        b = X.T @ g + A * theta_hat
        f, df = denoise(b, A)
        if damping > 0.0:
            f = (1.0 - damping) * f + damping * theta_hat
            df = (1.0 - damping) * df + damping * v_hat
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(df))):
            raise DivergenceError(t)
        delta = float(np.max(np.abs(f - theta_hat)))
        theta_hat, v_hat = f, df
        if delta < tol:
            converged = True
            break
    return AmpState(
        theta_hat=theta_hat,
        v_hat=v_hat,
        omega=omega,
        V=V,
        g=g,
        dg=dg,
        b=b,
        A=A,
        iterations=iterations,
        converged=converged,
    )


def _erm_channel(y, omega, V):
    inv = 1.0 / (1.0 + V)
    return (y - omega) * inv, -inv


def amp_fit(ds: Dataset, spec: GlmSpec, opts: AmpOptions | None = None) -> AmpState:
    """Run the fixed-point iteration on `ds` until the estimator stalls.

    Stops when the sup-norm change of theta_hat falls below `opts.tol`;
    the returned state's `converged` flag records whether that happened
    before `opts.max_iter`.
    """
    opts = opts or AmpOptions()
    n, d = ds.n, ds.d
    if opts.warm_start is not None:
        ws = opts.warm_start
        if ws.theta_hat.shape[0] != d or ws.g.shape[0] != n:
            raise ValueError("warm_start state shape does not match the dataset")
        theta0, v0, g0 = ws.theta_hat, ws.v_hat, ws.g
    elif opts.init_seed is not None:
        theta0 = np.random.default_rng(opts.init_seed).standard_normal(d)
        v0, g0 = np.ones(d), np.zeros(n)
    else:
        theta0, v0, g0 = np.zeros(d), np.ones(d), np.zeros(n)

    def denoise(b, A):
        out = denoiser(spec, b, A)
        return out.f, out.df_db

    return run_message_passing(
        ds.X, ds.y, _erm_channel, denoise,
        tol=opts.tol, max_iter=opts.max_iter, damping=opts.damping,
        theta0=theta0, v0=v0, g0=g0,
    )


def loo_predictions(state: AmpState, ds: Dataset) -> np.ndarray:
    """All n leave-one-out predictions theta_{-i} . x_i from one fit.

    Computed as X theta_hat - g * (X^2 v_hat) without materializing the
    n leave-one-out coefficient vectors.
    """
    if not state.converged:
        raise NotConvergedError("leave-one-out extraction requires a converged state")
    return ds.X @ state.theta_hat - state.g * (np.square(ds.X) @ state.v_hat)


def loo_coefficients(state: AmpState, ds: Dataset) -> np.ndarray:
    """The full (n, d) matrix whose row i is theta_{-i}."""
    if not state.converged:
        raise NotConvergedError("leave-one-out extraction requires a converged state")
    return state.theta_hat[None, :] - state.g[:, None] * ds.X * state.v_hat[None, :]


def conformity_scores_amp(ds_augmented: Dataset, spec: GlmSpec,
                          opts: AmpOptions | None = None) -> np.ndarray:
    """Scores sigma_i = |y_i - theta_{-i} . x_i| for all rows of an augmented
    dataset (test pair last), from a single fit."""
    state = amp_fit(ds_augmented, spec, opts)
    return np.abs(ds_augmented.y - loo_predictions(state, ds_augmented))
