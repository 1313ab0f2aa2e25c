"""Relaxed belief propagation over per-(coordinate, sample) cavity messages.

This is the O(n*d)-message ancestor of AMP, kept as a small-scale test
oracle: its cavity mean (theta_{mu->i})_mu is, by construction, the
estimator fit without sample i, so it validates AMP's one-fit
leave-one-out extraction without any of AMP's leading-order shortcuts.
Not a production path -- the memory guard is deliberately loud.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .amp import DivergenceError, NotConvergedError
from .data import Dataset
from .glm import GlmSpec, denoiser

__all__ = ["RbpState", "rbp_fit", "rbp_loo_prediction", "rbp_loo_predictions"]

MAX_MESSAGES = 10_000_000


@dataclass(frozen=True)
class RbpState:
    """Cavity messages (d, n) on the coordinate side, (n, d) on the sample
    side, plus the marginal estimates assembled from the full sums."""

    cavity_mean: np.ndarray
    cavity_var: np.ndarray
    omega_cav: np.ndarray
    V_cav: np.ndarray
    A_cav: np.ndarray
    b_cav: np.ndarray
    theta_hat: np.ndarray
    v_hat: np.ndarray
    iterations: int
    converged: bool


def rbp_fit(ds: Dataset, spec: GlmSpec, tol: float = 1e-10,
            max_iter: int = 1000) -> RbpState:
    """Iterate the four cavity-message blocks until the means stall.

    Initialization mirrors AMP's deterministic start mapped onto
    messages: all cavity means 0, all cavity variances 1.
    """
    n, d = ds.n, ds.d
    if n * d > MAX_MESSAGES:
        raise ValueError(
            f"rbp handles n*d message pairs; n*d = {n * d} exceeds the "
            f"{MAX_MESSAGES} guard -- use amp_fit instead"
        )
    X, y = ds.X, ds.y
    X2 = np.square(X)
    tc = np.zeros((d, n))  # theta_{mu -> i}
    vc = np.ones((d, n))   # v_{mu -> i}
    omega_cav = V_cav = A_cav = b_cav = None
    col_a = col_b = None
    converged = False
    iterations = 0
    for t in range(1, max_iter + 1):
        iterations = t
        # sample-side messages: full sums minus the own term
        sum_v = np.einsum("id,di->i", X2, vc)
        sum_t = np.einsum("id,di->i", X, tc)
        V_cav = sum_v[:, None] - X2 * vc.T
        omega_cav = sum_t[:, None] - X * tc.T
        opv = 1.0 + V_cav
        if np.any(opv <= 0):
            raise DivergenceError(t)
        g = (y[:, None] - omega_cav) / opv
        dg = -1.0 / opv
        # coordinate-side messages: column sums minus the own term
        col_a = np.einsum("id,id->d", X2, dg)
        col_b = np.einsum("id,id->d", X, g)
        A_cav = -(col_a[:, None] - (X2 * dg).T)
        b_cav = col_b[:, None] - (X * g).T
        out = denoiser(spec, b_cav, A_cav)
        if not np.all(np.isfinite(out.f)):
            raise DivergenceError(t)
        delta = float(np.max(np.abs(out.f - tc)))
        tc, vc = out.f, out.df_db
        if delta < tol:
            converged = True
            break
    # marginals: every sample's message contribution, evaluated at cavity
    # arguments, summed over samples
    marginal = denoiser(spec, col_b, -col_a)
    return RbpState(
        cavity_mean=tc,
        cavity_var=vc,
        omega_cav=omega_cav,
        V_cav=V_cav,
        A_cav=A_cav,
        b_cav=b_cav,
        theta_hat=marginal.f,
        v_hat=marginal.df_db,
        iterations=iterations,
        converged=converged,
    )


def rbp_loo_prediction(state: RbpState, ds: Dataset, i: int) -> float:
    """Cavity prediction for sample i: sum_mu x_{i,mu} theta_{mu->i}."""
    if not state.converged:
        raise NotConvergedError("cavity extraction requires a converged state")
    if not 0 <= i < ds.n:
        raise IndexError(f"sample index {i} out of range for n={ds.n}")
    return float(ds.X[i] @ state.cavity_mean[:, i])


def rbp_loo_predictions(state: RbpState, ds: Dataset) -> np.ndarray:
    """All n cavity predictions at once."""
    if not state.converged:
        raise NotConvergedError("cavity extraction requires a converged state")
    return np.einsum("id,di->i", ds.X, state.cavity_mean)
