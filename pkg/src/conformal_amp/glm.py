"""Scalar channel and denoiser functions for squared-loss GLMs.

The channel encodes how the loss shapes a sample's residual; the
denoiser encodes how the regularizer shrinks a coordinate.  Both come
with every partial derivative the first-order label-derivative solver
consumes.  All functions broadcast over numpy arrays.

The loss carries the 1/2 factor, l(y, z) = (y - z)^2 / 2, which is what
makes the closed-form channel read g = (y - omega) / (1 + V).  The
channel is the same for ridge and lasso because it depends only on the
loss; the regularizer enters through the denoiser alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

__all__ = [
    "GlmSpec",
    "ChannelOutput",
    "DenoiserOutput",
    "channel_squared",
    "denoiser",
    "prox_generic",
]

REGULARIZERS = ("ridge", "lasso")


@dataclass(frozen=True)
class GlmSpec:
    """Squared loss with a ridge (lam/2 * theta^2) or lasso (lam * |theta|) penalty."""

    regularizer: str
    lam: float

    def __post_init__(self):
        if self.regularizer not in REGULARIZERS:
            raise ValueError(
                f"regularizer must be one of {REGULARIZERS}, got {self.regularizer!r}"
            )
        if not self.lam > 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")


@dataclass(frozen=True)
class ChannelOutput:
    """Channel value g and its partials in omega, V and the label y."""

    g: np.ndarray
    dg_domega: np.ndarray
    dg_dV: np.ndarray
    d2g_domega2: np.ndarray
    d2g_dVdomega: np.ndarray
    dg_dy: np.ndarray
    d2g_dydomega: np.ndarray


@dataclass(frozen=True)
class DenoiserOutput:
    """Denoiser value f and the partials of f and df/db in b and A."""

    f: np.ndarray
    df_db: np.ndarray
    df_dA: np.ndarray
    d2f_db2: np.ndarray
    d2f_dAdb: np.ndarray


def channel_squared(y, omega, V) -> ChannelOutput:
    """Closed-form channel for the squared loss: g = (y - omega) / (1 + V).

    Requires 1 + V > 0 elementwise.
    """
    y, omega, V = np.broadcast_arrays(
        np.asarray(y, dtype=float),
        np.asarray(omega, dtype=float),
        np.asarray(V, dtype=float),
    )
    opv = 1.0 + V
    if np.any(opv <= 0):
        raise ValueError("channel requires 1 + V > 0")
    inv = 1.0 / opv
    inv2 = inv * inv
    r = y - omega
    zero = np.zeros_like(inv)
    return ChannelOutput(
        g=r * inv,
        dg_domega=-inv,
        dg_dV=-r * inv2,
        d2g_domega2=zero,
        d2g_dVdomega=inv2,
        dg_dy=inv,
        d2g_dydomega=zero,
    )


def denoiser(spec: GlmSpec, b, A, kink_margin: float = 0.0) -> DenoiserOutput:
    """Closed-form denoiser for the configured regularizer.

    Ridge: f = b / (lam + A), needs lam + A > 0.  Lasso: soft threshold
    at lam, needs A > 0; coordinates with ||b| - lam| <= kink_margin are
    treated as inactive (all-zero branch), which keeps the derivative
    system well defined next to the kink.
    """
    b, A = np.broadcast_arrays(np.asarray(b, dtype=float), np.asarray(A, dtype=float))
    lam = spec.lam
    if spec.regularizer == "ridge":
        denom = lam + A
        if np.any(denom <= 0):
            raise ValueError("ridge denoiser requires lam + A > 0")
        inv = 1.0 / denom
        inv2 = inv * inv
        return DenoiserOutput(
            f=b * inv,
            df_db=inv,
            df_dA=-b * inv2,
            d2f_db2=np.zeros_like(inv),
            d2f_dAdb=-inv2,
        )
    if np.any(A <= 0):
        raise ValueError("lasso denoiser requires A > 0")
    inv = 1.0 / A
    active = np.abs(b) > lam + kink_margin
    shift = np.where(b > 0, -lam, lam)
    f = np.where(active, (b + shift) * inv, 0.0)
    return DenoiserOutput(
        f=f,
        df_db=np.where(active, inv, 0.0),
        df_dA=np.where(active, -f * inv, 0.0),
        d2f_db2=np.zeros_like(f),
        d2f_dAdb=np.where(active, -inv * inv, 0.0),
    )


def prox_generic(loss_eval, y: float, omega: float, V: float, tol: float = 1e-10,
                 max_iter: int = 500) -> float:
    """Minimizer of loss_eval(y, z) + (z - omega)^2 / (2 V) over z.

    Bracketed scalar minimization for any convex loss; the fallback path
    for losses without a closed-form channel.  For the squared loss the
    result equals omega + V * g with g from `channel_squared`.
    """
    if not V > 0:
        raise ValueError(f"prox requires V > 0, got {V}")

    def objective(z):
        return loss_eval(y, z) + (z - omega) ** 2 / (2.0 * V)

    radius = abs(y - omega) + V + 1.0
    res = minimize_scalar(
        objective,
        bracket=(omega - radius, omega + radius),
        method="brent",
        options={"xtol": tol, "maxiter": max_iter},
    )
    if not res.success:
        raise RuntimeError(f"proximal minimization did not converge: {res.message}")
    return float(res.x)
