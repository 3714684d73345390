"""Brute-force passivity oracle on a dense frequency x parameter grid.

This module only evaluates the rational model directly.  It never touches the
pencil machinery, so it can corroborate or contradict the eigenvalue-based
check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import INF, ParamModel

__all__ = ["OracleResult", "dense_sweep_oracle", "unit_crossings", "PASS_TOL"]

#: The oracle passes a model when its largest sampled singular value is at most 1 + PASS_TOL.
PASS_TOL = 1e-6
BISECTION_STEPS = 10


@dataclass
class OracleResult:
    """Outcome of a dense sweep; frequencies are normalized."""

    max_sigma: float
    omega_at_max: float
    theta_at_max: float
    thetas: np.ndarray
    omegas: np.ndarray
    sigma: np.ndarray
    crossings: list[np.ndarray]
    #: Largest singular value at ``s = inf`` over the parameter grid.
    sigma_inf: float = float("nan")

    @property
    def passed(self) -> bool:
        return bool(self.max_sigma <= 1.0 + PASS_TOL and not self.sigma_inf > 1.0 + PASS_TOL)


def _singular_values(model: ParamModel, omega, theta) -> np.ndarray:
    return np.linalg.svd(model.transfer(1j * np.asarray(omega, dtype=float), theta), compute_uv=False)


def unit_crossings(model: ParamModel, theta: float, omegas: np.ndarray, sv: np.ndarray | None = None,
                   steps: int = BISECTION_STEPS) -> np.ndarray:
    """Frequencies where any singular value crosses one, refined by bisection.

    ``sv`` holds the sorted singular values at ``omegas`` (shape ``(K, P)``);
    sign changes of ``sv - 1`` between neighbouring grid points are bisected
    ``steps`` times on the same singular-value index.
    """
    if sv is None:
        sv = _singular_values(model, omegas, theta)
    g = sv - 1.0
    k_idx, i_idx = np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)
    out = []
    for k, i in zip(k_idx, i_idx):
        lo, hi = float(omegas[k]), float(omegas[k + 1])
        g_lo = g[k, i]
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            g_mid = _singular_values(model, [mid], theta)[0, i] - 1.0
            if np.sign(g_mid) == np.sign(g_lo):
                lo, g_lo = mid, g_mid
            else:
                hi = mid
        out.append(0.5 * (lo + hi))
    return np.unique(np.array(out, dtype=float))


def frequency_grid(model: ParamModel, n_freq: int, f_max_mult: float) -> np.ndarray:
    """``0`` followed by a log grid up to ``f_max_mult`` times the largest pole magnitude."""
    w_top = f_max_mult * max(model.poles.max_magnitude(), 1.0)
    return np.concatenate([[0.0], np.geomspace(1e-6 * w_top, w_top, n_freq - 1)])


def dense_sweep_oracle(
    model: ParamModel,
    n_freq: int = 2048,
    n_theta: int = 101,
    f_max_mult: float = 10.0,
    crossings: bool = True,
) -> OracleResult:
    """Sample the largest singular value on a dense grid.

    The frequency axis holds ``0`` plus a log grid reaching ``f_max_mult``
    times the largest basis pole magnitude (at least one).  The parameter axis
    is uniform over the basis domain.  The response at ``s = inf`` is
    sampled separately and also enters the verdict.
    """
    if n_freq < 2 or n_theta < 2:
        raise ValueError("grid sizes must be at least 2")
    pb = model.pbasis
    thetas = np.linspace(pb.theta_min, pb.theta_max, n_theta)
    omegas = frequency_grid(model, n_freq, f_max_mult)
    sigma = np.empty((n_theta, n_freq))
    cross = []
    for m, theta in enumerate(thetas):
        sv = _singular_values(model, omegas, theta)
        sigma[m] = sv[:, 0]
        cross.append(unit_crossings(model, theta, omegas, sv) if crossings else np.zeros(0))
    sig_inf = max(float(model.sigma_max([INF], t)[0]) for t in thetas)
    m, k = np.unravel_index(int(np.argmax(sigma)), sigma.shape)
    return OracleResult(
        float(sigma[m, k]), float(omegas[k]), float(thetas[m]), thetas, omegas, sigma, cross, sig_inf
    )
