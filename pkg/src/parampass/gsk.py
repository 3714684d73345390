"""Generalized Sanathanan-Koerner identification of parameterized models.

Each iteration solves the linearized fitting problem

    min  sum_{k,m} || N(j w_k, theta_m) - H_km D(j w_k, theta_m) ||_F^2 / |D_prev(j w_k, theta_m)|^2

for the numerator and denominator coefficients with the basis poles held
fixed.  ``D_prev`` is the denominator of the previous iterate (one at the
start).  Real and imaginary parts are stacked so that all coefficients stay
real, and the normalization ``r[0, 0] = 1`` moves its column to the right
hand side.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.linalg

from .dataset import FitSplit, SampledDataset, model_on_grid, write_csv, fmt
from .descriptor import model_poles
from .model import ParamBasis, ParamModel, PoleSet, freq_basis_matrix

__all__ = [
    "GskConfig",
    "GskResult",
    "GskConvergenceWarning",
    "default_poles",
    "fit",
    "StabilityResult",
    "stability_sweep",
]

log = logging.getLogger(__name__)


class GskConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class GskConfig:
    max_iterations: int = 20
    stop_tol: float = 1e-6
    column_scaling: bool = True
    pole_spacing: Literal["log", "linear"] = "log"
    #: Singular values of the scaled denominator system below this are dropped.
    rank_tol: float = 1e-11

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.stop_tol > 0:
            raise ValueError("stop_tol must be positive")


def default_poles(n_poles: int, f_min_hz: float, f_max_hz: float, spacing: str = "log") -> PoleSet:
    """Starting basis poles in units normalized by ``2 pi f_max``.

    ``n_poles // 2`` complex pairs with imaginary parts spread over the band
    and damping ratio ``-re/im = 1/100``; one extra real pole at ``-1/2``
    when ``n_poles`` is odd.
    """
    if n_poles < 0:
        raise ValueError("n_poles must be non-negative")
    n_c = n_poles // 2
    w_lo = f_min_hz / f_max_hz if f_min_hz > 0 else 1e-2
    w_lo = max(w_lo, 1e-6)
    if n_c == 1:
        im = np.array([np.sqrt(w_lo)])
    elif spacing == "log":
        im = np.geomspace(w_lo, 1.0, n_c)
    elif spacing == "linear":
        im = np.linspace(w_lo, 1.0, n_c)
    else:
        raise ValueError(f"unknown pole spacing {spacing!r}")
    cp = np.column_stack([-im / 100.0, im]) if n_c else np.zeros((0, 2))
    rp = [-0.5] if n_poles % 2 else []
    return PoleSet(rp, cp)


@dataclass
class GskResult:
    model: ParamModel
    log: list[dict] = field(default_factory=list)
    converged: bool = False
    best_iteration: int = 0

    def write_log(self, path) -> None:
        rows = [
            [e["iteration"], fmt(e["weighted_residual"]), fmt(e["max_coeff_change"]), fmt(e["fit_rms"])]
            for e in self.log
        ]
        write_csv(path, ["iteration", "weighted_residual", "max_coeff_change", "fit_rms"], rows)


def _stack_real(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag], axis=0)


def _truncated_lstsq(A: np.ndarray, b: np.ndarray, tol: float) -> tuple[np.ndarray, int]:
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    keep = s > tol
    coef = vt[keep].T @ ((u[:, keep].T @ b) / s[keep])
    return coef, int(np.count_nonzero(keep))


def fit(
    data: SampledDataset,
    split: FitSplit | None,
    poles: PoleSet,
    pbasis: ParamBasis,
    cfg: GskConfig | None = None,
) -> GskResult:
    """Identify numerator and denominator coefficients by GSK iteration.

    Frequencies are normalized by ``2 pi f_max`` of ``data``; ``poles`` must
    be given in those units.  The iterate with the smallest RMS error at the
    fitting points is returned.
    """
    cfg = cfg or GskConfig()
    split = split or FitSplit.all(data.n_params)
    split.check(data.n_params)
    cols = list(split.fit_indices)
    P = data.ports
    nb, nl = poles.order + 1, pbasis.count
    c = nb * nl
    n_unknown = (P * P + 1) * c - 1
    n_eq = data.n_freqs * len(cols) * P * P
    if n_eq < n_unknown:
        raise ValueError(f"{n_eq} fitting equations for {n_unknown} unknowns")

    freq_scale_hz = data.f_max
    s = 1j * data.freqs / freq_scale_hz
    phi = freq_basis_matrix(poles, s)
    xi = pbasis.matrix(data.params[cols])
    # basis rows ordered (m major, k minor), columns (n major, l minor)
    basis = np.einsum("kn,ml->mknl", phi, xi).reshape(len(cols) * data.n_freqs, c)
    h = data.samples[:, cols].transpose(1, 0, 2, 3).reshape(-1, P, P)

    den = np.zeros(c)
    den[0] = 1.0
    weight = np.ones(basis.shape[0])
    history = []
    best = None
    converged = False
    for it in range(1, cfg.max_iterations + 1):
        wb = basis * weight[:, None]
        An = _stack_real(wb)
        sn = np.linalg.norm(An, axis=0) if cfg.column_scaling else np.ones(c)
        sn[sn == 0] = 1.0
        An = An / sn
        blocks = []
        for i in range(P):
            for j in range(P):
                hij = h[:, i, j][:, None]
                Ad = _stack_real(-hij * wb[:, 1:])
                rhs = _stack_real(hij[:, 0] * wb[:, 0])
                blocks.append((Ad, rhs))
        if cfg.column_scaling:
            sd = np.sqrt(sum(np.linalg.norm(Ad, axis=0) ** 2 for Ad, _ in blocks))
            sd[sd == 0] = 1.0
        else:
            sd = np.ones(c - 1)
        tops, r22, y2 = [], [], []
        for Ad, rhs in blocks:
            Rm = np.linalg.qr(np.column_stack([An, Ad / sd, rhs]), mode="r")
            tops.append(Rm[:c])
            r22.append(Rm[c:, c:-1])
            y2.append(Rm[c:, -1])
        r22 = np.vstack(r22)
        y2 = np.concatenate(y2)
        if c > 1:
            rd, rank = _truncated_lstsq(r22, y2, cfg.rank_tol)
            if rank < c - 1:
                log.debug("iteration %d: denominator system rank %d of %d", it, rank, c - 1)
        else:
            rd = np.zeros(0)
        wres = float(np.linalg.norm(y2 - r22 @ rd)) if c > 1 else float(np.linalg.norm(y2))
        new_den = np.concatenate([[1.0], rd / sd])
        num = np.empty((c, P, P))
        for e, top in enumerate(tops):
            R11 = top[:, :c]
            y1 = top[:, -1] - top[:, c:-1] @ rd
            dg = np.abs(np.diag(R11))
            if np.all(dg > 1e3 * cfg.rank_tol * dg.max()):
                num[:, e // P, e % P] = scipy.linalg.solve_triangular(R11, y1) / sn
            else:
                # heavy SK weights can make the numerator block nearly singular
                coef, rank = _truncated_lstsq(R11, y1, cfg.rank_tol * dg.max())
                log.debug("iteration %d: numerator block %d rank %d of %d", it, e, rank, c)
                num[:, e // P, e % P] = coef / sn
        model = ParamModel(
            poles,
            pbasis,
            num.reshape(nb, nl, P, P),
            new_den.reshape(nb, nl),
            freq_scale_hz,
        )
        change = float(np.linalg.norm(new_den - den) / np.linalg.norm(new_den))
        d_new = basis @ new_den
        if np.any(d_new == 0):
            raise np.linalg.LinAlgError("denominator vanishes at a fitting point")
        resid = model_on_grid(model, data, cols) - data.samples[:, cols]
        fit_rms = float(np.sqrt(np.mean(np.abs(resid) ** 2)))
        history.append(
            {"iteration": it, "weighted_residual": wres, "max_coeff_change": change, "fit_rms": fit_rms}
        )
        log.debug("GSK iteration %d: residual %.3e, change %.3e, rms %.3e", it, wres, change, fit_rms)
        if best is None or fit_rms < best[0]:
            best = (fit_rms, it, model)
        den = new_den
        weight = 1.0 / np.abs(d_new)
        if change <= cfg.stop_tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"GSK iteration did not converge in {cfg.max_iterations} iterations", GskConvergenceWarning, stacklevel=2
        )
    return GskResult(best[2], history, converged, best[1])


@dataclass(frozen=True)
class StabilityResult:
    passed: bool
    worst_pole: complex
    worst_theta: float
    unstable_thetas: tuple[float, ...] = ()


def stability_sweep(model: ParamModel, grid_size: int = 101) -> StabilityResult:
    """Check that the model poles lie in the open left half plane on a theta grid."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    pb = model.pbasis
    worst = (-np.inf, 0j, pb.theta_min)
    bad = []
    for theta in np.linspace(pb.theta_min, pb.theta_max, grid_size):
        p = model_poles(model, theta)
        if p.size == 0:
            continue
        k = int(np.argmax(p.real))
        if p.real[k] > worst[0]:
            worst = (p.real[k], complex(p[k]), float(theta))
        if p.real[k] >= 0:
            bad.append(float(theta))
    return StabilityResult(not bad, worst[1], worst[2], tuple(bad))
