"""Passivity enforcement by iterated first-order singular value perturbation.

Every worst-case violation ``(theta, w_bar, sigma_bar)`` yields a linear
inequality on the numerator corrections ``x``; the corrections minimize the
weighted response change at the fitting samples, ``||Psi x||^2``, and the
resulting convex QP is solved by a primal-dual interior point method.  The
check/solve/update cycle repeats until the adaptive check finds no
violation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dataset import FitSplit, SampledDataset, fmt, rms_error, write_csv
from .model import INF, CoeffPerturbation, ParamModel, apply_perturbation, freq_basis_matrix
from .passivity import CheckConfig, Violation, ViolationReport, adaptive_check

__all__ = [
    "DecisionLayout",
    "ConstraintRow",
    "CostFactor",
    "QpConfig",
    "QpResult",
    "QpError",
    "EnforceConfig",
    "EnforceResult",
    "build_constraint",
    "build_cost",
    "solve_qp",
    "enforce",
]

log = logging.getLogger(__name__)


class QpError(RuntimeError):
    pass


@dataclass(frozen=True)
class DecisionLayout:
    """Flat ordering of the numerator corrections.

    Entry blocks follow column-major ``(i, j)`` order (``i`` fastest), which
    matches ``vec`` and the Kronecker form ``v^T kron u^H``; inside a block
    the index is ``n * count + l``.
    """

    ports: int
    n_basis: int
    n_param: int

    @classmethod
    def for_model(cls, model: ParamModel) -> "DecisionLayout":
        return cls(model.ports, model.order + 1, model.pbasis.count)

    @property
    def block(self) -> int:
        return self.n_basis * self.n_param

    @property
    def size(self) -> int:
        return self.ports**2 * self.block

    def index(self, i: int, j: int, n: int, l: int) -> int:
        return (j * self.ports + i) * self.block + n * self.n_param + l

    def block_slice(self, i: int, j: int) -> slice:
        b = (j * self.ports + i) * self.block
        return slice(b, b + self.block)

    def to_perturbation(self, x: np.ndarray) -> CoeffPerturbation:
        P = self.ports
        d = np.asarray(x, dtype=float).reshape(P, P, self.n_basis, self.n_param)
        # axes (j, i, n, l) -> (n, l, i, j)
        return CoeffPerturbation(d.transpose(2, 3, 1, 0))

    def from_perturbation(self, pert: CoeffPerturbation) -> np.ndarray:
        return pert.delta_num.transpose(3, 2, 0, 1).reshape(-1).copy()


@dataclass(frozen=True)
class ConstraintRow:
    """``p @ x <= rhs``, built from one singular value at one violation."""

    p: np.ndarray
    rhs: float
    theta: float
    omega: float
    sigma: float
    singular_index: int = 0
    repeated: bool = False
    asymptotic: bool = False


def _singular_triplets(H: np.ndarray):
    U, S, Vh = np.linalg.svd(H)
    return U, S, Vh.conj().T


def build_constraint(
    model: ParamModel,
    violation: Violation,
    layout: DecisionLayout | None = None,
    margin: float = 0.0,
) -> list[ConstraintRow]:
    """Linearized constraints pushing every singular value above one down to ``1 - margin``.

    The first-order change of singular value ``sigma_k`` is
    ``Re(u_k^H dH v_k)``, and ``dH`` is linear in the corrections, so each
    row satisfies ``p @ x == Re(u^H dH(x) v)``.
    """
    layout = layout or DecisionLayout.for_model(model)
    theta = violation.theta
    s = INF if violation.asymptotic else 1j * violation.omega
    phi = freq_basis_matrix(model.poles, [s])[0]
    d = phi @ model.den_at(theta)
    if d == 0 or not np.isfinite(d):
        raise ZeroDivisionError(f"denominator vanishes at s={s}, theta={theta}")
    xi = model.pbasis.matrix([theta])[0]
    a = np.kron(phi, xi) / d
    H = model.transfer([s], theta)[0]
    U, S, V = _singular_triplets(H)
    rows = []
    P = model.ports
    for k in np.flatnonzero(S > 1.0):
        u, v = U[:, k], V[:, k]
        others = np.delete(S, k)
        repeated = bool(np.any(np.abs(others - S[k]) <= 1e-9 * max(S[k], 1.0)))
        # Re{(v^T kron u^H) kron a^T}: entry (i, j) weighted by conj(u_i) v_j
        w = np.outer(u.conj(), v).T.reshape(-1)
        p = np.real(np.kron(w, a))
        if p.size != layout.size:
            raise ValueError(f"layout of size {layout.size} does not match the model ({p.size})")
        rows.append(
            ConstraintRow(
                p,
                float((1.0 - margin) - S[k]),
                float(theta),
                float(violation.omega),
                float(S[k]),
                int(k),
                repeated,
                bool(violation.asymptotic),
            )
        )
    if P and not rows:
        log.debug("no singular value above one at theta=%g, omega=%g", theta, violation.omega)
    return rows


@dataclass(frozen=True)
class CostFactor:
    """Block-diagonal factor with ``||Psi x||^2`` equal to the weighted response change."""

    blocks: tuple[np.ndarray, ...]
    layout: DecisionLayout

    @property
    def Psi(self) -> np.ndarray:
        return scipy.linalg.block_diag(*self.blocks)

    def apply(self, x: np.ndarray) -> np.ndarray:
        L = self.layout
        out = np.empty(L.size)
        for e, blk in enumerate(self.blocks):
            sl = slice(e * L.block, (e + 1) * L.block)
            out[sl] = blk @ x[sl]
        return out

    def value(self, x: np.ndarray) -> float:
        return float(np.sum(self.apply(x) ** 2))


def cost_rows(model: ParamModel, data: SampledDataset, columns) -> np.ndarray:
    """Complex rows ``b_{k,m}`` (shape ``(K * M, block)``) of the cost."""
    s = model.s_from_hz(data.freqs)
    phi = freq_basis_matrix(model.poles, s)
    rows = []
    for m in columns:
        theta = data.params[m]
        d = phi @ model.den_at(theta)
        xi = model.pbasis.matrix([theta])[0]
        rows.append(np.einsum("kn,l->knl", phi / d[:, None], xi).reshape(len(s), -1))
    return np.vstack(rows)


def _compress(F: np.ndarray) -> np.ndarray:
    R = np.linalg.qr(F, mode="r")
    if R.shape[0] < R.shape[1]:
        R = np.vstack([R, np.zeros((R.shape[1] - R.shape[0], R.shape[1]))])
    return R


def build_cost(
    model: ParamModel,
    data: SampledDataset,
    split: FitSplit | None = None,
    weights: np.ndarray | None = None,
    layout: DecisionLayout | None = None,
) -> CostFactor:
    """Economy-QR compressed cost over the fitting samples.

    ``weights`` (optional) has shape ``(P, P, K, M_fit)``; unit weights share a
    single block between all entries.
    """
    layout = layout or DecisionLayout.for_model(model)
    split = split or FitSplit.all(data.n_params)
    cols = list(split.fit_indices)
    b = cost_rows(model, data, cols)
    P = model.ports
    blocks = [None] * (P * P)
    if weights is None:
        psi = _compress(np.vstack([b.real, b.imag]))
        blocks = [psi] * (P * P)
    else:
        weights = np.asarray(weights, dtype=float)
        for i in range(P):
            for j in range(P):
                w = weights[i, j].T.reshape(-1)  # (m major, k minor), as the rows of b
                wb = w[:, None] * b
                blocks[j * P + i] = _compress(np.vstack([wb.real, wb.imag]))
    return CostFactor(tuple(blocks), layout)


@dataclass(frozen=True)
class QpConfig:
    feas_tol: float = 1e-9
    gap_tol: float = 1e-8
    dual_tol: float = 1e-9
    #: Dual residual accepted when the iteration stalls at tiny complementarity.
    stall_dual_tol: float = 1e-6
    max_ip_iters: int = 100
    ridge_factor: float = 1e-12


@dataclass(frozen=True)
class QpResult:
    x: np.ndarray
    iterations: int
    gap: float
    objective: float
    max_violation: float
    multipliers: np.ndarray


def solve_qp(
    cost: CostFactor,
    constraints: list[ConstraintRow],
    cfg: QpConfig | None = None,
) -> QpResult:
    """Minimize ``||Psi x||^2 + ridge ||x||^2`` subject to ``p_i @ x <= rhs_i``.

    Mehrotra predictor-corrector on the KKT system.  The Hessian is block
    diagonal and the constraint count is small, so each Newton step goes
    through the Woodbury identity with a Cholesky factor per block.
    """
    cfg = cfg or QpConfig()
    L = cost.layout
    Q = L.size
    if not constraints:
        return QpResult(np.zeros(Q), 0, 0.0, 0.0, 0.0, np.zeros(0))
    A = np.array([c.p for c in constraints])
    h = np.array([c.rhs for c in constraints])
    if np.all(h >= 0):
        return QpResult(np.zeros(Q), 0, 0.0, 0.0, float(np.max(-h)), np.zeros(len(h)))

    gram = [blk.T @ blk for blk in cost.blocks]
    ridge = cfg.ridge_factor * sum(np.trace(g) for g in gram) / Q
    ridge = max(ridge, 1e-300)
    chol = [scipy.linalg.cho_factor(2.0 * (g + ridge * np.eye(g.shape[0]))) for g in gram]

    def hess_solve(r):
        r2 = r.reshape(len(chol), L.block, -1)
        out = np.empty_like(r2)
        for e, cf in enumerate(chol):
            out[e] = scipy.linalg.cho_solve(cf, r2[e])
        return out.reshape(r.shape)

    def hess_mul(x):
        out = np.empty(Q)
        for e, g in enumerate(gram):
            sl = slice(e * L.block, (e + 1) * L.block)
            out[sl] = 2.0 * (g @ x[sl] + ridge * x[sl])
        return out

    # unit-norm rows improve the conditioning of the Schur complement
    pn = np.linalg.norm(A, axis=1)
    if np.any(pn == 0):
        raise QpError("constraint row with zero gradient cannot be satisfied")
    As, hs = A / pn[:, None], h / pn
    m = len(hs)
    HiA = hess_solve(As.T.copy())
    W = As @ HiA

    def newton(x, s, z, rd, rp, rc):
        d = z / s
        rhs = -rd - As.T @ (d * rp - rc / s)
        S = np.diag(1.0 / d) + W
        lu = scipy.linalg.lu_factor(S, check_finite=False)

        def reduced_solve(r):
            y = hess_solve(r)
            return y - HiA @ scipy.linalg.lu_solve(lu, As @ y, check_finite=False)

        # Woodbury loses accuracy once complementarity is small; two rounds of
        # iterative refinement on (H + A^T D A) dx = rhs recover it
        dx = reduced_solve(rhs)
        for _ in range(2):
            dx = dx + reduced_solve(rhs - hess_mul(dx) - As.T @ (d * (As @ dx)))
        dz = (z * (rp + As @ dx) - rc) / s
        ds = -rp - As @ dx
        return dx, ds, dz

    def step_len(v, dv):
        neg = dv < 0
        return min(1.0, float(np.min(-v[neg] / dv[neg]))) if np.any(neg) else 1.0

    x = np.zeros(Q)
    s = np.maximum(hs, 0.0) + max(1.0, float(np.max(np.abs(hs))))
    z = np.ones(m)
    best = None
    it = 0
    for it in range(1, cfg.max_ip_iters + 1):
        Hx = hess_mul(x)
        Atz = As.T @ z
        rd = Hx + Atz
        rp = As @ x + s - hs
        mu = float(s @ z) / m
        obj = 0.5 * float(x @ Hx)
        viol = float(np.max(A @ x - h))
        dual = float(np.max(np.abs(rd))) / max(1.0, float(np.max(np.abs(Hx))), float(np.max(np.abs(Atz))))
        gap = float(s @ z)
        log.debug("ip %d: viol %.3e, dual %.3e, gap %.3e, obj %.6e", it, viol, dual, gap, obj)
        primal_ok = viol <= cfg.feas_tol and gap <= cfg.gap_tol * max(1.0, obj)
        if primal_ok and (best is None or dual < best[3]):
            best = (x.copy(), it, gap, dual, viol, z.copy())
        if primal_ok and dual <= cfg.dual_tol:
            break
        if mu <= 1e-3 * np.finfo(float).eps * max(1.0, obj):
            # complementarity is exhausted; further steps only amplify rounding
            if best is not None and best[3] <= cfg.stall_dual_tol:
                x, it, gap, dual, viol, z = best
                break
            raise QpError(f"interior point method stalled with dual residual {dual:.3e}")
        dx, ds, dz = newton(x, s, z, rd, rp, s * z)
        a_aff = min(step_len(s, ds), step_len(z, dz))
        mu_aff = float((s + a_aff * ds) @ (z + a_aff * dz)) / m
        sigma = (mu_aff / mu) ** 3
        dx, ds, dz = newton(x, s, z, rd, rp, s * z + ds * dz - sigma * mu)
        alpha = 0.99 * min(step_len(s, ds), step_len(z, dz))
        x, s, z = x + alpha * dx, s + alpha * ds, z + alpha * dz
    else:
        if best is not None and best[3] <= cfg.stall_dual_tol:
            x, it, gap, dual, viol, z = best
        else:
            raise QpError(f"interior point method did not converge in {cfg.max_ip_iters} iterations")
    x, z = _polish(x, z, As, hs, HiA, W, hess_mul, cfg)
    viol = float(np.max(A @ x - h))
    obj_true = cost.value(x) + ridge * float(x @ x)
    return QpResult(x, it, gap, obj_true, viol, z / pn)


def _polish(x, z, As, hs, HiA, W, hess_mul, cfg):
    """Re-solve on the active set identified by the interior point method.

    The equality-constrained problem has a closed-form solution; it replaces
    the interior iterate only if it is primal and dual feasible.
    """
    s = hs - As @ x
    act = np.flatnonzero(z > s)
    if act.size == 0:
        return x, z
    lam, *_ = np.linalg.lstsq(W[np.ix_(act, act)], -hs[act], rcond=None)
    if np.any(lam < 0):
        return x, z
    xp = -HiA[:, act] @ lam
    if np.max(As @ xp - hs) > cfg.feas_tol:
        return x, z
    zp = np.zeros_like(z)
    zp[act] = lam
    Hx = hess_mul(xp)
    Atz = As.T @ zp
    dual = float(np.max(np.abs(Hx + Atz))) / max(1.0, float(np.max(np.abs(Hx))))
    if dual > cfg.dual_tol:
        return x, z
    return xp, zp


@dataclass(frozen=True)
class EnforceConfig:
    margin: float = 1e-3
    max_iterations: int = 20
    qp: QpConfig = field(default_factory=QpConfig)

    def __post_init__(self):
        if not 0 <= self.margin < 0.1:
            raise ValueError("margin must lie in [0, 0.1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class EnforceResult:
    model: ParamModel
    log: list[dict]
    converged: bool
    final_report: ViolationReport
    #: Log index of the returned model; the last entry unless the loop gave up.
    best_iteration: int = 0

    @property
    def iterations(self) -> int:
        """Number of perturbation steps applied."""
        return max(len(self.log) - 1, 0)

    def write_log(self, path) -> None:
        header = ["iteration", "n_violations", "max_sigma", "cost_value", "rms_abs", "rms_rel"]
        rows = [
            [e["iteration"], e["n_violations"]] + [fmt(e[k]) for k in header[2:]] for e in self.log
        ]
        write_csv(path, header, rows)


def enforce(
    model: ParamModel,
    data: SampledDataset,
    split: FitSplit | None = None,
    check_cfg: CheckConfig | None = None,
    enf_cfg: EnforceConfig | None = None,
    weights: np.ndarray | None = None,
) -> EnforceResult:
    """Perturb the numerator until the adaptive check reports no violation.

    The log has one entry per check; entry 0 describes the input model and
    entry ``k`` the model after ``k`` perturbation steps.  ``cost_value`` is
    the QP objective of the step that produced the model.
    """
    check_cfg = check_cfg or CheckConfig()
    enf_cfg = enf_cfg or EnforceConfig()
    split = split or FitSplit.all(data.n_params)
    layout = DecisionLayout.for_model(model)
    # the cost depends only on the (fixed) denominator and basis
    cost = None
    history = []
    cost_value = 0.0
    it = 0
    best = None
    while True:
        report = adaptive_check(model, check_cfg)
        viol = report.violations
        history.append(
            {
                "iteration": it,
                "n_violations": len(viol),
                "max_sigma": max((v.sigma for v in viol), default=float("nan")),
                "cost_value": cost_value,
                "rms_abs": rms_error(model, data, split, "absolute").worst,
                "rms_rel": rms_error(model, data, split, "relative").worst,
            }
        )
        log.info(
            "enforce iteration %d: %d violations, max sigma %s", it, len(viol), history[-1]["max_sigma"]
        )
        if not viol:
            return EnforceResult(model, history, True, report, it)
        if best is None or history[-1]["max_sigma"] < best[0]:
            best = (history[-1]["max_sigma"], it, model, report)
        if it >= enf_cfg.max_iterations:
            log.warning(
                "passivity enforcement stopped after %d iterations with violations left; "
                "returning iteration %d (max sigma %.6g)", it, best[1], best[0]
            )
            return EnforceResult(best[2], history, False, best[3], best[1])
        rows = [r for v in viol for r in build_constraint(model, v, layout, enf_cfg.margin)]
        if cost is None:
            cost = build_cost(model, data, split, weights, layout)
        sol = solve_qp(cost, rows, enf_cfg.qp)
        cost_value = cost.value(sol.x)
        model = apply_perturbation(model, layout.to_perturbation(sol.x))
        it += 1
