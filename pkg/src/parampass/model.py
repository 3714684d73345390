"""Parameterized rational scattering model.

The model is

    H(s; theta) = N(s, theta) / D(s, theta)
    N(s, theta) = sum_n sum_l R[n, l] xi_l(theta) phi_n(s)
    D(s, theta) = sum_n sum_l r[n, l] xi_l(theta) phi_n(s)

with ``phi_0 = 1``, one partial fraction per real basis pole and two real
combinations per complex pair.  The complex frequency ``s`` is always in
normalized units (physical rad/s divided by ``freq_scale``); conversion from
Hz happens at the I/O boundary through :meth:`ParamModel.s_from_hz`.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

__all__ = [
    "INF",
    "SingularEvaluationError",
    "PoleSet",
    "ParamBasis",
    "ParamModel",
    "CoeffPerturbation",
    "eval_freq_basis",
    "freq_basis_matrix",
    "eval_param_basis",
    "eval_transfer",
    "eval_perturbation",
    "apply_perturbation",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
]

#: Marker for evaluation at s = infinity.
INF = math.inf

MODEL_FORMAT_VERSION = 1

BasisKind = Literal["chebyshev", "monomial", "trigonometric"]


class SingularEvaluationError(ArithmeticError):
    """Raised when a response is requested at a pole or a denominator zero."""

    def __init__(self, message: str, s=None, theta=None):
        super().__init__(message)
        self.s = s
        self.theta = theta


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PoleSet:
    """Basis poles of the partial-fraction expansion (normalized units).

    ``complex_poles`` holds ``(re, im)`` with ``re < 0`` and ``im > 0``; each
    row stands for the conjugate pair ``re +/- j im``.
    """

    real_poles: np.ndarray = field(default_factory=lambda: np.zeros(0))
    complex_poles: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        rp = np.array(self.real_poles, dtype=float).reshape(-1)
        cp = np.array(self.complex_poles, dtype=float).reshape(-1, 2)
        if not (np.all(np.isfinite(rp)) and np.all(np.isfinite(cp))):
            raise ValueError("poles must be finite")
        if np.any(rp >= 0):
            raise ValueError("real basis poles must be strictly negative")
        if np.any(cp[:, 0] >= 0) or np.any(cp[:, 1] <= 0):
            raise ValueError("complex basis poles need re < 0 and im > 0")
        object.__setattr__(self, "real_poles", _readonly(rp))
        object.__setattr__(self, "complex_poles", _readonly(cp))
        allp = self.as_complex()
        if np.unique(allp).size != allp.size:
            raise ValueError("basis poles must be pairwise distinct")

    @property
    def n_real(self) -> int:
        return self.real_poles.size

    @property
    def n_complex(self) -> int:
        return self.complex_poles.shape[0]

    @property
    def order(self) -> int:
        """Number of non-constant basis functions, ``n_real + 2 n_complex``."""
        return self.n_real + 2 * self.n_complex

    def as_complex(self) -> np.ndarray:
        """All poles as complex numbers, conjugates included."""
        cp = self.complex_poles[:, 0] + 1j * self.complex_poles[:, 1]
        return np.concatenate([self.real_poles.astype(complex), cp, cp.conj()])

    def max_magnitude(self) -> float:
        p = self.as_complex()
        return float(np.max(np.abs(p))) if p.size else 1.0

    def scaled(self, a: float) -> "PoleSet":
        return PoleSet(a * self.real_poles, a * self.complex_poles)


def freq_basis_matrix(poles: PoleSet, s) -> np.ndarray:
    """Frequency basis at many points: array of shape ``(len(s), order + 1)``.

    Entries of ``s`` equal to :data:`INF` give ``[1, 0, ..., 0]``.
    """
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    out = np.zeros((s.size, poles.order + 1), dtype=complex)
    out[:, 0] = 1.0
    finite = np.isfinite(s)
    sf = s[finite]
    if sf.size == 0 or poles.order == 0:
        return out
    allp = poles.as_complex()
    hit = np.any(sf[:, None] == allp[None, :], axis=1)
    if np.any(hit):
        bad = sf[hit][0]
        raise SingularEvaluationError(f"basis evaluated at pole s={bad}", s=bad)
    nr = poles.n_real
    block = np.zeros((sf.size, poles.order), dtype=complex)
    if nr:
        block[:, :nr] = 1.0 / (sf[:, None] - poles.real_poles[None, :])
    if poles.n_complex:
        p = poles.complex_poles[:, 0] + 1j * poles.complex_poles[:, 1]
        g1 = 1.0 / (sf[:, None] - p[None, :])
        g2 = 1.0 / (sf[:, None] - p.conj()[None, :])
        block[:, nr::2] = g1 + g2
        block[:, nr + 1 :: 2] = 1j * g1 - 1j * g2
    out[finite, 1:] = block
    return out


def eval_freq_basis(poles: PoleSet, s) -> np.ndarray:
    """Frequency basis ``[phi_0(s), ..., phi_nbar(s)]`` at a single point."""
    return freq_basis_matrix(poles, [s])[0]


@dataclass(frozen=True)
class ParamBasis:
    """Parameter basis ``xi_1..xi_count`` on ``[theta_min, theta_max]``.

    The parameter is mapped affinely onto ``[-1, 1]`` before evaluation.
    """

    kind: BasisKind = "chebyshev"
    count: int = 1
    theta_min: float = 0.0
    theta_max: float = 1.0

    def __post_init__(self):
        if self.kind not in ("chebyshev", "monomial", "trigonometric"):
            raise ValueError(f"unknown parameter basis kind {self.kind!r}")
        if int(self.count) < 1:
            raise ValueError("parameter basis needs at least one function")
        if not self.theta_min < self.theta_max:
            raise ValueError("theta_min must be smaller than theta_max")
        object.__setattr__(self, "count", int(self.count))
        object.__setattr__(self, "theta_min", float(self.theta_min))
        object.__setattr__(self, "theta_max", float(self.theta_max))

    def normalize(self, theta):
        return (2.0 * np.asarray(theta, dtype=float) - (self.theta_min + self.theta_max)) / (
            self.theta_max - self.theta_min
        )

    def contains(self, theta, rtol: float = 1e-12) -> bool:
        width = self.theta_max - self.theta_min
        return bool(self.theta_min - rtol * width <= theta <= self.theta_max + rtol * width)

    def matrix(self, theta) -> np.ndarray:
        """Basis values at many parameters, shape ``(len(theta), count)``."""
        x = np.atleast_1d(self.normalize(theta))
        out = np.empty((x.size, self.count))
        if self.kind == "chebyshev":
            out[:, 0] = 1.0
            if self.count > 1:
                out[:, 1] = x
            for k in range(2, self.count):
                out[:, k] = 2.0 * x * out[:, k - 1] - out[:, k - 2]
        elif self.kind == "monomial":
            out[:] = x[:, None] ** np.arange(self.count)[None, :]
        else:
            # 1, cos(pi x / 2), sin(pi x / 2), cos(pi x), sin(pi x), ...
            out[:, 0] = 1.0
            for k in range(1, self.count):
                h = (k + 1) // 2
                fn = np.cos if k % 2 else np.sin
                out[:, k] = fn(0.5 * np.pi * h * x)
        return out


def eval_param_basis(pbasis: ParamBasis, theta: float, warn: bool = True) -> np.ndarray:
    """Parameter basis ``[xi_1(theta), ..., xi_count(theta)]``.

    Values outside the basis domain are allowed; a warning is emitted.
    """
    if warn and not pbasis.contains(theta):
        warnings.warn(
            f"theta={theta} outside basis domain [{pbasis.theta_min}, {pbasis.theta_max}]",
            stacklevel=2,
        )
    return pbasis.matrix([theta])[0]


@dataclass(frozen=True)
class ParamModel:
    """Rational model with parameter-dependent numerator and denominator.

    ``num_coeffs`` has shape ``(order + 1, count, P, P)`` and ``den_coeffs``
    shape ``(order + 1, count)``; the first index runs over the frequency
    basis, the second over the parameter basis.  ``den_coeffs[0, 0]`` is
    fixed to one.
    """

    poles: PoleSet
    pbasis: ParamBasis
    num_coeffs: np.ndarray
    den_coeffs: np.ndarray
    freq_scale_hz: float = 1.0 / (2.0 * math.pi)

    def __post_init__(self):
        R = np.array(self.num_coeffs, dtype=float)
        r = np.array(self.den_coeffs, dtype=float)
        nb = self.poles.order + 1
        nl = self.pbasis.count
        if R.ndim != 4 or R.shape[:2] != (nb, nl) or R.shape[2] != R.shape[3]:
            raise ValueError(f"num_coeffs shape {R.shape} incompatible with ({nb}, {nl}, P, P)")
        if r.shape != (nb, nl):
            raise ValueError(f"den_coeffs shape {r.shape} incompatible with ({nb}, {nl})")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(r))):
            raise ValueError("model coefficients must be finite")
        if r[0, 0] != 1.0:
            raise ValueError("den_coeffs[0, 0] must equal 1 (normalization)")
        if not self.freq_scale_hz > 0:
            raise ValueError("freq_scale_hz must be positive")
        object.__setattr__(self, "num_coeffs", _readonly(R))
        object.__setattr__(self, "den_coeffs", _readonly(r))
        object.__setattr__(self, "freq_scale_hz", float(self.freq_scale_hz))

    @property
    def ports(self) -> int:
        return self.num_coeffs.shape[2]

    @property
    def order(self) -> int:
        return self.poles.order

    @property
    def freq_scale(self) -> float:
        """Frequency normalization in rad/s."""
        return 2.0 * math.pi * self.freq_scale_hz

    def s_from_hz(self, f_hz) -> np.ndarray:
        return 1j * 2.0 * np.pi * np.asarray(f_hz, dtype=float) / self.freq_scale

    def num_at(self, theta) -> np.ndarray:
        """``R_n(theta)`` for all n, shape ``(order + 1, P, P)``."""
        xi = self.pbasis.matrix([theta])[0]
        return np.einsum("l,nlij->nij", xi, self.num_coeffs)

    def den_at(self, theta) -> np.ndarray:
        """``r_n(theta)`` for all n, shape ``(order + 1,)``."""
        return self.den_coeffs @ self.pbasis.matrix([theta])[0]

    def denominator(self, s, theta) -> np.ndarray:
        return freq_basis_matrix(self.poles, s) @ self.den_at(theta)

    def transfer(self, s, theta) -> np.ndarray:
        """Vectorized response at the points ``s`` for one ``theta``.

        Returns an array of shape ``(len(s), P, P)``.
        """
        phi = freq_basis_matrix(self.poles, s)
        d = phi @ self.den_at(theta)
        if np.any(d == 0) or not np.all(np.isfinite(d)):
            k = int(np.flatnonzero((d == 0) | ~np.isfinite(d))[0])
            s_bad = np.atleast_1d(s)[k]
            raise SingularEvaluationError(
                f"vanishing denominator at s={s_bad}, theta={theta}", s=s_bad, theta=theta
            )
        n = np.einsum("kn,nij->kij", phi, self.num_at(theta))
        return n / d[:, None, None]

    def sigma_max(self, s, theta) -> np.ndarray:
        """Largest singular value of the response at each point of ``s``."""
        return np.linalg.svd(self.transfer(s, theta), compute_uv=False)[:, 0]

    def frequency_scaled(self, a: float) -> "ParamModel":
        """Model whose response at ``a s`` equals this model's response at ``s``."""
        R = self.num_coeffs.copy()
        r = self.den_coeffs.copy()
        R[1:] *= a
        r[1:] *= a
        return ParamModel(self.poles.scaled(a), self.pbasis, R, r, self.freq_scale_hz)


@dataclass(frozen=True)
class CoeffPerturbation:
    """Additive correction of the numerator coefficients."""

    delta_num: np.ndarray

    def __post_init__(self):
        d = np.array(self.delta_num, dtype=float)
        if d.ndim != 4:
            raise ValueError("delta_num must have shape (order + 1, count, P, P)")
        object.__setattr__(self, "delta_num", _readonly(d))

    @classmethod
    def zeros_like(cls, model: ParamModel) -> "CoeffPerturbation":
        return cls(np.zeros_like(model.num_coeffs))

    def __mul__(self, alpha: float) -> "CoeffPerturbation":
        return CoeffPerturbation(alpha * self.delta_num)

    __rmul__ = __mul__

    def __neg__(self) -> "CoeffPerturbation":
        return CoeffPerturbation(-self.delta_num)


def eval_transfer(model: ParamModel, s, theta: float) -> np.ndarray:
    """Response matrix ``H(s; theta)``; ``s`` may be :data:`INF`."""
    return model.transfer([s], theta)[0]


def _check_shape(model: ParamModel, pert: CoeffPerturbation):
    if pert.delta_num.shape != model.num_coeffs.shape:
        raise ValueError(
            f"perturbation shape {pert.delta_num.shape} does not match {model.num_coeffs.shape}"
        )


def eval_perturbation(model: ParamModel, pert: CoeffPerturbation, s, theta: float) -> np.ndarray:
    """Response change ``dN(s, theta) / D(s, theta)`` caused by ``pert``."""
    _check_shape(model, pert)
    phi = freq_basis_matrix(model.poles, [s])[0]
    d = phi @ model.den_at(theta)
    if d == 0 or not np.isfinite(d):
        raise SingularEvaluationError(f"vanishing denominator at s={s}, theta={theta}", s, theta)
    xi = model.pbasis.matrix([theta])[0]
    dn = np.einsum("n,l,nlij->ij", phi, xi, pert.delta_num)
    return dn / d


def apply_perturbation(model: ParamModel, pert: CoeffPerturbation) -> ParamModel:
    """New model with ``num_coeffs + delta_num``; everything else is shared."""
    _check_shape(model, pert)
    return ParamModel(
        model.poles,
        model.pbasis,
        model.num_coeffs + pert.delta_num,
        model.den_coeffs,
        model.freq_scale_hz,
    )


# -- serialization -----------------------------------------------------------


def model_to_dict(model: ParamModel) -> dict:
    """JSON-ready dict.  ``num_coeffs`` is nested as ``[n][l][i][j]``."""
    return {
        "version": MODEL_FORMAT_VERSION,
        "ports": model.ports,
        "freq_scale_hz": model.freq_scale_hz,
        "poles": {
            "real": model.poles.real_poles.tolist(),
            "complex": model.poles.complex_poles.tolist(),
        },
        "param_basis": {
            "kind": model.pbasis.kind,
            "count": model.pbasis.count,
            "theta_min": model.pbasis.theta_min,
            "theta_max": model.pbasis.theta_max,
        },
        "num_coeffs_order": "n,l,i,j",
        "num_coeffs": model.num_coeffs.tolist(),
        "den_coeffs": model.den_coeffs.tolist(),
    }


def model_from_dict(doc: dict) -> ParamModel:
    version = doc.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    poles = PoleSet(doc["poles"]["real"], np.array(doc["poles"]["complex"], dtype=float).reshape(-1, 2))
    pb = doc["param_basis"]
    pbasis = ParamBasis(pb["kind"], pb["count"], pb["theta_min"], pb["theta_max"])
    P = int(doc["ports"])
    R = np.array(doc["num_coeffs"], dtype=float).reshape(poles.order + 1, pbasis.count, P, P)
    r = np.array(doc["den_coeffs"], dtype=float).reshape(poles.order + 1, pbasis.count)
    return ParamModel(poles, pbasis, R, r, doc["freq_scale_hz"])


def save_model(model: ParamModel, path) -> None:
    # json emits repr() of floats, which round-trips doubles exactly
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path) -> ParamModel:
    return model_from_dict(json.loads(Path(path).read_text()))

