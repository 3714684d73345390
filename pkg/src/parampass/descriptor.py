"""Descriptor realization ``(E, A(theta), B, C(theta))`` of a parameterized model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import ParamModel, SingularEvaluationError

__all__ = [
    "INFINITE_EIG_RTOL",
    "DescriptorRealization",
    "build_descriptor",
    "eval_descriptor_tf",
    "split_finite_eigs",
    "model_poles",
]

#: Relative threshold on the homogeneous eigenvalue coordinate below which a
#: generalized eigenvalue is classified as infinite.
INFINITE_EIG_RTOL = 1e-10


@dataclass(frozen=True)
class DescriptorRealization:
    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    theta: float

    @property
    def n_states(self) -> int:
        """Dynamic state count ``N = order * P``."""
        return self.A.shape[0] - self.B.shape[1]

    @property
    def ports(self) -> int:
        return self.B.shape[1]


def _state_blocks(model: ParamModel) -> tuple[np.ndarray, np.ndarray]:
    P = model.ports
    I = np.eye(P)
    blocks_a = [q * I for q in model.poles.real_poles]
    for re, im in model.poles.complex_poles:
        blocks_a.append(np.block([[re * I, im * I], [-im * I, re * I]]))
    A0 = scipy.linalg.block_diag(*blocks_a) if blocks_a else np.zeros((0, 0))
    b0 = np.concatenate([np.ones(model.poles.n_real), np.tile([2.0, 0.0], model.poles.n_complex)])
    B0 = np.kron(b0[:, None], I)
    return A0, B0


def build_descriptor(model: ParamModel, theta: float) -> DescriptorRealization:
    """Instantiate the descriptor matrices at ``theta``.

    ``E = blkdiag(I_N, 0)``, ``B = [0; -I_P]``, ``C = [C1, D1]`` and
    ``A = [[A0, B0], [C2, D2]]`` where ``A0, B0`` realize the partial
    fractions, ``C1, D1`` the numerator and ``C2, D2`` the denominator
    times the identity.
    """
    P = model.ports
    N = model.order * P
    A0, B0 = _state_blocks(model)
    Rn = model.num_at(theta)
    rn = model.den_at(theta)
    I = np.eye(P)

    C1 = np.concatenate([Rn[n] for n in range(1, model.order + 1)], axis=1) if N else np.zeros((P, 0))
    C2 = np.concatenate([rn[n] * I for n in range(1, model.order + 1)], axis=1) if N else np.zeros((P, 0))

    E = np.zeros((N + P, N + P))
    E[:N, :N] = np.eye(N)
    A = np.zeros((N + P, N + P))
    A[:N, :N] = A0
    A[:N, N:] = B0
    A[N:, :N] = C2
    A[N:, N:] = rn[0] * I
    B = np.zeros((N + P, P))
    B[N:, :] = -I
    C = np.zeros((P, N + P))
    C[:, :N] = C1
    C[:, N:] = Rn[0]
    return DescriptorRealization(E, A, B, C, float(theta))


def eval_descriptor_tf(real: DescriptorRealization, s: complex) -> np.ndarray:
    """``C (s E - A)^{-1} B`` at one complex frequency."""
    pencil = s * real.E - real.A
    lu, piv = scipy.linalg.lu_factor(pencil, check_finite=False)
    if np.any(np.diag(lu) == 0):
        raise SingularEvaluationError(f"sE - A singular at s={s}", s=s, theta=real.theta)
    x = scipy.linalg.lu_solve((lu, piv), real.B.astype(complex), check_finite=False)
    if not np.all(np.isfinite(x)):
        raise SingularEvaluationError(f"sE - A singular at s={s}", s=s, theta=real.theta)
    return real.C @ x


def split_finite_eigs(a: np.ndarray, b: np.ndarray, rtol: float = INFINITE_EIG_RTOL):
    """Generalized eigenvalues of ``(a, b)`` split into finite ones and an infinite count.

    With homogeneous pairs ``(alpha, beta)`` satisfying
    ``beta * a v = alpha * b v``, a pair is infinite when its normalized
    ``|beta|`` is at most ``rtol`` times the largest one.
    """
    w, _ = scipy.linalg.eig(a, b, homogeneous_eigvals=True, right=True, check_finite=False)
    alpha, beta = w
    norm = np.hypot(np.abs(alpha), np.abs(beta))
    norm[norm == 0] = 1.0
    bh = np.abs(beta) / norm
    bmax = bh.max() if bh.size else 0.0
    if bmax == 0:
        return np.zeros(0, dtype=complex), alpha.size
    finite = bh > rtol * bmax
    return alpha[finite] / beta[finite], int(np.count_nonzero(~finite))


def model_poles(model: ParamModel, theta: float) -> np.ndarray:
    """Finite eigenvalues of the pencil ``(A(theta), E)``, i.e. the model poles."""
    real = build_descriptor(model, theta)
    poles, _ = split_finite_eigs(real.A, real.E)
    return poles
