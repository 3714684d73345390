"""Uniform passivity check of parameterized models.

For a frozen parameter the model is tested through the skew-Hamiltonian /
Hamiltonian pencil ``(M, K)`` of its descriptor realization: purely
imaginary eigenvalues ``j w`` mark the frequencies where a singular value of
``H(j w; theta)`` equals one.  Those frequencies split the positive axis
into bands, each classified as passive or not, and every non-passive band
gets a worst-case point ``(w_bar, sigma_bar)``.

Across the parameter range, the normalized distance ``psi(theta)`` of the
spectrum from the imaginary axis drives an adaptive refinement of the
parameter samples.

All frequencies here are normalized (see :mod:`parampass.model`).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .descriptor import DescriptorRealization, build_descriptor, split_finite_eigs
from .model import INF, ParamModel

__all__ = [
    "CheckConfig",
    "ShhPencil",
    "SpectrumSummary",
    "BandRecord",
    "SampleResult",
    "Violation",
    "ViolationReport",
    "build_shh_pencil",
    "finite_pencil_eigs",
    "classify_bands",
    "check_at",
    "adaptive_check",
    "initial_samples",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckConfig:
    gamma: float = 0.2
    kappa: int = 4
    max_passes: int = 10
    im_tol: float = 1e-8
    band_samples: int = 64
    omega_cap_factor: float = 10.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.kappa < 1:
            raise ValueError("kappa must be at least 1")
        if self.max_passes < 1:
            raise ValueError("max_passes must be at least 1")
        if not 0 < self.im_tol < 1e-3:
            raise ValueError("im_tol must lie in (0, 1e-3)")
        if self.band_samples < 3:
            raise ValueError("band_samples must be at least 3")
        if not self.omega_cap_factor > 1:
            raise ValueError("omega_cap_factor must exceed 1")


@dataclass(frozen=True)
class ShhPencil:
    M: np.ndarray
    K: np.ndarray
    ports: int


@dataclass(frozen=True)
class SpectrumSummary:
    finite_eigs: np.ndarray
    imag_freqs: np.ndarray
    rho: float
    psi: float
    n_infinite: int

    @property
    def nu(self) -> int:
        return int(self.imag_freqs.size)


@dataclass(frozen=True)
class BandRecord:
    omega_low: float
    omega_high: float
    passive: bool
    omega_max: float | None = None
    sigma_max: float | None = None
    asymptotic: bool = False

    @property
    def classification(self) -> str:
        return "passive" if self.passive else "non-passive"


@dataclass(frozen=True)
class Violation:
    """Worst point of one non-passive band at one parameter sample."""

    theta: float
    omega: float
    sigma: float
    omega_low: float
    omega_high: float
    asymptotic: bool = False


@dataclass(frozen=True)
class SampleResult:
    theta: float
    spectrum: SpectrumSummary
    bands: tuple[BandRecord, ...]

    @property
    def psi(self) -> float:
        return self.spectrum.psi

    @property
    def nu(self) -> int:
        return self.spectrum.nu

    @property
    def violations(self) -> list[Violation]:
        return [
            Violation(self.theta, b.omega_max, b.sigma_max, b.omega_low, b.omega_high, b.asymptotic)
            for b in self.bands
            if not b.passive
        ]


@dataclass
class ViolationReport:
    samples: list[SampleResult]
    passes_used: int
    converged: bool
    freq_scale: float = 1.0
    sample_counts: list[int] = field(default_factory=list)

    @property
    def violations(self) -> list[Violation]:
        return [v for s in self.samples for v in s.violations]

    @property
    def thetas(self) -> np.ndarray:
        return np.array([s.theta for s in self.samples])

    @property
    def psi(self) -> np.ndarray:
        return np.array([s.psi for s in self.samples])

    @property
    def passive(self) -> bool:
        return not self.violations

    @property
    def max_sigma(self) -> float:
        v = self.violations
        return max(x.sigma for x in v) if v else float("nan")


def build_shh_pencil(real: DescriptorRealization) -> ShhPencil:
    """``M = [[A, B B^T], [-C^T C, -A^T]]`` and ``K = blkdiag(E, E^T)``."""
    A, B, C, E = real.A, real.B, real.C, real.E
    n = A.shape[0]
    M = np.empty((2 * n, 2 * n))
    M[:n, :n] = A
    M[:n, n:] = B @ B.T
    M[n:, :n] = -(C.T @ C)
    M[n:, n:] = -A.T
    K = np.zeros((2 * n, 2 * n))
    K[:n, :n] = E
    K[n:, n:] = E.T
    return ShhPencil(M, K, real.ports)


def finite_pencil_eigs(pencil: ShhPencil, im_tol: float = 1e-8) -> SpectrumSummary:
    """Finite spectrum of the pencil with ``rho``, ``psi`` and crossing frequencies."""
    lam, n_inf = split_finite_eigs(pencil.M, pencil.K)
    if lam.size == 0:
        raise np.linalg.LinAlgError("degenerate pencil: all eigenvalues are infinite")
    if not np.all(np.isfinite(lam)):
        raise np.linalg.LinAlgError("eigensolver returned non-finite eigenvalues")
    rho = float(np.max(np.abs(lam)))
    if rho == 0.0:
        return SpectrumSummary(lam, np.zeros(0), 0.0, 0.0, n_inf)
    dist = np.abs(lam.real) / rho
    psi = float(dist.min())
    if psi <= im_tol:
        psi = 0.0
    on_axis = (dist <= im_tol) & (lam.imag > 0)
    w = np.sort(lam.imag[on_axis])
    if w.size > 1:
        keep = np.concatenate([[True], np.diff(w) > 1e-9 * rho])
        w = w[keep]
    return SpectrumSummary(lam, w, rho, psi, n_inf)


def _band_grid(lo: float, hi: float, n: int, dc: bool) -> np.ndarray:
    if dc:
        return np.linspace(lo, hi, n)
    return np.geomspace(lo, hi, n)


def _worst_point(model: ParamModel, theta: float, grid: np.ndarray, sig: np.ndarray):
    """Best grid sample, polished by a bounded Brent search around it."""
    k = int(np.argmax(sig))
    w_best, s_best = float(grid[k]), float(sig[k])
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    if hi > lo:
        res = minimize_scalar(
            lambda w: -model.sigma_max([1j * w], theta)[0],
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-10 * max(hi, 1e-300)},
        )
        if res.success and -res.fun > s_best:
            w_best, s_best = float(res.x), float(-res.fun)
    return w_best, s_best


def classify_bands(
    model: ParamModel, theta: float, summary: SpectrumSummary, cfg: CheckConfig | None = None
) -> tuple[BandRecord, ...]:
    """Split ``[0, inf)`` at the crossing frequencies and classify each band."""
    cfg = cfg or CheckConfig()
    chi = summary.imag_freqs
    G = cfg.band_samples
    pmax = model.poles.max_magnitude()
    w_last = float(chi[-1]) if chi.size else 0.0
    w_cap = cfg.omega_cap_factor * max(pmax, w_last)
    sig_inf = float(model.sigma_max([INF], theta)[0])
    edges = np.concatenate([[0.0], chi, [INF]])
    bands = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        lo, hi = float(lo), float(hi)
        asym_check = not np.isfinite(hi)
        if lo == 0.0 and asym_check:
            probes = np.array([0.0, pmax, w_cap])
            grid = np.concatenate([[0.0], np.geomspace(1e-6 * w_cap, w_cap, G - 1)])
        elif lo == 0.0:
            probes = np.array([0.5 * hi])
            grid = _band_grid(0.0, hi, G, dc=True)
        elif asym_check:
            probes = np.array([w_cap])
            grid = _band_grid(lo, w_cap, G, dc=False)
        else:
            probes = np.array([np.sqrt(lo * hi)])
            grid = _band_grid(lo, hi, G, dc=False)
        s_probe = model.sigma_max(1j * probes, theta)
        violated = bool(np.any(s_probe > 1.0)) or (asym_check and sig_inf > 1.0)
        if not violated:
            bands.append(BandRecord(lo, hi, True))
            continue
        sig = model.sigma_max(1j * grid, theta)
        w_bar, s_bar = _worst_point(model, theta, grid, sig)
        asymptotic = False
        if asym_check and sig_inf >= s_bar:
            w_bar, s_bar, asymptotic = w_cap, sig_inf, True
        bands.append(BandRecord(lo, hi, False, w_bar, s_bar, asymptotic))
    return tuple(bands)


def check_at(model: ParamModel, theta: float, cfg: CheckConfig | None = None) -> SampleResult:
    """Univariate check of the model frozen at ``theta``."""
    cfg = cfg or CheckConfig()
    pencil = build_shh_pencil(build_descriptor(model, theta))
    try:
        sm = finite_pencil_eigs(pencil, cfg.im_tol)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise np.linalg.LinAlgError(f"SHH eigensolve failed at theta={theta}: {exc}") from exc
    return SampleResult(float(theta), sm, classify_bands(model, theta, sm, cfg))


def initial_samples(model: ParamModel, cfg: CheckConfig) -> np.ndarray:
    """Uniform initial partition with ``kappa * count`` subintervals."""
    pb = model.pbasis
    mu_bar = cfg.kappa * pb.count
    return pb.theta_min + np.arange(mu_bar + 1) / mu_bar * (pb.theta_max - pb.theta_min)


def _needs_refinement(a: SampleResult, b: SampleResult, mid_psi, gamma: float) -> bool:
    za, zb = a.psi == 0.0, b.psi == 0.0
    if za and zb:
        return a.nu != b.nu
    if za != zb:
        return True
    psi_mid = mid_psi()
    eps = abs(psi_mid - 0.5 * (a.psi + b.psi))
    return eps > gamma * abs(psi_mid)


def adaptive_check(model: ParamModel, cfg: CheckConfig | None = None) -> ViolationReport:
    """Adaptive parameter sweep of the univariate check.

    Starts from a uniform partition and, for at most ``max_passes`` passes,
    bisects every subinterval whose edge samples cannot rule out an unseen
    passivity transition.  A bisection midpoint evaluated only to test the
    interpolation error is kept in a cache but joins the sample set only
    when the subinterval is refined.
    """
    cfg = cfg or CheckConfig()
    cache: dict[float, SampleResult] = {}

    def result(theta: float) -> SampleResult:
        if theta not in cache:
            cache[theta] = check_at(model, theta, cfg)
        return cache[theta]

    samples = sorted(float(t) for t in initial_samples(model, cfg))
    for t in samples:
        result(t)
    counts = [len(samples)]
    passes = 0
    converged = False
    while passes < cfg.max_passes:
        new = []
        for a, b in zip(samples[:-1], samples[1:]):
            mid = 0.5 * (a + b)
            if mid <= a or mid >= b:
                continue
            if _needs_refinement(result(a), result(b), lambda: result(mid).psi, cfg.gamma):
                new.append(mid)
        passes += 1
        if not new:
            converged = True
            break
        for t in new:
            result(t)
        samples = sorted(set(samples).union(new))
        counts.append(len(samples))
        log.debug("pass %d: %d new samples, %d total", passes, len(new), len(samples))
    return ViolationReport(
        [cache[t] for t in samples], passes, converged, model.freq_scale, counts
    )
