"""Synthetic models and datasets used by the tests and the command line.

All generators are deterministic given their seed.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize_scalar

from .dataset import SampledDataset
from .model import ParamBasis, ParamModel, PoleSet

__all__ = [
    "first_order_model",
    "linear_theta_model",
    "random_model",
    "sample_model",
    "shallow_two_port",
    "transmission_line_dataset",
    "scale_to_peak",
    "resonant_two_port",
]


def first_order_model(c: float, theta_range=(0.0, 1.0)) -> ParamModel:
    """``H(s) = c / (s + 1)``, constant in the parameter."""
    R = np.zeros((2, 1, 1, 1))
    R[1, 0, 0, 0] = c
    r = np.array([[1.0], [0.0]])
    return ParamModel(PoleSet([-1.0]), ParamBasis("chebyshev", 1, *theta_range), R, r, 1.0 / (2 * np.pi))


def linear_theta_model(theta_range=(0.5, 1.5)) -> ParamModel:
    """``H(s; theta) = theta / (s + 1)`` with a two-term Chebyshev basis.

    Passive exactly for ``theta <= 1``.
    """
    lo, hi = theta_range
    R = np.zeros((2, 2, 1, 1))
    # theta = mid + half * x on the normalized variable x
    R[1, 0, 0, 0] = 0.5 * (lo + hi)
    R[1, 1, 0, 0] = 0.5 * (hi - lo)
    r = np.array([[1.0, 0.0], [0.0, 0.0]])
    return ParamModel(PoleSet([-1.0]), ParamBasis("chebyshev", 2, lo, hi), R, r, 1.0 / (2 * np.pi))


def resonant_two_port(peak: float = 1.2, zeta: float = 0.1, gain=(0.5, 0.0),
                      theta_range=(0.0, 1.0)) -> ParamModel:
    """Diagonal 2-port: a band-pass resonance and a first-order low-pass.

    ``S11 = peak * 2 zeta s / (s^2 + 2 zeta s + 1)`` peaks at ``s = j``;
    ``S22 = g(theta) / (s + 1)`` with ``g`` affine in the parameter,
    ``g(theta_min) = gain[0]`` and slope ``gain[1]`` per unit of theta.
    """
    lo, hi = theta_range
    p = complex(-zeta, np.sqrt(1.0 - zeta**2))
    # residue of the band-pass term at p; the pair enters as Re r, Im r
    res = peak * 2.0 * zeta * p / (p - p.conjugate())
    poles = PoleSet([-1.0], [(p.real, p.imag)])
    R = np.zeros((4, 2, 2, 2))
    R[2, 0, 0, 0], R[3, 0, 0, 0] = res.real, res.imag
    g0 = gain[0] + gain[1] * 0.5 * (hi - lo)
    R[1, 0, 1, 1] = g0
    R[1, 1, 1, 1] = gain[1] * 0.5 * (hi - lo)
    r = np.zeros((4, 2))
    r[0, 0] = 1.0
    return ParamModel(poles, ParamBasis("chebyshev", 2, lo, hi), R, r, 1.0 / (2 * np.pi))


def _random_poles(rng: np.random.Generator, n_poles: int) -> PoleSet:
    n_c = int(rng.integers(0, n_poles // 2 + 1))
    n_r = n_poles - 2 * n_c
    im = np.sort(rng.uniform(0.1, 1.0, n_c))
    cp = np.column_stack([-im * rng.uniform(0.05, 0.5, n_c), im]) if n_c else np.zeros((0, 2))
    rp = -rng.uniform(0.05, 1.0, n_r)
    # keep the real poles distinct
    rp = rp + 1e-3 * np.arange(n_r)
    return PoleSet(rp, cp)


def random_model(
    seed: int,
    ports: int = 2,
    n_poles: int = 4,
    n_param: int = 2,
    den_scale: float = 0.05,
    symmetric: bool = True,
) -> ParamModel:
    """Random stable-looking model with normalized basis poles on ``[0, 1]``.

    The denominator is a small perturbation of one, so that it stays away
    from zero on the imaginary axis.
    """
    rng = np.random.default_rng(seed)
    poles = _random_poles(rng, n_poles)
    nb = poles.order + 1
    pb = ParamBasis("chebyshev", n_param, 0.0, 1.0)
    R = rng.normal(size=(nb, n_param, ports, ports))
    R[1:] *= np.abs(poles.as_complex()).real[:, None, None, None] if poles.order else 1.0
    R[:, 1:] *= 0.3
    if symmetric:
        R = 0.5 * (R + R.transpose(0, 1, 3, 2))
    r = den_scale * rng.uniform(-1, 1, size=(nb, n_param))
    # bound |D - 1| on the axis by den_scale * sum |1/Re p|
    reach = np.concatenate([[1.0], 1.0 / np.abs(poles.as_complex().real)])
    r /= np.maximum(reach[:, None] * nb * n_param, 1.0)
    r[0, 0] = 1.0
    return ParamModel(poles, pb, R, r, 1.0 / (2 * np.pi))


def _polished_peak(model: ParamModel, n_freq: int, n_theta: int, f_max_mult: float) -> float:
    from .oracle import dense_sweep_oracle

    res = dense_sweep_oracle(model, n_freq, n_theta, f_max_mult, crossings=False)
    w = res.omegas
    best = res.max_sigma
    for m in np.argsort(res.sigma.max(axis=1))[-3:]:
        k = int(np.argmax(res.sigma[m]))
        lo, hi = w[max(k - 1, 0)], w[min(k + 1, w.size - 1)]
        theta = res.thetas[m]
        sol = minimize_scalar(lambda x: -model.sigma_max([1j * x], theta)[0], bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        best = max(best, -sol.fun)
    return float(best)


def scale_to_peak(model: ParamModel, peak: float, n_freq: int = 2048, n_theta: int = 101,
                  f_max_mult: float = 10.0) -> ParamModel:
    """Rescale the numerator so that the peak singular value is about ``peak``.

    The peak is located on a dense grid and polished in frequency.
    """
    k = peak / _polished_peak(model, n_freq, n_theta, f_max_mult)
    return ParamModel(model.poles, model.pbasis, model.num_coeffs * k, model.den_coeffs, model.freq_scale_hz)


def sample_model(model: ParamModel, freqs_hz, thetas, noise: float = 0.0, seed: int = 0,
                 parameter_name: str = "theta") -> SampledDataset:
    """Tabulate ``model`` on a frequency x parameter grid, optionally with noise.

    ``noise`` is relative to the RMS magnitude of each entry.
    """
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    s = model.s_from_hz(freqs_hz)
    h = np.stack([model.transfer(s, t) for t in thetas], axis=1)
    if noise:
        rng = np.random.default_rng(seed)
        ref = np.sqrt(np.mean(np.abs(h) ** 2, axis=(0, 1)))
        h = h + noise * ref * (rng.normal(size=h.shape) + 1j * rng.normal(size=h.shape)) / np.sqrt(2)
    return SampledDataset(freqs_hz, thetas, h, parameter_name)


def shallow_two_port(seed: int = 7, peak: float = 1.0005, noise: float = 3e-3,
                     n_freq: int = 200, n_theta: int = 9):
    """A 2-port with a shallow passivity violation and noisy samples of it.

    Returns ``(model, data)``: ``model`` is the generator, rescaled so its
    sampled peak singular value equals ``peak``; ``data`` samples it on
    ``n_freq`` frequencies up to 1 Hz-normalized bandwidth with relative
    noise ``noise``.
    """
    base = random_model(seed, ports=2, n_poles=6, n_param=3)
    base = ParamModel(base.poles, base.pbasis, base.num_coeffs, base.den_coeffs, 1.0)
    model = scale_to_peak(base, peak)
    freqs = np.linspace(0.0, 1.0, n_freq)
    thetas = np.linspace(0.0, 1.0, n_theta)
    return model, sample_model(model, freqs, thetas, noise=noise, seed=seed)


def transmission_line_dataset(
    n_freq: int = 500,
    n_theta: int = 9,
    f_max_hz: float = 10e9,
    delay_s: float = 0.8e-9,
    loss_db: float = 0.1,
) -> SampledDataset:
    """Mismatched lossy line as a 2-port, with the line impedance swept.

    The parameter ``theta`` in ``[0, 1]`` moves the characteristic impedance
    from 40 to 60 ohm against a 50 ohm reference.  Skin-effect loss grows
    with the square root of frequency and reaches ``loss_db`` at ``f_max_hz``;
    it enters as ``sqrt(j f)`` so the line response stays causal.
    """
    f = np.linspace(f_max_hz / n_freq, f_max_hz, n_freq)
    thetas = np.linspace(0.0, 1.0, n_theta)
    # Re sqrt(j) = 1 / sqrt(2)
    k = np.sqrt(2.0) * loss_db / 20.0 * np.log(10.0)
    T = np.exp(-k * np.sqrt(1j * f / f_max_hz) - 2j * np.pi * f * delay_s)
    h = np.empty((n_freq, n_theta, 2, 2), dtype=complex)
    for m, t in enumerate(thetas):
        zc = 40.0 + 20.0 * t
        g = (zc - 50.0) / (zc + 50.0)
        den = 1.0 - g**2 * T**2
        s11 = g * (1.0 - T**2) / den
        s21 = T * (1.0 - g**2) / den
        h[:, m] = np.stack([np.stack([s11, s21], -1), np.stack([s21, s11], -1)], -2)
    return SampledDataset(f, thetas, h, "z_ratio")
