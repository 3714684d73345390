import json
import math

import numpy as np
import pytest

from parampass.fixtures import first_order_model, linear_theta_model, random_model
from parampass.model import (
    INF,
    CoeffPerturbation,
    ParamBasis,
    ParamModel,
    PoleSet,
    SingularEvaluationError,
    apply_perturbation,
    eval_freq_basis,
    eval_param_basis,
    eval_perturbation,
    eval_transfer,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
)


def test_freq_basis_real_pole_at_dc():
    np.testing.assert_allclose(eval_freq_basis(PoleSet([-1.0]), 0j), [1, 1])


def test_freq_basis_complex_pair_at_dc():
    # g1 = 1/(0 - p), g2 = 1/(0 - p*), p = -1 + 2j
    p = -1 + 2j
    g1, g2 = 1 / (0 - p), 1 / (0 - p.conjugate())
    phi = eval_freq_basis(PoleSet([], [(-1.0, 2.0)]), 0j)
    np.testing.assert_allclose(phi, [1, (g1 + g2).real, (1j * g1 - 1j * g2).real], atol=1e-15)
    np.testing.assert_allclose(phi, [1, 0.4, -0.8], atol=1e-15)


def test_freq_basis_is_real_on_real_axis_and_conjugate_symmetric(rng):
    poles = PoleSet([-0.3, -2.0], [(-0.1, 1.0), (-0.5, 3.0)])
    for _ in range(10):
        s = complex(rng.normal(), rng.normal())
        np.testing.assert_allclose(eval_freq_basis(poles, s.conjugate()), eval_freq_basis(poles, s).conj())
    assert np.all(eval_freq_basis(poles, 0.7).imag == 0)


def test_freq_basis_at_infinity():
    np.testing.assert_array_equal(eval_freq_basis(PoleSet([-1.0]), INF), [1, 0])


def test_freq_basis_at_pole_raises():
    with pytest.raises(SingularEvaluationError):
        eval_freq_basis(PoleSet([-1.0]), -1.0 + 0j)


@pytest.mark.parametrize(
    "real, cplx",
    [([0.0], []), ([1.0], []), ([], [(0.0, 1.0)]), ([], [(-1.0, 0.0)]), ([-1.0, -1.0], [])],
)
def test_poleset_rejects_invalid(real, cplx):
    with pytest.raises(ValueError):
        PoleSet(real, cplx)


def test_chebyshev_basis_values():
    pb = ParamBasis("chebyshev", 4, 2.0, 4.0)
    x = 0.5  # theta = 3.5
    np.testing.assert_allclose(eval_param_basis(pb, 3.5), [1, x, 2 * x**2 - 1, 4 * x**3 - 3 * x])
    np.testing.assert_allclose(eval_param_basis(pb, 2.0), [1, -1, 1, -1])


def test_monomial_and_trig_basis():
    pb = ParamBasis("monomial", 3, -1.0, 1.0)
    np.testing.assert_allclose(eval_param_basis(pb, 0.5), [1, 0.5, 0.25])
    tb = ParamBasis("trigonometric", 3, -1.0, 1.0)
    np.testing.assert_allclose(eval_param_basis(tb, 1.0), [1, 0, 1], atol=1e-15)


def test_param_basis_outside_domain_warns():
    pb = ParamBasis("chebyshev", 2, 0.0, 1.0)
    with pytest.warns(UserWarning):
        eval_param_basis(pb, 1.5)


def test_param_basis_invalid():
    with pytest.raises(ValueError):
        ParamBasis("chebyshev", 0, 0.0, 1.0)
    with pytest.raises(ValueError):
        ParamBasis("chebyshev", 2, 1.0, 1.0)


def test_transfer_first_order():
    m = first_order_model(2.0)
    for w in [0.0, 0.5, 3.0]:
        np.testing.assert_allclose(eval_transfer(m, 1j * w, 0.3)[0, 0], 2 / (1j * w + 1))
    assert eval_transfer(m, INF, 0.3)[0, 0] == 0


def test_transfer_linear_theta():
    m = linear_theta_model()
    for theta in [0.5, 0.8, 1.5]:
        np.testing.assert_allclose(m.transfer([0j, 1j], theta)[:, 0, 0], [theta, theta / (1 + 1j)])


def test_transfer_at_infinity_is_ratio_of_constant_terms():
    m = random_model(3, ports=2, n_poles=4, n_param=3)
    theta = 0.37
    expected = m.num_at(theta)[0] / m.den_at(theta)[0]
    np.testing.assert_allclose(eval_transfer(m, INF, theta), expected)


def test_model_requires_normalized_denominator():
    m = first_order_model(1.0)
    with pytest.raises(ValueError):
        ParamModel(m.poles, m.pbasis, m.num_coeffs, 2 * m.den_coeffs, m.freq_scale_hz)
    with pytest.raises(ValueError):
        ParamModel(m.poles, m.pbasis, m.num_coeffs[:1], m.den_coeffs, m.freq_scale_hz)


def test_model_is_immutable():
    m = first_order_model(1.0)
    with pytest.raises(ValueError):
        m.num_coeffs[0, 0, 0, 0] = 1.0


def test_vanishing_denominator_raises():
    # D(s) = 1 - 1/(s + 1) vanishes at s = 0
    m = first_order_model(1.0)
    r = np.array([[1.0], [-1.0]])
    bad = ParamModel(m.poles, m.pbasis, m.num_coeffs, r, m.freq_scale_hz)
    with pytest.raises(SingularEvaluationError):
        bad.transfer([0j], 0.5)


def test_perturbation_linearity(rng):
    m = random_model(5, ports=2, n_poles=4, n_param=2)
    d1 = CoeffPerturbation(rng.normal(size=m.num_coeffs.shape))
    d2 = CoeffPerturbation(rng.normal(size=m.num_coeffs.shape))
    s, theta = 0.4j, 0.6
    lhs = eval_perturbation(m, CoeffPerturbation(d1.delta_num + 2 * d2.delta_num), s, theta)
    rhs = eval_perturbation(m, d1, s, theta) + 2 * eval_perturbation(m, d2, s, theta)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)
    np.testing.assert_allclose(eval_perturbation(m, -d1, s, theta), -eval_perturbation(m, d1, s, theta))


def test_apply_perturbation_matches_sum(rng):
    m = random_model(6, ports=2, n_poles=3, n_param=2)
    d = CoeffPerturbation(1e-2 * rng.normal(size=m.num_coeffs.shape))
    m2 = apply_perturbation(m, d)
    s, theta = 0.9j, 0.2
    np.testing.assert_allclose(
        eval_transfer(m2, s, theta), eval_transfer(m, s, theta) + eval_perturbation(m, d, s, theta), rtol=1e-12
    )
    np.testing.assert_array_equal(m2.den_coeffs, m.den_coeffs)
    zero = apply_perturbation(m, CoeffPerturbation.zeros_like(m))
    np.testing.assert_array_equal(zero.num_coeffs, m.num_coeffs)


def test_perturbation_shape_mismatch():
    m = random_model(6, ports=2, n_poles=3, n_param=2)
    with pytest.raises(ValueError):
        apply_perturbation(m, CoeffPerturbation(np.zeros((1, 1, 2, 2))))


def test_frequency_scaling_preserves_response():
    m = random_model(8, ports=2, n_poles=5, n_param=2)
    a = 37.0
    ms = m.frequency_scaled(a)
    for w in [0.0, 0.3, 1.7]:
        np.testing.assert_allclose(ms.transfer([1j * a * w], 0.4), m.transfer([1j * w], 0.4), rtol=1e-12)


def test_s_from_hz():
    m = ParamModel(PoleSet([-1.0]), ParamBasis(), np.zeros((2, 1, 1, 1)), [[1.0], [0.0]], 5e9)
    np.testing.assert_allclose(m.s_from_hz([5e9, 2.5e9]), [1j, 0.5j])


def test_json_roundtrip_is_lossless(tmp_path):
    m = random_model(11, ports=2, n_poles=5, n_param=3)
    path = tmp_path / "m.json"
    save_model(m, path)
    m2 = load_model(path)
    np.testing.assert_array_equal(m2.num_coeffs, m.num_coeffs)
    np.testing.assert_array_equal(m2.den_coeffs, m.den_coeffs)
    np.testing.assert_array_equal(m2.poles.complex_poles, m.poles.complex_poles)
    assert m2.pbasis == m.pbasis and m2.freq_scale_hz == m.freq_scale_hz
    doc = json.loads(path.read_text())
    assert doc["version"] == 1 and doc["ports"] == 2
    assert doc["num_coeffs_order"] == "n,l,i,j"


def test_model_from_dict_rejects_unknown_version():
    doc = model_to_dict(first_order_model(1.0))
    doc["version"] = 99
    with pytest.raises(ValueError):
        model_from_dict(doc)


def test_freq_scale_property():
    m = first_order_model(1.0)
    assert math.isclose(m.freq_scale, 1.0)
