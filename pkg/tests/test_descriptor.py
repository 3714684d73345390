import numpy as np
import pytest

from parampass.descriptor import build_descriptor, eval_descriptor_tf, model_poles, split_finite_eigs
from parampass.fixtures import first_order_model, random_model, resonant_two_port
from parampass.model import ParamBasis, ParamModel, PoleSet


def test_first_order_blocks():
    real = build_descriptor(first_order_model(2.0), 0.5)
    np.testing.assert_array_equal(real.E, np.diag([1.0, 0.0]))
    np.testing.assert_array_equal(real.A, [[-1.0, 1.0], [0.0, 1.0]])
    np.testing.assert_array_equal(real.B, [[0.0], [-1.0]])
    np.testing.assert_array_equal(real.C, [[2.0, 0.0]])
    assert real.n_states == 1 and real.ports == 1


def test_first_order_transfer():
    real = build_descriptor(first_order_model(2.0), 0.5)
    np.testing.assert_allclose(eval_descriptor_tf(real, 0j), [[2.0]])
    np.testing.assert_allclose(eval_descriptor_tf(real, 1j), [[2 / (1 + 1j)]])


@pytest.mark.parametrize("seed", range(5))
def test_descriptor_matches_rational_form(seed):
    rng = np.random.default_rng(seed)
    m = random_model(seed, ports=2, n_poles=5, n_param=3)
    for _ in range(20):
        theta = rng.uniform(0, 1)
        s = complex(rng.normal(scale=0.2), rng.uniform(-2, 2))
        ref = m.transfer([s], theta)[0]
        got = eval_descriptor_tf(build_descriptor(m, theta), s)
        assert np.linalg.norm(got - ref) <= 1e-10 * np.linalg.norm(ref)


def test_poles_of_constant_denominator_are_basis_poles():
    m = resonant_two_port()
    p = np.sort_complex(model_poles(m, 0.3))
    expected = np.sort_complex(np.repeat(m.poles.as_complex(), 2))
    np.testing.assert_allclose(p, expected, atol=1e-9)


def test_first_order_pole():
    np.testing.assert_allclose(model_poles(first_order_model(1.0), 0.0), [-1.0], atol=1e-12)


def test_unstable_denominator_zero_found():
    # D(s) = 1 - 2/(s + 1) = (s - 1)/(s + 1)
    m = ParamModel(PoleSet([-1.0]), ParamBasis(), np.zeros((2, 1, 1, 1)), [[1.0], [-2.0]], 1.0)
    np.testing.assert_allclose(model_poles(m, 0.5), [1.0], atol=1e-12)


def test_split_finite_eigs_counts_infinite():
    a = np.diag([1.0, 2.0, 3.0])
    b = np.diag([1.0, 1.0, 0.0])
    lam, n_inf = split_finite_eigs(a, b)
    np.testing.assert_allclose(np.sort(lam.real), [1.0, 2.0])
    assert n_inf == 1
