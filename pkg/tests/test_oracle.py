import ast
import math
from pathlib import Path

import numpy as np
import pytest

import parampass.oracle as oracle_mod
from parampass.fixtures import first_order_model, linear_theta_model, random_model, scale_to_peak
from parampass.oracle import dense_sweep_oracle, frequency_grid, unit_crossings


def test_oracle_does_not_depend_on_pencil_code():
    tree = ast.parse(Path(oracle_mod.__file__).read_text())
    mods = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            mods.add(node.module or "")
        elif isinstance(node, ast.Import):
            mods.update(a.name for a in node.names)
    assert not any("passivity" in m or "descriptor" in m for m in mods)


def test_first_order_c2():
    res = dense_sweep_oracle(first_order_model(2.0), 2048, 11)
    assert res.max_sigma == 2.0 and res.omega_at_max == 0.0
    assert not res.passed
    w = frequency_grid(first_order_model(2.0), 2048, 10.0)
    step = w[np.searchsorted(w, math.sqrt(3))] - w[np.searchsorted(w, math.sqrt(3)) - 1]
    for c in res.crossings:
        assert c.size == 1 and abs(c[0] - math.sqrt(3)) <= step * 2.0**-9


def test_first_order_passive():
    res = dense_sweep_oracle(first_order_model(0.5), 256, 5)
    assert res.passed and res.max_sigma == pytest.approx(0.5)
    assert all(c.size == 0 for c in res.crossings)


def test_linear_theta_max_at_top_of_range():
    res = dense_sweep_oracle(linear_theta_model(), 512, 11)
    assert res.max_sigma == pytest.approx(1.5) and res.theta_at_max == 1.5


def test_asymptotic_value_enters_verdict():
    m = first_order_model(-0.5)
    from parampass.model import ParamModel

    R = m.num_coeffs.copy()
    R[0, 0, 0, 0] = 1.5
    res = dense_sweep_oracle(ParamModel(m.poles, m.pbasis, R, m.den_coeffs, 1.0), 64, 3, f_max_mult=2.0)
    assert res.sigma_inf == pytest.approx(1.5) and not res.passed


def test_crossings_on_lower_singular_values():
    # two diagonal entries, both crossing one at different frequencies
    from parampass.model import ParamModel

    m = first_order_model(1.0)
    R = np.zeros((2, 1, 2, 2))
    R[1, 0] = np.diag([3.0, 2.0])
    m2 = ParamModel(m.poles, m.pbasis, R, m.den_coeffs, 1.0)
    c = unit_crossings(m2, 0.5, frequency_grid(m2, 1024, 10.0))
    np.testing.assert_allclose(c, [math.sqrt(3), math.sqrt(8)], rtol=1e-4)


def test_grid_size_validation():
    with pytest.raises(ValueError):
        dense_sweep_oracle(first_order_model(1.0), 1, 5)


def test_scale_to_peak():
    m = scale_to_peak(random_model(2, 2, 4, 2), 1.1)
    assert dense_sweep_oracle(m, 2048, 101, crossings=False).max_sigma <= 1.1 + 1e-9
