import numpy as np
import pytest

from layercrest.weights import (
    WeightError,
    build_weight,
    check_positive,
    constant_weight,
    expression_weight,
    power_weight,
)


def test_expression_values_and_gradient(rng):
    w = expression_weight("2 + x1^2*x2 + sin(x2) + exp(0.1*x1)")
    x = rng.uniform(-1, 1, (20, 2))
    f = 2 + x[:, 0] ** 2 * x[:, 1] + np.sin(x[:, 1]) + np.exp(0.1 * x[:, 0])
    assert np.allclose(w(x), f)
    h = 1e-6
    fd = np.column_stack([(w(x + [h, 0]) - w(x - [h, 0])) / (2 * h), (w(x + [0, h]) - w(x - [0, h])) / (2 * h)])
    assert np.allclose(w.grad(x), fd, atol=1e-7)
    assert np.allclose(w.gamma(x), w.grad(x) / w(x)[:, None])


def test_power_weight():
    w = power_weight(3)
    x = np.array([[2.0, 5.0]])
    assert w(x)[0] == pytest.approx(4.0)
    assert np.allclose(w.grad(x), [[4.0, 0.0]])
    assert w.kind == "power"


def test_constant_weight():
    w = constant_weight(2.5)
    assert w.is_constant
    assert np.allclose(w.grad(np.zeros((3, 2))), 0)


@pytest.mark.parametrize("expr", ["2 + ", "x3 + 1", "import os", "2 ** x1", "(1 + x1"])
def test_bad_expressions(expr):
    with pytest.raises(WeightError):
        expression_weight(expr)


def test_build_and_positivity(disk):
    w = build_weight({"kind": "expression", "expression": "0.5 - x1"})
    with pytest.raises(WeightError):
        check_positive(w, disk)
    assert check_positive(build_weight({"kind": "constant"}), disk) == pytest.approx(1.0)
    with pytest.raises(WeightError):
        build_weight({"kind": "spline"})
    # power weights need x1 > 0 on the whole domain
    with pytest.raises(WeightError):
        check_positive(power_weight(2), disk)
