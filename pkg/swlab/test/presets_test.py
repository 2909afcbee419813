import math

import numpy as np
import pytest
import sympy

from swlab.exceptions import ExpressionError, FieldError
from swlab.grid4 import GridSpec, write_fields
from swlab.presets import (
    TrigExpression,
    metric_preset,
    random_smooth_connection,
    random_smooth_selfdual,
    random_smooth_spinor,
    theta_preset,
)

__author__ = "Johannes Kazantzidis"
__email__ = "johannes.kazantzidis@ess.eu"
__status__ = "Production"


def test_expression_matches_numpy(grid4):
    x = grid4.coordinates()
    value = TrigExpression("0.1*cos(x1) + 0.05*sin(x0 + 2*x3)").evaluate(grid4)
    assert np.allclose(value, 0.1 * np.cos(x[1]) + 0.05 * np.sin(x[0] + 2 * x[3]))


def test_expression_powers_and_pi(grid4):
    value = TrigExpression("sin(x0)**2 + cos(x0)**2 - pi/pi").evaluate(grid4)
    assert np.allclose(value, 0.0)


def test_constant_expression_fills_the_grid(grid4):
    value = TrigExpression("-2.5").evaluate(grid4)
    assert value.shape == grid4.dims
    assert np.all(value == -2.5)


@pytest.mark.parametrize(
    "text",
    ["x0 + 1", "exp(x0)", "sin(x0)**0.5", "cos(x1", "__import__('os')", "sin(x0, x1)", "y + 1", "'a'"],
)
def test_rejected_expressions(text):
    with pytest.raises(ExpressionError):
        TrigExpression(text)


def test_error_names_line_and_column():
    with pytest.raises(ExpressionError) as e:
        TrigExpression("1 + x2")
    assert e.value.line == 1
    assert e.value.column == 5
    assert str(e.value).startswith("line 1, column 5:")


def test_division_by_zero_is_reported(grid4):
    with pytest.raises(ExpressionError):
        TrigExpression("1/(cos(x0) - cos(x0))").evaluate(grid4)


def test_undefined_expression_fails_when_parsed():
    with pytest.raises(ExpressionError) as e:
        TrigExpression("1/(cos(x0) - cos(x0))")
    assert "zoo" in str(e.value)


def test_division_by_zero_at_a_node(grid4):
    with pytest.raises(ExpressionError):
        TrigExpression("1/sin(x0)").evaluate(grid4)


def test_expression_is_collected_symbolically(grid4):
    expr = TrigExpression("2*cos(x1) - cos(x1) + 0*sin(x0)")
    assert expr.expr == sympy.cos(sympy.Symbol("x1", real=True))
    assert np.array_equal(expr.evaluate(grid4), np.cos(grid4.coordinates()[1]))


def test_constant_expression_fills_the_grid(grid4):
    values = TrigExpression("pi/4").evaluate(grid4)
    assert values.shape == grid4.dims
    assert np.all(values == math.pi / 4)


def test_metric_presets(grid4):
    assert metric_preset("flat", grid4).is_flat
    conformal = metric_preset("conformal: 0.1*cos(x1)", grid4)
    assert np.allclose(conformal.g[..., 0, 0], np.exp(0.2 * np.cos(grid4.coordinates()[1])))
    product = metric_preset("kaehler-product:0.1*cos(x2)", grid4)
    assert np.allclose(product.g[..., 0, 0], 1.0)
    with pytest.raises(FieldError):
        metric_preset("round", grid4)


def test_metric_from_file(tmp_path, grid4):
    path = str(tmp_path / "metric.h5")
    g = np.broadcast_to(np.diag([1.0, 2.0, 1.0, 1.0]), grid4.dims + (4, 4)).copy()
    write_fields(path, grid4, g=g)
    m = metric_preset("file:" + path, grid4)
    assert np.allclose(m.vol.values, math.sqrt(2.0))
    with pytest.raises(FieldError):
        metric_preset("file:" + path, GridSpec((4, 4, 4, 8)))


def test_theta_presets(flat4):
    assert theta_preset("const:0.5", flat4).is_constant
    coord = theta_preset("coord:2", flat4)
    assert np.allclose(coord.s.values, np.sin(flat4.grid.coordinates()[2]))
    expr = theta_preset("expr:0.3*sin(x1)", flat4)
    assert np.allclose(expr.c.values, np.cos(0.3 * np.sin(flat4.grid.coordinates()[1])))
    for bad in ("coord:7", "winding:1"):
        with pytest.raises(FieldError):
            theta_preset(bad, flat4)


def test_theta_from_file(tmp_path, flat4):
    path = str(tmp_path / "theta.h5")
    write_fields(path, flat4.grid, theta=np.full(flat4.grid.dims, 0.25))
    assert np.allclose(theta_preset("file:" + path, flat4).s.values, math.sin(0.25))


def test_random_fields_are_reproducible(grid4):
    a = random_smooth_spinor(grid4, np.random.default_rng(7))
    b = random_smooth_spinor(grid4, np.random.default_rng(7))
    assert np.array_equal(a.values, b.values)


def test_random_fields_respect_axes(line_grid, rng):
    for field in (
        random_smooth_spinor(line_grid, rng, axes=(0,)),
        random_smooth_connection(line_grid, rng, axes=(0,)),
        random_smooth_selfdual(line_grid, rng, axes=(0,)),
    ):
        values = field.values
        assert np.max(np.abs(values - values[:, :1, :1, :1])) == 0.0
