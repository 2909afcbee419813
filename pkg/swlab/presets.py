"""Preset metrics, angle fields and test configurations, and the expression language
used to describe them.

Expressions are trigonometric polynomials in the coordinates x0..x3:

    expr := number | pi | expr (+ | - | * | /) expr | -expr | expr ** integer
          | sin(arg) | cos(arg)
    arg  := any expression that may also use x0, x1, x2, x3

Coordinates may appear only inside sin/cos so every expression is periodic
when the arguments are integer combinations of the coordinates.
"""
import ast
import logging
import math

import numpy as np
import sympy
from sympy.parsing.sympy_parser import parse_expr

from .curvature import build_metric, conformal_metric, flat_metric, kaehler_product_metric
from .exceptions import ExpressionError, FieldError
from .grid4 import GRID_AXES, OneFormField, TensorField, read_fields
from .lambda_k import constant_theta, theta_from_angle
from .selfdual_forms import SelfDualField
from .spinc_algebra import SpinorField, U1Connection

__author__ = "Johannes Kazantzidis"
__email__ = "johannes.kazantzidis@ess.eu"
__status__ = "Production"

log = logging.getLogger(__name__)

_FUNCTIONS = ("sin", "cos")
_BINARY = (ast.Add, ast.Sub, ast.Mult, ast.Div)
_COORDINATES = sympy.symbols("x0 x1 x2 x3", real=True)
_NAMESPACE = dict(
    {str(x): x for x in _COORDINATES},
    sin=sympy.sin,
    cos=sympy.cos,
    pi=sympy.pi,
    Integer=sympy.Integer,
    Float=sympy.Float,
    Rational=sympy.Rational,
    Symbol=sympy.Symbol,
)


class TrigExpression:
    """Parsed trigonometric polynomial.

    Args:
        text (str): Source, e.g. ``"0.1*cos(x1) + 0.05*sin(x0 + 2*x3)"``.

    Raises:
        ExpressionError: Carries the line and 1-based column of the offending token.
    """

    def __init__(self, text):
        self.text = text
        try:
            tree = ast.parse(text.strip(), mode="eval")
        except SyntaxError as e:
            raise ExpressionError(e.msg, e.lineno or 1, e.offset or 0)
        self._check(tree.body, inside=False)
        self.expr = parse_expr(text.strip(), local_dict=dict(_NAMESPACE), global_dict={})
        if self.expr.has(sympy.zoo, sympy.oo, -sympy.oo, sympy.nan):
            raise ExpressionError("{!r} simplifies to {}".format(text, self.expr))
        self._func = sympy.lambdify(_COORDINATES, self.expr, "numpy")

    def _fail(self, node, message):
        raise ExpressionError(message, getattr(node, "lineno", 1), getattr(node, "col_offset", -1) + 1)

    def _check(self, node, inside):
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                self._fail(node, "only numeric constants are allowed")
        elif isinstance(node, ast.Name):
            if node.id == "pi":
                return
            if node.id in ("x0", "x1", "x2", "x3"):
                if not inside:
                    self._fail(node, "coordinate {} must appear inside sin or cos".format(node.id))
                return
            self._fail(node, "unknown name {!r}".format(node.id))
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd)):
                self._fail(node, "unsupported unary operator")
            self._check(node.operand, inside)
        elif isinstance(node, ast.BinOp):
            if isinstance(node.op, ast.Pow):
                exponent = node.right
                if not (isinstance(exponent, ast.Constant) and isinstance(exponent.value, int)
                        and exponent.value >= 0):
                    self._fail(exponent, "exponents must be nonnegative integers")
                self._check(node.left, inside)
                return
            if type(node.op) not in _BINARY:
                self._fail(node, "unsupported operator")
            self._check(node.left, inside)
            self._check(node.right, inside)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
                self._fail(node, "only sin and cos may be called")
            if len(node.args) != 1 or node.keywords:
                self._fail(node, "{} takes exactly one argument".format(node.func.id))
            self._check(node.args[0], inside=True)
        else:
            self._fail(node, "unsupported syntax {}".format(type(node).__name__))

    def evaluate(self, grid):
        """Samples the expression at every node; returns an array of shape ``dims``."""
        coords = grid.coordinates()
        with np.errstate(divide="raise", invalid="raise"):
            try:
                value = self._func(*coords)
            except (FloatingPointError, ZeroDivisionError) as e:
                raise ExpressionError(str(e))
        value = np.broadcast_to(np.asarray(value, dtype=float), grid.dims).copy()
        if not np.all(np.isfinite(value)):
            raise ExpressionError("{!r} is not finite on the grid".format(self.text))
        return value

    def __repr__(self):
        return "TrigExpression({!r})".format(self.text)


def _split(spec):
    kind, _, arg = spec.partition(":")
    return kind.strip(), arg.strip()


def metric_preset(spec, grid):
    """Builds a metric from ``flat``, ``conformal:EXPR``, ``kaehler-product:EXPR`` or ``file:PATH``.

    A file must hold a dataset ``g`` of shape ``dims + (4, 4)`` on the same grid.
    """
    kind, arg = _split(spec)
    if kind == "flat":
        return flat_metric(grid)
    if kind == "conformal":
        return conformal_metric(grid, TrigExpression(arg).evaluate(grid))
    if kind == "kaehler-product":
        return kaehler_product_metric(grid, TrigExpression(arg).evaluate(grid))
    if kind == "file":
        file_grid, data = read_fields(arg)
        if file_grid != grid:
            raise FieldError("metric file grid {} differs from {}".format(file_grid.dims, grid.dims))
        if "g" not in data:
            raise FieldError("metric file {} has no dataset 'g'".format(arg))
        return build_metric(TensorField(grid, data["g"], 2, symmetric=True))
    raise FieldError("unknown metric preset {!r}".format(spec))


def theta_preset(spec, m):
    """Angle field from ``const:VALUE``, ``coord:AXIS``, ``expr:EXPR`` or ``file:PATH``.

    ``coord:k`` is the angle 2 pi x_k / P_k, which winds once around axis k.
    """
    kind, arg = _split(spec)
    grid = m.grid
    if kind == "const":
        return constant_theta(m, float(arg or 0.0))
    if kind == "coord":
        axis = int(arg)
        if axis not in GRID_AXES:
            raise FieldError("axis must be 0..3, got {}".format(axis))
        return theta_from_angle(2.0 * math.pi * grid.coordinates()[axis] / grid.periods[axis], m)
    if kind == "expr":
        return theta_from_angle(TrigExpression(arg).evaluate(grid), m)
    if kind == "file":
        file_grid, data = read_fields(arg)
        if file_grid != grid or "theta" not in data:
            raise FieldError("theta file {} does not match the grid or lacks 'theta'".format(arg))
        return theta_from_angle(data["theta"], m)
    raise FieldError("unknown theta preset {!r}".format(spec))


def _random_trig(grid, rng, n_modes, max_wave=1, axes=GRID_AXES):
    """Sum of a few sin/cos modes with integer wave vectors and random amplitudes."""
    coords = grid.coordinates()
    out = np.zeros(grid.dims)
    for _ in range(n_modes):
        k = rng.integers(-max_wave, max_wave + 1, size=4) * np.isin(GRID_AXES, axes)
        phase = sum(2.0 * math.pi * k[i] * coords[i] / grid.periods[i] for i in GRID_AXES)
        out = out + rng.normal() * np.cos(phase) + rng.normal() * np.sin(phase)
    return out


def random_smooth_spinor(grid, rng, n_modes=3, offset=(1.0, 0.0), amplitude=0.2, axes=GRID_AXES):
    """Low-frequency spinor ``offset + amplitude * (random modes)``."""
    values = np.zeros(grid.dims + (2,), dtype=complex)
    for k in range(2):
        values[..., k] = offset[k] + amplitude * (
            _random_trig(grid, rng, n_modes, axes=axes) + 1j * _random_trig(grid, rng, n_modes, axes=axes)
        )
    return SpinorField(grid, values)


def random_smooth_connection(grid, rng, n_modes=2, amplitude=0.2, axes=GRID_AXES):
    a = np.stack([amplitude * _random_trig(grid, rng, n_modes, axes=axes) for _ in GRID_AXES], axis=-1)
    return U1Connection(OneFormField(grid, a))


def random_smooth_selfdual(grid, rng, n_modes=3, offset=(1.0, 0.0, 0.0), amplitude=0.3, axes=GRID_AXES):
    values = np.stack(
        [offset[a] + amplitude * _random_trig(grid, rng, n_modes, axes=axes) for a in range(3)], axis=-1
    )
    return SelfDualField(grid, values)
