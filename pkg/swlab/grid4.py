"""Periodic chart of a 4-torus: grid description, fields, stencils and quadrature.

Every field stores its values as an array of shape ``grid.dims + comp_shape``;
the four grid axes always come first. Arrays are frozen after construction.
"""
import csv
import logging
import math
from dataclasses import dataclass

import h5py
import numpy as np

from .exceptions import FieldError

__author__ = "Johannes Kazantzidis"
__email__ = "johannes.kazantzidis@ess.eu"
__status__ = "Production"

log = logging.getLogger(__name__)

GRID_AXES = (0, 1, 2, 3)


@dataclass(frozen=True)
class GridSpec:
    """Structured periodic grid.

    Args:
        dims (tuple): Nodes per axis, at least 4 each.
        periods (tuple): Coordinate circumference per axis.
    """

    dims: tuple
    periods: tuple = (2 * math.pi,) * 4

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        periods = tuple(float(p) for p in self.periods)
        if len(dims) != 4 or len(periods) != 4:
            raise FieldError("a 4D grid needs 4 dims and 4 periods")
        if min(dims) < 4:
            raise FieldError("every axis needs at least 4 nodes, got {}".format(dims))
        if min(periods) <= 0 or not all(math.isfinite(p) for p in periods):
            raise FieldError("periods must be positive, got {}".format(periods))
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "periods", periods)

    @property
    def spacing(self):
        return np.array(self.periods) / np.array(self.dims)

    @property
    def n_nodes(self):
        return int(np.prod(self.dims))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def volume(self):
        """Flat coordinate volume of the chart."""
        return float(np.prod(self.periods))

    def coordinates(self):
        """Returns the four coordinate arrays, each of shape ``dims``."""
        axes = [np.arange(n) * h for n, h in zip(self.dims, self.spacing)]
        return np.meshgrid(*axes, indexing="ij")

    def refined(self, factor=2, axes=GRID_AXES):
        """Returns the grid with ``factor`` times more nodes along ``axes``."""
        dims = [n * factor if i in axes else n for i, n in enumerate(self.dims)]
        return GridSpec(tuple(dims), self.periods)


class Field:
    """Immutable samples of a quantity at every node of a grid."""

    comp_shape = ()
    dtype = np.float64

    def __init__(self, grid, values):
        values = np.array(values, dtype=self.dtype)
        expected = tuple(grid.dims) + tuple(self.comp_shape)
        if values.shape != expected:
            raise FieldError(
                "{} expects shape {}, got {}".format(
                    type(self).__name__, expected, values.shape
                )
            )
        if not np.all(np.isfinite(values)):
            bad = tuple(int(i) for i in np.argwhere(~np.isfinite(values))[0][:4])
            raise FieldError(
                "{} has non-finite values, first at node {}".format(
                    type(self).__name__, bad
                )
            )
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    def with_values(self, values):
        """Returns a field of the same kind on the same grid."""
        return type(self)(self.grid, values)

    def pointwise_norm(self):
        """Returns the Euclidean norm of the components at every node."""
        if not self.comp_shape:
            return np.abs(self.values)
        axes = tuple(range(4, self.values.ndim))
        return np.sqrt(np.sum(np.abs(self.values) ** 2, axis=axes))

    def _check_same_grid(self, other):
        if other.grid != self.grid:
            raise FieldError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, Field):
            self._check_same_grid(other)
            return self.with_values(self.values + other.values)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, Field):
            self._check_same_grid(other)
            return self.with_values(self.values - other.values)
        return NotImplemented

    def __mul__(self, other):
        if np.isscalar(other):
            return self.with_values(self.values * other)
        if isinstance(other, ScalarField):
            self._check_same_grid(other)
            return self.with_values(broadcast_scalar(other.values, self.values) * self.values)
        return NotImplemented

    def __rmul__(self, other):
        return self.__mul__(other)

    def __repr__(self):
        return "{}(dims={}, comp_shape={})".format(
            type(self).__name__, self.grid.dims, self.comp_shape
        )


class ScalarField(Field):
    pass


class TensorField(Field):
    """Rank ``r`` coordinate tensor with index range 0..3 per slot.

    Args:
        grid (GridSpec): Grid of the samples.
        values (array): Samples of shape ``dims + (4,) * rank``.
        rank (int): Number of tensor indices.
        symmetric (bool): Enforce symmetry of a rank 2 tensor.
    """

    def __init__(self, grid, values, rank, symmetric=False):
        self.rank = int(rank)
        self.comp_shape = (4,) * self.rank
        self.symmetric = symmetric
        super().__init__(grid, values)
        if symmetric:
            if self.rank != 2:
                raise FieldError("only rank 2 tensors carry a symmetry flag")
            scale = max(1.0, float(np.max(np.abs(self.values))))
            skew = np.max(np.abs(self.values - np.swapaxes(self.values, -1, -2)))
            if skew > 1e-12 * scale:
                raise FieldError("tensor is not symmetric (max skew {:.3e})".format(skew))

    def with_values(self, values):
        return TensorField(self.grid, values, self.rank, self.symmetric)


class OneFormField(TensorField):
    def __init__(self, grid, values):
        super().__init__(grid, values, rank=1)

    def with_values(self, values):
        return OneFormField(self.grid, values)


def broadcast_scalar(scalar, like):
    """Returns ``scalar`` (shape ``dims``) reshaped to broadcast against ``like``."""
    return scalar.reshape(scalar.shape + (1,) * (like.ndim - scalar.ndim))


def diff(values, axis, grid):
    """Fourth-order central difference of a raw array along a grid axis."""
    h = grid.spacing[axis]
    return (
        8.0 * (np.roll(values, -1, axis) - np.roll(values, 1, axis))
        - (np.roll(values, -2, axis) - np.roll(values, 2, axis))
    ) / (12.0 * h)


def grad(values, grid):
    """Returns all four partial derivatives, stacked right after the grid axes."""
    return np.stack([diff(values, axis, grid) for axis in GRID_AXES], axis=4)


def diff2(values, axis, grid):
    """Fourth-order central second difference of a raw array along a grid axis."""
    h = grid.spacing[axis]
    return (
        16.0 * (np.roll(values, -1, axis) + np.roll(values, 1, axis))
        - (np.roll(values, -2, axis) + np.roll(values, 2, axis))
        - 30.0 * values
    ) / (12.0 * h * h)


def hessian(values, grid):
    """Returns ``H[..., m, n, ...]`` = d_m d_n of a raw array.

    Pure second derivatives use the five-point stencil, mixed ones the product
    of two first differences, so ``H`` is symmetric in (m, n).
    """
    rows = []
    for m in GRID_AXES:
        first = diff(values, m, grid)
        row = [diff2(values, m, grid) if n == m else diff(first, n, grid) for n in GRID_AXES]
        rows.append(np.stack(row, axis=4))
    return np.stack(rows, axis=4)


def partial_derivative(field, axis):
    """Fourth-order periodic central difference of a field.

    Args:
        field (Field): Scalar or tensor field.
        axis (int): Coordinate axis 0..3.

    Returns:
        Field: Field of the same kind holding the derivative.
    """
    if axis not in GRID_AXES:
        raise FieldError("axis must be 0..3, got {}".format(axis))
    return field.with_values(diff(field.values, axis, field.grid))


def _check_volume(f, vol):
    if vol.grid != f.grid:
        raise FieldError("integrand and volume weight live on different grids")
    if np.any(vol.values <= 0):
        raise FieldError("volume weight must be strictly positive")


def integrate(f, vol):
    """Weighted Riemann sum ``sum(f * vol) * prod(h)``.

    Args:
        f (ScalarField): Integrand.
        vol (ScalarField): Samples of sqrt(det g).

    Returns:
        float: Approximation of the integral over the chart.
    """
    _check_volume(f, vol)
    return float(np.sum(f.values * vol.values) * f.grid.cell_volume)


def lp_norm(f, p, vol):
    """L2, L4 or L-infinity norm of the pointwise norm of a field.

    Args:
        f (Field): Any field; vector components are combined pointwise.
        p (int or float): 2, 4 or ``math.inf``.
        vol (ScalarField): Volume weight.
    """
    _check_volume(f, vol)
    pointwise = f.pointwise_norm()
    if p in (math.inf, "inf"):
        return float(np.max(pointwise))
    if p not in (2, 4):
        raise FieldError("p must be 2, 4 or inf, got {}".format(p))
    total = float(np.sum(pointwise ** p * vol.values) * f.grid.cell_volume)
    return total ** (1.0 / p)


def remove_doublers(values, grid):
    """Projects out Nyquist modes, which the central stencil maps to zero.

    Only axes with an even number of nodes carry such modes.
    """
    spectrum = np.fft.fftn(values, axes=GRID_AXES)
    for axis, n in enumerate(grid.dims):
        if n % 2 == 0:
            index = [slice(None)] * spectrum.ndim
            index[axis] = n // 2
            spectrum[tuple(index)] = 0.0
    result = np.fft.ifftn(spectrum, axes=GRID_AXES)
    if np.isrealobj(values):
        return result.real
    return result


def write_fields(path, grid, **fields):
    """Writes fields into an HDF5 container with the grid as attributes."""
    with h5py.File(path, "w") as f:
        f.attrs["dims"] = np.array(grid.dims)
        f.attrs["periods"] = np.array(grid.periods)
        for name, field in fields.items():
            data = field.values if isinstance(field, Field) else np.asarray(field)
            f.create_dataset(name, data=data)
    log.debug("wrote %d fields to %s", len(fields), path)


def read_fields(path):
    """Reads a container written by ``write_fields``.

    Returns:
        tuple: ``(GridSpec, dict of name -> array)``.
    """
    with h5py.File(path, "r") as f:
        grid = GridSpec(tuple(f.attrs["dims"]), tuple(f.attrs["periods"]))
        data = {name: f[name][()] for name in f.keys()}
    return grid, data


def write_csv(path, grid, field):
    """Writes one row per node: flat index, four grid indices, components.

    Args:
        field (Field or array): Samples whose leading axes are ``grid.dims``.
    """
    data = field.values if isinstance(field, Field) else np.asarray(field)
    if tuple(data.shape[:4]) != grid.dims:
        raise FieldError("csv export needs the grid axes first, got shape {}".format(data.shape))
    flat = data.reshape(grid.n_nodes, -1)
    indices = np.indices(grid.dims).reshape(4, -1).T
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        header = ["node", "i0", "i1", "i2", "i3"]
        header += ["c{}".format(k) for k in range(flat.shape[1])]
        writer.writerow(header)
        for node, (idx, row) in enumerate(zip(indices, flat)):
            writer.writerow([node] + [int(i) for i in idx] + [repr(float(v)) for v in row])
    log.debug("wrote %d rows to %s", flat.shape[0], path)
