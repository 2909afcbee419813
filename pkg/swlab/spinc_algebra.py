"""Spin^c algebra on a flat chart: Clifford model, sigma map, coupled Dirac operator.

Conventions (all fixed here, used everywhere):

* tau = (1, i s1, i s2, i s3) with s the Pauli matrices.
* gamma(e^i) = [[0, -tau_i^+], [tau_i, 0]] acting on W+ (+) W-.
* Lambda+ acts on W+ by rho(eta_a) = -sqrt(2) i s_a.
* sigma(Phi)_a = Phi^* s_a Phi / (2 sqrt 2), so |sigma|^2 = |Phi|^4 / 8.
* The spinor derivative is d + i a for a real 1-form a. The determinant line then
  has iF = -2 da, and iF+ = -2 (da)+.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .curvature import ETA, flat_metric
from .exceptions import FieldError, UnsupportedConfiguration
from .grid4 import (
    Field,
    OneFormField,
    ScalarField,
    broadcast_scalar,
    grad,
    integrate,
)
from .selfdual_forms import (
    IdentityCheck,
    SelfDualField,
    TwoFormField,
    exterior_derivative,
    matrix_to_six,
    project,
)

__author__ = "Johannes Kazantzidis"
__email__ = "johannes.kazantzidis@ess.eu"
__status__ = "Production"

log = logging.getLogger(__name__)

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
TAU = np.concatenate([np.eye(2, dtype=complex)[None], 1j * PAULI])


def _gamma_matrices():
    gamma = np.zeros((4, 4, 4), dtype=complex)
    for i in range(4):
        gamma[i, :2, 2:] = -TAU[i].conj().T
        gamma[i, 2:, :2] = TAU[i]
    return gamma


GAMMA = _gamma_matrices()


def _rho_of_two_form(form):
    """Action on W+ of a frame 2-form given as an antisymmetric 4x4 matrix."""
    products = np.einsum("Aij,Bjk->ABik", GAMMA, GAMMA)[..., :2, :2]
    return 0.5 * np.einsum("AB,ABik->ik", form, products)


RHO_ETA = np.array([_rho_of_two_form(eta) for eta in ETA])

# |sigma(e1)|^2 = 1/8 for the first basis spinor
_RAW_E1 = np.real(np.einsum("i,aij,j->a", [1, 0], 1j * RHO_ETA, [1, 0]))
SIGMA_SCALE = math.sqrt(1.0 / 8.0) / float(np.linalg.norm(_RAW_E1))


@dataclass
class CliffordModel:
    """Constant gamma matrices with the induced Lambda+ action on W+."""

    gamma: np.ndarray = field(default_factory=lambda: GAMMA.copy())
    rho_eta: np.ndarray = field(default_factory=lambda: RHO_ETA.copy())

    def check(self):
        """Returns the largest deviation of each algebraic identity.

        Returns:
            dict: ``clifford``, ``trace_free``, ``anti_hermitian``, ``quaternion`` and
            ``chirality`` deviations, all zero up to rounding for a valid model.
        """
        eye = np.eye(4)
        clifford = max(
            np.max(np.abs(self.gamma[i] @ self.gamma[j] + self.gamma[j] @ self.gamma[i] + 2 * eye[i, j] * eye))
            for i in range(4)
            for j in range(4)
        )
        rho = self.rho_eta
        trace_free = np.max(np.abs(np.trace(rho, axis1=1, axis2=2)))
        anti_hermitian = np.max(np.abs(rho + np.conj(np.swapaxes(rho, 1, 2))))
        quaternion = max(
            np.max(np.abs(rho[a] @ rho[b] + rho[b] @ rho[a] + 4.0 * eye[a, b] * np.eye(2)))
            for a in range(3)
            for b in range(3)
        )
        chirality = max(
            np.max(np.abs(self.gamma[i][:2, :2])) + np.max(np.abs(self.gamma[i][2:, 2:]))
            for i in range(4)
        )
        return {
            "clifford": float(clifford),
            "trace_free": float(trace_free),
            "anti_hermitian": float(anti_hermitian),
            "quaternion": float(quaternion),
            "chirality": float(chirality),
        }

    def is_valid(self, tol=1e-12):
        return all(v <= tol for v in self.check().values())


class SpinorField(Field):
    """Section of W+ in the trivialization of the flat chart."""

    comp_shape = (2,)
    dtype = np.complex128


class NegativeSpinorField(Field):
    comp_shape = (2,)
    dtype = np.complex128


class U1Connection:
    """Connection d + i a on the spinor bundle.

    Args:
        a (OneFormField): Real connection 1-form.
    """

    def __init__(self, a):
        if not isinstance(a, OneFormField):
            a = OneFormField(a.grid, a.values)
        self.a = a
        self.grid = a.grid

    @classmethod
    def trivial(cls, grid):
        return cls(OneFormField(grid, np.zeros(grid.dims + (4,))))

    @property
    def curv(self):
        """F = da as a coordinate 2-form."""
        return TwoFormField(self.grid, matrix_to_six(exterior_derivative(self.a.values, 1, self.grid)))

    def curv_plus(self, m=None):
        """iF+ = -2 (da)+ as a self-dual field."""
        if m is None:
            m = flat_metric(self.grid)
        return project(self.curv, m) * -2.0

    def closedness_defect(self):
        """max |dF|, zero up to the stencil's truncation error."""
        d_curv = exterior_derivative(self.curv.matrix(), 2, self.grid)
        return float(np.max(np.abs(d_curv)))

    def __add__(self, other):
        return U1Connection(self.a + other.a)

    def __sub__(self, other):
        return U1Connection(self.a - other.a)


def _check_pair(phi, conn, m=None):
    if phi.grid != conn.grid:
        raise FieldError("spinor and connection live on different grids")
    if m is not None and not m.is_flat:
        raise UnsupportedConfiguration("the Dirac operator is only available on the flat chart")


def sigma_array(psi):
    return SIGMA_SCALE * np.real(np.einsum("...i,aij,...j->...a", np.conj(psi), 1j * RHO_ETA, psi))


def sigma_map(phi):
    """Quadratic map W+ -> Lambda+ whose Clifford action is (Phi Phi*)_0 up to a factor -i."""
    return SelfDualField(phi.grid, sigma_array(phi.values))


def rho_selfdual(sigma):
    """Pointwise 2x2 matrices rho(sigma) acting on W+."""
    return np.einsum("...a,aij->...ij", sigma.values, RHO_ETA)


def covariant_array(phi, conn):
    """Components ``[..., i, k]`` of (d_i + i a_i) Phi."""
    psi = phi.values
    return grad(psi, phi.grid) + 1j * conn.a.values[..., :, None] * psi[..., None, :]


def spinor_covariant_derivative(phi, conn, m=None):
    """Returns nabla_A Phi with components ``[..., i, k]``; flat chart only."""
    _check_pair(phi, conn, m)
    return covariant_array(phi, conn)


def dirac(phi, conn, m=None):
    """Coupled Dirac operator D_A = sum_i tau_i (d_i + i a_i) mapping W+ to W-.

    Args:
        phi (SpinorField): Positive spinor.
        conn (U1Connection): Connection form.
        m (MetricField): Optional metric; must be flat.

    Returns:
        NegativeSpinorField: D_A Phi.
    """
    _check_pair(phi, conn, m)
    nabla = covariant_array(phi, conn)
    return NegativeSpinorField(phi.grid, np.einsum("ikl,...il->...k", TAU, nabla))


def gauge_transform(phi, conn, chi):
    """Applies u = e^{i chi}: returns (u Phi, a - d chi).

    Args:
        chi (ScalarField): Real gauge function.
    """
    phase = np.exp(1j * chi.values)
    d_chi = grad(chi.values, chi.grid)
    return (
        SpinorField(phi.grid, broadcast_scalar(phase, phi.values) * phi.values),
        U1Connection(OneFormField(conn.grid, conn.a.values - d_chi)),
    )


def dirac_weitzenboeck_check(phi, conn, m=None):
    """Both sides of the integrated Dirac identity with |Phi|^2 Phi as test spinor.

    lhs = int (D Phi, D(|Phi|^2 Phi)) and
    rhs = int |Phi|^2 |nabla Phi|^2 + |d|Phi|^2|^2 / 2 - 2 (iF+, |Phi|^2 sigma(Phi)).
    """
    _check_pair(phi, conn, m)
    if m is None:
        m = flat_metric(phi.grid)
    grid = phi.grid
    dens = np.sum(np.abs(phi.values) ** 2, axis=-1)
    d_phi = dirac(phi, conn).values
    d_weighted = dirac(SpinorField(grid, dens[..., None] * phi.values), conn).values
    lhs = integrate(ScalarField(grid, np.real(np.sum(np.conj(d_phi) * d_weighted, axis=-1))), m.vol)
    nabla_sq = np.sum(np.abs(spinor_covariant_derivative(phi, conn)) ** 2, axis=(-1, -2))
    d_dens = grad(dens, grid)
    curv_term = np.sum(conn.curv_plus(m).values * sigma_array(phi.values), axis=-1)
    density = dens * nabla_sq + 0.5 * np.sum(d_dens ** 2, axis=-1) - 2.0 * dens * curv_term
    rhs = integrate(ScalarField(grid, density), m.vol)
    return IdentityCheck(lhs, rhs)


def log_kato_check(phi, conn, floor=1e-3, m=None):
    """Worst margin of 2|nabla Phi|/|Phi| - |nabla sigma(Phi)|/|sigma(Phi)|.

    Args:
        floor (float): Nodes with |Phi| below ``floor`` are skipped.

    Returns:
        float: Minimum margin over the kept nodes.
    """
    _check_pair(phi, conn, m)
    norm = phi.pointwise_norm()
    keep = norm >= floor
    if not np.any(keep):
        raise FieldError("|Phi| is below the floor {:.3g} at every node".format(floor))
    nabla = np.sqrt(np.sum(np.abs(spinor_covariant_derivative(phi, conn)) ** 2, axis=(-1, -2)))
    sigma = sigma_array(phi.values)
    d_sigma = np.sqrt(np.sum(grad(sigma, phi.grid) ** 2, axis=(-1, -2)))
    sigma_norm = np.sqrt(np.sum(sigma ** 2, axis=-1))
    margin = 2.0 * nabla[keep] / norm[keep] - d_sigma[keep] / sigma_norm[keep]
    log.debug("log Kato: %d of %d nodes kept", int(np.sum(keep)), keep.size)
    return float(np.min(margin))


def spinor_norm_sq(phi):
    return ScalarField(phi.grid, np.sum(np.abs(phi.values) ** 2, axis=-1))


def plane_wave(grid, mode=(1, 0, 0, 0), component=0, amplitude=1.0):
    """Spinor with one component exp(i k.x) in the coordinate chart."""
    coords = grid.coordinates()
    phase = sum(2.0 * math.pi * k * x / p for k, x, p in zip(mode, coords, grid.periods))
    values = np.zeros(grid.dims + (2,), dtype=complex)
    values[..., component] = amplitude * np.exp(1j * phase)
    return SpinorField(grid, values)


