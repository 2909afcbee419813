"""Self-dual 2-forms: embedding, d and d*, the induced connection, Weitzenboeck checks
and the harmonic self-dual basis.

A SelfDualField holds coefficients in the eta basis built from the metric coframe.
Coordinate p-forms are handled as full antisymmetric arrays ``dims + (4,) * p``.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, lobpcg

from .curvature import ETA, ETA_MINUS, LEVI_CIVITA, christoffel
from .exceptions import ConvergenceError, FieldError
from .grid4 import (
    Field,
    GRID_AXES,
    OneFormField,
    ScalarField,
    TensorField,
    broadcast_scalar,
    diff,
    grad,
    integrate,
    remove_doublers,
)

__author__ = "Johannes Kazantzidis"
__email__ = "johannes.kazantzidis@ess.eu"
__status__ = "Production"

log = logging.getLogger(__name__)

PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
_LETTERS = "abcdef"


class SelfDualField(Field):
    """Section of Lambda+ as three eta-basis coefficients per node."""

    comp_shape = (3,)


class AntiSelfDualField(Field):
    comp_shape = (3,)


class TwoFormField(Field):
    """Coordinate 2-form stored as its six components (01, 02, 03, 12, 13, 23)."""

    comp_shape = (6,)

    def matrix(self):
        return six_to_matrix(self.values)

    @classmethod
    def from_matrix(cls, grid, matrix):
        return cls(grid, matrix_to_six(matrix))


class SelfDualGradient(Field):
    """Covariant derivative of a self-dual form, ``[..., A, b]`` in the coframe."""

    comp_shape = (4, 3)


@dataclass(frozen=True)
class IdentityCheck:
    lhs: float
    rhs: float

    @property
    def residual(self):
        return abs(self.lhs - self.rhs) / (abs(self.lhs) + abs(self.rhs) + 1.0)


@dataclass(frozen=True)
class InequalityCheck:
    """Both sides of an integral inequality ``lhs <= rhs`` plus the middle equality."""

    lhs: float
    middle: float
    rhs: float

    @property
    def slack(self):
        return self.lhs - self.rhs


def six_to_matrix(six):
    mat = np.zeros(six.shape[:-1] + (4, 4), dtype=six.dtype)
    for k, (i, j) in enumerate(PAIRS):
        mat[..., i, j] = six[..., k]
        mat[..., j, i] = -six[..., k]
    return mat


def matrix_to_six(mat):
    return np.stack([mat[..., i, j] for i, j in PAIRS], axis=-1)


def _check_grid(field, m):
    if field.grid != m.grid:
        raise FieldError("field and metric live on different grids")


def _to_coordinates(frame_form, m):
    return np.einsum("...AB,...Ai,...Bj->...ij", frame_form, m.coframe, m.coframe)


def _to_frame(coord_form, m):
    return np.einsum("...ij,...iA,...jB->...AB", coord_form, m.frame, m.frame)


def embed_array(coeffs, m, basis=ETA):
    """Coordinate 2-form of eta coefficients, ``dims + (4, 4)``."""
    frame_form = np.einsum("...a,aAB->...AB", coeffs, basis)
    return _to_coordinates(frame_form, m)


def hodge_star(form, m):
    """Metric Hodge star of a coordinate 2-form (full antisymmetric array)."""
    frame_form = _to_frame(form, m)
    starred = 0.5 * np.einsum("ABCD,...CD->...AB", LEVI_CIVITA, frame_form)
    return _to_coordinates(starred, m)


def project_array(form, m, basis=ETA):
    """Eta coefficients of P+ = (1 + *)/2 applied to a coordinate 2-form."""
    sign = 1.0 if basis is ETA else -1.0
    half = 0.5 * (form + sign * hodge_star(form, m))
    return 0.5 * np.einsum("...AB,aAB->...a", _to_frame(half, m), basis)


def embed(sigma, m):
    """Writes a self-dual field as a coordinate 2-form."""
    _check_grid(sigma, m)
    return TwoFormField.from_matrix(m.grid, embed_array(sigma.values, m))


def project(rho, m):
    """Self-dual part of a coordinate 2-form."""
    _check_grid(rho, m)
    return SelfDualField(m.grid, project_array(rho.matrix(), m))


def project_asd(rho, m):
    """Anti-self-dual part of a coordinate 2-form, coefficients in the ETA_MINUS basis."""
    _check_grid(rho, m)
    return AntiSelfDualField(m.grid, project_array(rho.matrix(), m, ETA_MINUS))


def embed_asd(tau, m):
    _check_grid(tau, m)
    return TwoFormField.from_matrix(m.grid, embed_array(tau.values, m, ETA_MINUS))


def _contract_each(arr, metric, p):
    """Contracts every one of the last ``p`` indices of ``arr`` with ``metric``."""
    letters = _LETTERS[:p]
    for q in range(p):
        target = letters[:q] + "z" + letters[q + 1:]
        arr = np.einsum("...z{},...{}->...{}".format(letters[q], letters, target), metric, arr)
    return arr


def exterior_derivative(form, p, grid):
    """d of a coordinate p-form for p = 0, 1, 2."""
    g = grad(form, grid)  # g[..., i, J] = d_i form_J
    if p == 0:
        return g
    if p == 1:
        return g - np.swapaxes(g, -1, -2)
    if p == 2:
        return g + np.einsum("...jki->...ijk", g) + np.einsum("...kij->...ijk", g)
    raise FieldError("exterior derivative implemented for p <= 2")


def codifferential(form, p, m):
    """d* = -div of a coordinate p-form for p = 1, 2, 3.

    It is the exact adjoint of ``exterior_derivative`` for the discrete
    quadrature, since the central stencil is antisymmetric under summation.
    """
    up = _contract_each(form, m.g_inv, p)
    vol = m.vol.values
    weighted = broadcast_scalar(vol, up) * up
    div = sum(diff(np.take(weighted, i, axis=4), i, m.grid) for i in GRID_AXES)
    div = -div / broadcast_scalar(vol, div)
    return _contract_each(div, m.g, p - 1)


def form_norm_sq(form, p, m):
    """Pointwise |alpha|^2 = alpha_I alpha^I / p! of a coordinate p-form."""
    up = _contract_each(form, m.g_inv, p)
    axes = tuple(range(form.ndim - p, form.ndim))
    return np.sum(form * up, axis=axes) / math.factorial(p)


def d_plus_dstar(sigma, m):
    """Returns (d sigma, d* sigma) of a self-dual field.

    Returns:
        tuple: Rank 3 TensorField and OneFormField in coordinates.
    """
    _check_grid(sigma, m)
    form = embed_array(sigma.values, m)
    return (
        TensorField(m.grid, exterior_derivative(form, 2, m.grid), rank=3),
        OneFormField(m.grid, codifferential(form, 2, m)),
    )


def dirac_density(sigma, m):
    """Pointwise |(d + d*) sigma|^2 = |d sigma|^2 + |d* sigma|^2."""
    d3, d1 = d_plus_dstar(sigma, m)
    return ScalarField(m.grid, form_norm_sq(d3.values, 3, m) + form_norm_sq(d1.values, 1, m))


def hodge_energy(sigma, m):
    """||d sigma||^2 + ||d* sigma||^2."""
    return integrate(dirac_density(sigma, m), m.vol)


def hodge_laplacian_array(coeffs, m):
    form = embed_array(coeffs, m)
    d_form = exterior_derivative(form, 2, m.grid)
    delta_form = codifferential(form, 2, m)
    laplace = exterior_derivative(delta_form, 1, m.grid) + codifferential(d_form, 3, m)
    return project_array(laplace, m)


def hodge_laplacian(sigma, m):
    """(d + d*)^2 sigma, projected on Lambda+."""
    _check_grid(sigma, m)
    return SelfDualField(m.grid, hodge_laplacian_array(sigma.values, m))


def selfdual_connection(m, gamma=None):
    """Connection coefficients ``conn[..., i, a, b] = <nabla_i eta_a, eta_b>``.

    Antisymmetric in (a, b), so the induced connection is metric.
    """
    if gamma is None:
        gamma = christoffel(m)
    eta = np.einsum("aAB,...Aj,...Bk->...ajk", ETA, m.coframe, m.coframe)
    eta_up = np.einsum("aAB,...jA,...kB->...ajk", ETA, m.frame, m.frame)
    nabla = (
        grad(eta, m.grid)
        - np.einsum("...lij,...alk->...iajk", gamma, eta)
        - np.einsum("...lik,...ajl->...iajk", gamma, eta)
    )
    conn = 0.5 * np.einsum("...iajk,...bjk->...iab", nabla, eta_up)
    return 0.5 * (conn - np.swapaxes(conn, -1, -2))


def covariant_array(coeffs, m, conn):
    """Coordinate components ``[..., i, b]`` of nabla sigma."""
    return grad(coeffs, m.grid) + np.einsum("...iab,...a->...ib", conn, coeffs)


def covariant_derivative(sigma, m, conn=None):
    """nabla sigma in the coframe, shape ``[..., A, b]``."""
    _check_grid(sigma, m)
    if conn is None:
        conn = selfdual_connection(m)
    nab = covariant_array(sigma.values, m, conn)
    return SelfDualGradient(m.grid, np.einsum("...iA,...ib->...Ab", m.frame, nab))


def rough_laplacian_array(coeffs, m, conn):
    """nabla* nabla, built as the exact discrete adjoint of ``covariant_array``."""
    nab = covariant_array(coeffs, m, conn)
    vol = m.vol.values
    flux = broadcast_scalar(vol, nab) * np.einsum("...ij,...jb->...ib", m.g_inv, nab)
    div = sum(diff(flux[..., i, :], i, m.grid) for i in GRID_AXES)
    return -div / broadcast_scalar(vol, div) + np.einsum(
        "...ij,...iab,...jb->...a", m.g_inv, conn, nab
    )


def weyl_action(wplus, coeffs):
    return np.einsum("...ab,...a->...b", wplus, coeffs)


def l2_inner(sigma, tau, m):
    return integrate(ScalarField(m.grid, np.sum(sigma.values * tau.values, axis=-1)), m.vol)


def l2_norm(sigma, m):
    return math.sqrt(max(l2_inner(sigma, sigma, m), 0.0))


def weitzenboeck_residual(sigma, m, curv, conn=None):
    """Relative L2 defect of (d+d*)^2 = nabla*nabla + R/3 - 2 W+ on sigma.

    Args:
        sigma (SelfDualField): Test form.
        m (MetricField): Metric.
        curv (CurvatureBundle): Curvature of ``m``.

    Returns:
        float: ||lhs - rhs||_2 / ||sigma||_2.
    """
    _check_grid(sigma, m)
    if conn is None:
        conn = selfdual_connection(m, curv.christoffel)
    s = sigma.values
    lhs = hodge_laplacian_array(s, m)
    rhs = (
        rough_laplacian_array(s, m, conn)
        + broadcast_scalar(curv.R.values, s) * s / 3.0
        - 2.0 * weyl_action(curv.Wplus, s)
    )
    norm = l2_norm(sigma, m)
    if norm == 0:
        raise FieldError("Weitzenboeck residual of the zero form is undefined")
    return l2_norm(SelfDualField(m.grid, lhs - rhs), m) / norm


def _theta_pieces(sigma, theta, m, conn):
    """Pointwise pieces shared by the (eq: s) and (eq: c) expansions."""
    s = sigma.values
    nab = covariant_array(s, m, conn)
    dtheta = theta.dtheta.values
    dtheta_sq = theta.dtheta_sq.values
    norm_sq = np.sum(s * s, axis=-1)
    nabla_sq = np.einsum("...ij,...ib,...jb->...", m.g_inv, nab, nab)
    pairing = np.einsum("...ij,...i,...b,...jb->...", m.g_inv, dtheta, s, nab)
    return dtheta_sq * norm_sq, nabla_sq, pairing, norm_sq


def integral_identity_check_s(sigma, theta, m, curv, conn=None):
    """Both sides of the integrated Weitzenboeck identity for s * sigma.

    Args:
        sigma (SelfDualField): Test form.
        theta (ThetaField): Angle data with ``s``, ``c``, ``dtheta``, ``dtheta_sq``.
        m (MetricField): Metric.
        curv (CurvatureBundle): Curvature of ``m``.
    """
    _check_grid(sigma, m)
    if conn is None:
        conn = selfdual_connection(m, curv.christoffel)
    s, c = theta.s.values, theta.c.values
    lhs = hodge_energy(sigma * theta.s, m)
    dts, nabla_sq, pairing, norm_sq = _theta_pieces(sigma, theta, m, conn)
    weyl_sq = np.einsum("...ab,...a,...b->...", curv.Wplus, sigma.values, sigma.values)
    density = (
        c * c * dts
        + s * s * nabla_sq
        + 2.0 * c * s * pairing
        + s * s * curv.R.values * norm_sq / 3.0
        - 2.0 * s * s * weyl_sq
    )
    return IdentityCheck(lhs, integrate(ScalarField(m.grid, density), m.vol))


def integral_identity_check_c(sigma, theta, m, conn=None):
    """Both sides of ||nabla(c sigma)||^2 = int s^2|dtheta x sigma|^2 + c^2|nabla sigma|^2 - 2cs(.,.)."""
    _check_grid(sigma, m)
    if conn is None:
        conn = selfdual_connection(m)
    s, c = theta.s.values, theta.c.values
    grad_c = covariant_derivative(sigma * theta.c, m, conn)
    lhs = integrate(ScalarField(m.grid, np.sum(grad_c.values ** 2, axis=(-1, -2))), m.vol)
    dts, nabla_sq, pairing, _ = _theta_pieces(sigma, theta, m, conn)
    density = s * s * dts + c * c * nabla_sq - 2.0 * c * s * pairing
    return IdentityCheck(lhs, integrate(ScalarField(m.grid, density), m.vol))


def s_and_c_inequality(sigma, theta, m, curv, conn=None):
    """Combined identity and its bound with W+ replaced by its lowest eigenvalue w."""
    if conn is None:
        conn = selfdual_connection(m, curv.christoffel)
    check_s = integral_identity_check_s(sigma, theta, m, curv, conn)
    check_c = integral_identity_check_c(sigma, theta, m, conn)
    s = theta.s.values
    dts, nabla_sq, _, norm_sq = _theta_pieces(sigma, theta, m, conn)
    weyl_sq = np.einsum("...ab,...a,...b->...", curv.Wplus, sigma.values, sigma.values)
    common = dts + s * s * curv.R.values * norm_sq / 3.0 + nabla_sq
    middle = common - 2.0 * s * s * weyl_sq
    bound = common - 2.0 * s * s * curv.w.values * norm_sq
    return InequalityCheck(
        lhs=check_s.lhs + check_c.lhs,
        middle=integrate(ScalarField(m.grid, middle), m.vol),
        rhs=integrate(ScalarField(m.grid, bound), m.vol),
    )


def default_count_tol(m, curv=None):
    """1e-6 times (mean |R| + 1 / h_min^2)."""
    mean_r = 0.0 if curv is None else float(np.mean(np.abs(curv.R.values)))
    return 1e-6 * (mean_r + 1.0 / float(np.min(m.grid.spacing)) ** 2)


def _doubler_free(vec, shape, grid):
    return remove_doublers(vec.reshape(shape), grid).reshape(vec.shape)


def harmonic_spectrum(m, k=6, dense_limit=2048, max_iter=500, tol=1e-10, seed=0):
    """Lowest eigenpairs of the Hodge Laplacian on Lambda+.

    The problem is posed on the doubler-free subspace with the L2 mass of the
    metric, so eigenvectors come back L2-orthonormal.

    Returns:
        tuple: (eigenvalues, list of SelfDualField).
    """
    shape = m.grid.dims + (3,)
    n = int(np.prod(shape))
    k = min(k, n // 5) if n > dense_limit else min(k, n)
    weight = np.broadcast_to(broadcast_scalar(m.vol.values * m.grid.cell_volume, np.zeros(shape)), shape).ravel()
    shift = 10.0 * float(np.sum(1.0 / m.grid.spacing ** 2)) * max(1.0, float(np.max(np.abs(m.g_inv))))

    def stiffness(vec):
        lap = hodge_laplacian_array(vec.reshape(shape), m).ravel()
        return weight * lap

    def a_op(vec):
        vec = np.asarray(vec).ravel()
        phys = _doubler_free(vec, shape, m.grid)
        return _doubler_free(stiffness(phys), shape, m.grid) + shift * (vec - phys)

    def b_op(vec):
        vec = np.asarray(vec).ravel()
        phys = _doubler_free(vec, shape, m.grid)
        return _doubler_free(weight * phys, shape, m.grid) + (vec - phys)

    if n <= dense_limit:
        log.debug("harmonic spectrum: dense solve, n=%d", n)
        eye = np.eye(n)
        a = np.column_stack([a_op(eye[:, j]) for j in range(n)])
        b = np.column_stack([b_op(eye[:, j]) for j in range(n)])
        values, vectors = scipy.linalg.eigh(
            0.5 * (a + a.T), 0.5 * (b + b.T), subset_by_index=[0, k - 1]
        )
    else:
        log.debug("harmonic spectrum: lobpcg, n=%d, k=%d", n, k)
        rng = np.random.default_rng(seed)
        start = rng.standard_normal((n, k))
        values, vectors, history = lobpcg(
            LinearOperator((n, n), matvec=a_op, dtype=float),
            start,
            B=LinearOperator((n, n), matvec=b_op, dtype=float),
            largest=False,
            tol=tol,
            maxiter=max_iter,
            retResidualNormsHistory=True,
        )
        residuals = np.asarray(history[-1]) if history else np.array([np.inf])
        if np.max(residuals) > max(tol, 1e-6) * shift:
            raise ConvergenceError(
                "lobpcg did not converge in {} iterations".format(max_iter),
                residuals=residuals.tolist(),
            )
        order = np.argsort(values)
        values, vectors = values[order], vectors[:, order]
    forms = [SelfDualField(m.grid, vectors[:, j].reshape(shape)) for j in range(vectors.shape[1])]
    return np.asarray(values), forms


def harmonic_selfdual_basis(m, count_tol=None, curv=None, spectrum=None, **solver):
    """L2-orthonormal basis of the numerical kernel of the Hodge Laplacian on Lambda+.

    Args:
        m (MetricField): Metric.
        count_tol (float): Eigenvalue threshold; ``default_count_tol`` if None.
        curv (CurvatureBundle): Used only for the default threshold.
        spectrum (tuple): Output of ``harmonic_spectrum``, computed when None.

    Returns:
        list: SelfDualField instances.
    """
    if count_tol is None:
        count_tol = default_count_tol(m, curv)
    values, forms = harmonic_spectrum(m, **solver) if spectrum is None else spectrum
    basis = [form for value, form in zip(values, forms) if value < count_tol]
    if len(basis) == len(forms):
        log.warning("all %d computed eigenvalues are below %.3g; kernel may be larger", len(forms), count_tol)
    log.info("harmonic self-dual basis: %d forms (tol %.3g)", len(basis), count_tol)
    return basis


def project_onto_span(sigma, basis, m):
    """L2-orthogonal projection onto the span of an orthonormal basis."""
    out = np.zeros_like(sigma.values)
    for form in basis:
        out = out + l2_inner(sigma, form, m) * form.values
    return SelfDualField(m.grid, out)
