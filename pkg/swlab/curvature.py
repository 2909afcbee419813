"""Curvature of a sampled metric: Christoffel symbols up to the self-dual Weyl field.

Index conventions: ``riemann[..., r, s, m, n]`` is R^r_{smn} with
R^r_{smn} = d_m G^r_{ns} - d_n G^r_{ms} + G^r_{ml} G^l_{ns} - G^r_{nl} G^l_{ms},
so round spheres have positive sectional curvature.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import FieldError, MetricError
from .grid4 import ScalarField, TensorField, grad, hessian, integrate

__author__ = "Johannes Kazantzidis"
__email__ = "johannes.kazantzidis@ess.eu"
__status__ = "Production"

log = logging.getLogger(__name__)

_R2 = 1.0 / np.sqrt(2.0)


def _two_forms(pairs):
    """Antisymmetric 4x4 frame matrices of (e^a^e^b + e^c^e^d)/sqrt(2)."""
    out = np.zeros((3, 4, 4))
    for k, ((a, b), (c, d)) in enumerate(pairs):
        out[k, a, b], out[k, b, a] = _R2, -_R2
        out[k, c, d], out[k, d, c] = _R2, -_R2
    return out


# eta_1 = e1^e2 + e3^e4, eta_2 = e1^e3 + e4^e2, eta_3 = e1^e4 + e2^e3 (over sqrt 2)
ETA = _two_forms((((0, 1), (2, 3)), ((0, 2), (3, 1)), ((0, 3), (1, 2))))
ETA_MINUS = _two_forms((((0, 1), (3, 2)), ((0, 2), (1, 3)), ((0, 3), (2, 1))))

LEVI_CIVITA = np.zeros((4, 4, 4, 4))
for _p in np.array(np.meshgrid(*[range(4)] * 4, indexing="ij")).reshape(4, -1).T:
    if len(set(_p)) == 4:
        LEVI_CIVITA[tuple(_p)] = np.linalg.det(np.eye(4)[list(_p)])


@dataclass(frozen=True, eq=False)
class MetricField:
    """Metric samples with their derived pointwise data.

    Attributes:
        grid (GridSpec): Grid of the samples.
        g (ndarray): ``dims + (4, 4)`` metric.
        g_inv (ndarray): Pointwise inverse.
        vol (ScalarField): sqrt(det g).
        coframe (ndarray): ``e[..., A, i]`` with e^T e = g.
        frame (ndarray): ``E[..., i, A]``, the inverse of the coframe.
    """

    grid: object
    g: np.ndarray
    g_inv: np.ndarray
    vol: ScalarField
    coframe: np.ndarray
    frame: np.ndarray

    @property
    def is_flat(self):
        return bool(np.allclose(self.g, np.eye(4), rtol=0.0, atol=1e-12))

    def rotated(self, rotation):
        """Returns the metric with its coframe replaced by ``rotation @ coframe``.

        Args:
            rotation (array): Constant 4x4 matrix in SO(4).
        """
        rotation = np.asarray(rotation, dtype=float)
        if not np.allclose(rotation @ rotation.T, np.eye(4), atol=1e-12):
            raise FieldError("frame rotation must be orthogonal")
        if np.linalg.det(rotation) < 0:
            raise FieldError("frame rotation must preserve orientation")
        coframe = np.einsum("AB,...Bi->...Ai", rotation, self.coframe)
        return MetricField(
            self.grid, self.g, self.g_inv, self.vol, coframe, np.linalg.inv(coframe)
        )


@dataclass(frozen=True, eq=False)
class CurvatureBundle:
    """Pointwise curvature data of a metric.

    Attributes:
        R (ScalarField): Scalar curvature.
        Wplus (ndarray): ``dims + (3, 3)`` self-dual Weyl endomorphism in the eta basis.
        w (ScalarField): Lowest eigenvalue of Wplus.
        christoffel (ndarray): ``G[..., k, i, j]`` = Gamma^k_{ij}.
        ricci (ndarray): Ricci tensor in coordinates.
    """

    R: ScalarField
    Wplus: np.ndarray
    w: ScalarField
    christoffel: np.ndarray
    ricci: np.ndarray


def build_metric(g_samples):
    """Builds a MetricField from symmetric positive definite samples.

    Args:
        g_samples (TensorField): Symmetric rank 2 tensor field.

    Returns:
        MetricField: Metric with inverse, volume weight and Cholesky coframe.
    """
    grid = g_samples.grid
    g = TensorField(grid, g_samples.values, rank=2, symmetric=True).values
    lowest = np.linalg.eigvalsh(g)[..., 0]
    if np.any(lowest <= 0):
        node = tuple(int(i) for i in np.argwhere(lowest <= 0)[0])
        raise MetricError(
            "metric is not positive definite at node {} (eigenvalue {:.3e})".format(
                node, lowest[node]
            ),
            node=node,
        )
    lower = np.linalg.cholesky(g)
    coframe = np.swapaxes(lower, -1, -2)
    g_inv = np.linalg.inv(g)
    error = np.max(np.abs(np.einsum("...ij,...jk->...ik", g, g_inv) - np.eye(4)))
    if error > 1e-9:
        raise MetricError("metric inverse is inaccurate (error {:.3e})".format(error))
    vol = np.prod(np.diagonal(lower, axis1=-2, axis2=-1), axis=-1)
    return MetricField(
        grid, g, g_inv, ScalarField(grid, vol), coframe, np.linalg.inv(coframe)
    )


def flat_metric(grid):
    return build_metric(TensorField(grid, np.broadcast_to(np.eye(4), grid.dims + (4, 4)), 2))


def conformal_metric(grid, f):
    """Metric e^{2f} delta for a conformal factor given as array of shape ``dims``."""
    g = np.exp(2.0 * np.asarray(f))[..., None, None] * np.eye(4)
    return build_metric(TensorField(grid, g, 2))


def kaehler_product_metric(grid, u):
    """Product dx0^2 + dx1^2 + e^{2u}(dx2^2 + dx3^2) of a flat and a conformal torus."""
    g = np.zeros(grid.dims + (4, 4))
    g[..., 0, 0] = g[..., 1, 1] = 1.0
    g[..., 2, 2] = g[..., 3, 3] = np.exp(2.0 * np.asarray(u))
    return build_metric(TensorField(grid, g, 2))


def _lowered(dg):
    """Gamma_{l,ij} = (d_i g_jl + d_j g_il - d_l g_ij) / 2 from ``dg[..., l, i, j]``."""
    return 0.5 * (np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg)


def christoffel(m, dg=None):
    """Returns Gamma^k_{ij} as ``G[..., k, i, j]``."""
    if dg is None:
        dg = grad(m.g, m.grid)  # dg[..., l, i, j] = d_l g_ij
    return np.einsum("...kl,...lij->...kij", m.g_inv, _lowered(dg))


def christoffel_derivative(m, gamma, dg):
    """Returns d_m Gamma^r_ab as ``dG[..., m, r, a, b]`` from second derivatives of g.

    d_m Gamma^r_ab = g^rl d_m Gamma_{l,ab} - g^rp (d_m g_pq) Gamma^q_ab.
    """
    ddg = hessian(m.g, m.grid)  # ddg[..., m, n, i, j] = d_m d_n g_ij
    dlow = 0.5 * (
        np.einsum("...mijl->...mlij", ddg) + np.einsum("...mjil->...mlij", ddg) - ddg
    )
    return np.einsum("...rl,...mlab->...mrab", m.g_inv, dlow) - np.einsum(
        "...rp,...mpq,...qab->...mrab", m.g_inv, dg, gamma, optimize=True
    )


def riemann(gamma, dgamma):
    """Returns R^r_{smn} as ``R[..., r, s, m, n]``."""
    return (
        np.einsum("...mrns->...rsmn", dgamma)
        - np.einsum("...nrms->...rsmn", dgamma)
        + np.einsum("...rml,...lns->...rsmn", gamma, gamma)
        - np.einsum("...rnl,...lms->...rsmn", gamma, gamma)
    )


def weyl(g, riem_lower, ric, scalar):
    """Weyl tensor of the 4D decomposition, all indices down."""
    gr = np.einsum("...ac,...bd->...abcd", g, ric)
    kulkarni = (
        gr
        - np.einsum("...abcd->...abdc", gr)
        - np.einsum("...abcd->...bacd", gr)
        + np.einsum("...abcd->...badc", gr)
    )
    gg = np.einsum("...ac,...bd->...abcd", g, g)
    gg = gg - np.einsum("...abcd->...abdc", gg)
    return riem_lower - 0.5 * kulkarni + (scalar / 6.0)[..., None, None, None, None] * gg


def selfdual_weyl(c_lower, frame):
    """Matrix <W(eta_a), eta_b> of the Weyl tensor acting on 2-forms."""
    cf = np.einsum(
        "...ijkl,...iA,...jB,...kC,...lD->...ABCD",
        c_lower, frame, frame, frame, frame, optimize=True,
    )
    wplus = 0.25 * np.einsum("...ABCD,aCD,bAB->...ab", cf, ETA, ETA)
    return 0.5 * (wplus + np.swapaxes(wplus, -1, -2))


def lowest_eigenvalue(sym3):
    """Smallest eigenvalue of one or many symmetric 3x3 matrices.

    Degenerate spectra return the repeated value; no eigenvector is exposed.
    """
    sym3 = np.asarray(sym3, dtype=float)
    if sym3.shape[-2:] != (3, 3):
        raise FieldError("expected 3x3 matrices, got shape {}".format(sym3.shape))
    scale = np.maximum(1.0, np.max(np.abs(sym3)))
    if np.max(np.abs(sym3 - np.swapaxes(sym3, -1, -2))) > 1e-12 * scale:
        raise FieldError("matrix is not symmetric")
    lowest = np.linalg.eigvalsh(sym3)[..., 0]
    if lowest.ndim == 0:
        return float(lowest)
    return lowest


def check_weyl_invariants(wplus, w, tol=1e-8):
    """Raises FieldError unless W+ is trace-free and w <= tol, relative to max |W+|."""
    scale = max(1.0, float(np.max(np.abs(wplus))))
    trace = np.abs(np.trace(wplus, axis1=-2, axis2=-1))
    if np.max(trace) > tol * scale:
        node = tuple(int(i) for i in np.unravel_index(np.argmax(trace), trace.shape))
        raise FieldError("W+ is not trace-free: |trace| = {:.3e} at node {}".format(np.max(trace), node))
    if np.max(w) > tol * scale:
        raise FieldError("lowest W+ eigenvalue is positive: {:.3e}".format(float(np.max(w))))


def curvature_stack(m):
    """Computes R, W+ and w of a metric.

    Args:
        m (MetricField): Metric samples.

    Returns:
        CurvatureBundle: Scalar curvature, self-dual Weyl field and its lowest eigenvalue.
    """
    dg = grad(m.g, m.grid)
    gamma = christoffel(m, dg)
    riem = riemann(gamma, christoffel_derivative(m, gamma, dg))
    ric = np.einsum("...rsrn->...sn", riem)
    scalar = np.einsum("...sn,...sn->...", m.g_inv, ric)
    riem_lower = np.einsum("...ar,...rsmn->...asmn", m.g, riem)
    wplus = selfdual_weyl(weyl(m.g, riem_lower, ric, scalar), m.frame)
    if not (np.all(np.isfinite(scalar)) and np.all(np.isfinite(wplus))):
        raise FieldError("curvature contains non-finite values")
    wplus.setflags(write=False)
    w = lowest_eigenvalue(wplus)
    check_weyl_invariants(wplus, w)
    log.debug("curvature: R in [%.4g, %.4g], w min %.4g", scalar.min(), scalar.max(), w.min())
    return CurvatureBundle(
        R=ScalarField(m.grid, scalar),
        Wplus=wplus,
        w=ScalarField(m.grid, w),
        christoffel=gamma,
        ricci=ric,
    )


def summary(field, vol):
    """Returns min, max and integral of a scalar field."""
    return {
        "min": float(np.min(field.values)),
        "max": float(np.max(field.values)),
        "integral": integrate(field, vol),
    }
