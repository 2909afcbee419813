"""The invariant lambda_theta: Rayleigh quotient, its minimization, the K field and cutoffs.

The quotient of a self-dual form sigma is

    Q(sigma) = (||(d+d*)(s sigma)||^2 + ||nabla(c sigma)||^2 + 2 ||d|sigma|_eps||^2) / ||sigma||^2

with s = sin(theta), c = cos(theta) and |sigma|_eps = sqrt(|sigma|^2 + eps^2) - eps.
Minimization runs on the doubler-free subspace, which the central stencil
would otherwise turn into a family of spurious zero modes.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConvergenceError, FieldError
from .grid4 import (
    GRID_AXES,
    OneFormField,
    ScalarField,
    broadcast_scalar,
    diff,
    grad,
    integrate,
    remove_doublers,
)
from .selfdual_forms import (
    SelfDualField,
    covariant_array,
    dirac_density,
    hodge_laplacian_array,
    rough_laplacian_array,
    selfdual_connection,
)
from .spinc_algebra import dirac_weitzenboeck_check, sigma_map

__author__ = "Johannes Kazantzidis"
__email__ = "johannes.kazantzidis@ess.eu"
__status__ = "Production"

log = logging.getLogger(__name__)

DEFAULT_EPSILONS = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
NEGATIVE_ROUND_OFF = 1e-9


class ThetaField:
    """Angle theta: X -> R/2piZ stored as the pair (sin, cos), never as a lift.

    Args:
        s (ScalarField): sin(theta).
        c (ScalarField): cos(theta).
        m (MetricField): Metric used for |dtheta|^2.
    """

    def __init__(self, s, c, m):
        if s.grid != m.grid or c.grid != m.grid:
            raise FieldError("theta components and metric live on different grids")
        defect = np.max(np.abs(s.values ** 2 + c.values ** 2 - 1.0))
        if defect > 1e-12:
            raise FieldError("sin^2 + cos^2 deviates from 1 by {:.3e}".format(defect))
        self.s = s
        self.c = c
        self.grid = m.grid
        ds = grad(s.values, m.grid)
        dc = grad(c.values, m.grid)
        cb, sb = c.values[..., None], s.values[..., None]
        self.dtheta = OneFormField(m.grid, cb * ds - sb * dc)
        self.dtheta_sq = ScalarField(
            m.grid, np.einsum("...ij,...i,...j->...", m.g_inv, self.dtheta.values, self.dtheta.values)
        )

    @property
    def is_constant(self):
        return bool(np.ptp(self.s.values) == 0 and np.ptp(self.c.values) == 0)

    def consistency_defect(self):
        """max |ds - c dtheta| and |dc + s dtheta| over the grid."""
        ds = grad(self.s.values, self.grid)
        dc = grad(self.c.values, self.grid)
        dt = self.dtheta.values
        return float(max(
            np.max(np.abs(ds - self.c.values[..., None] * dt)),
            np.max(np.abs(dc + self.s.values[..., None] * dt)),
        ))


def theta_from_angle(samples, m):
    """Builds a ThetaField from angle samples read modulo 2 pi."""
    values = np.asarray(samples.values if isinstance(samples, ScalarField) else samples, dtype=float)
    return ThetaField(ScalarField(m.grid, np.sin(values)), ScalarField(m.grid, np.cos(values)), m)


def constant_theta(m, value=0.0):
    return theta_from_angle(np.full(m.grid.dims, float(value)), m)


def beta(t):
    """beta(t) = 1 on [0, 1] and 1/t beyond; accepts scalars or arrays."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise FieldError("beta is defined for t >= 0 only")
    out = 1.0 / np.maximum(arr, 1.0)
    return float(out) if out.ndim == 0 else out


def smooth_cutoff(t):
    """Smooth gamma with gamma = 1 on [0, 1] and 1/(2t) <= gamma <= 2/t beyond.

    gamma(t) = 1 / (1 + chi(t)(t - 1)) with chi(t) = exp(-1/(t - 1)) for t > 1.
    """
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise FieldError("the cutoff is defined for t >= 0 only")
    excess = np.maximum(arr - 1.0, 0.0)
    with np.errstate(divide="ignore", over="ignore"):
        chi = np.where(excess > 0, np.exp(-1.0 / np.where(excess > 0, excess, 1.0)), 0.0)
    out = 1.0 / (1.0 + chi * excess)
    return float(out) if out.ndim == 0 else out


def scalar_laplacian(phi, m):
    """-(1/v) d_i(v g^ij d_j phi), the adjoint pairing of the stencil gradient."""
    dphi = grad(phi, m.grid)
    flux = m.vol.values[..., None] * np.einsum("...ij,...j->...i", m.g_inv, dphi)
    div = sum(diff(flux[..., i], i, m.grid) for i in GRID_AXES)
    return -div / m.vol.values


def _l2(values, m):
    return float(np.sum(values * broadcast_scalar(m.vol.values, values)) * m.grid.cell_volume)


class RayleighEnergy:
    """Evaluates the quotient and its L2 gradient for fixed (theta, metric).

    Args:
        theta (ThetaField): Angle data.
        m (MetricField): Metric.
        conn (ndarray): Lambda+ connection; computed when None.
    """

    def __init__(self, theta, m, conn=None):
        if theta.grid != m.grid:
            raise FieldError("theta and metric live on different grids")
        self.theta = theta
        self.m = m
        self.conn = selfdual_connection(m) if conn is None else conn
        self.s = theta.s.values[..., None]
        self.c = theta.c.values[..., None]

    def terms(self, x, eps):
        """Returns the three numerator terms for coefficient array ``x``."""
        m = self.m
        sx = SelfDualField(m.grid, self.s * x)
        t1 = _l2(dirac_density(sx, m).values, m)
        nab = covariant_array(self.c * x, m, self.conn)
        t2 = _l2(np.einsum("...ij,...ib,...jb->...", m.g_inv, nab, nab), m)
        phi = np.sqrt(np.sum(x * x, axis=-1) + eps * eps) - eps
        dphi = grad(phi, m.grid)
        t3 = 2.0 * _l2(np.einsum("...ij,...i,...j->...", m.g_inv, dphi, dphi), m)
        return t1, t2, t3

    def mass(self, x):
        return _l2(np.sum(x * x, axis=-1), self.m)

    def value(self, x, eps):
        mass = self.mass(x)
        if mass <= 0:
            raise FieldError("the quotient of the zero form is undefined")
        return sum(self.terms(x, eps)) / mass

    def gradient(self, x, eps):
        """L2 gradient of the quotient; returns (value, gradient)."""
        m = self.m
        mass = self.mass(x)
        if mass <= 0:
            raise FieldError("the quotient of the zero form is undefined")
        q = sum(self.terms(x, eps)) / mass
        g1 = 2.0 * self.s * hodge_laplacian_array(self.s * x, m)
        g2 = 2.0 * self.c * rough_laplacian_array(self.c * x, m, self.conn)
        root = np.sqrt(np.sum(x * x, axis=-1) + eps * eps)
        lap = scalar_laplacian(root - eps, m)
        safe = np.where(root > 0, root, 1.0)
        g3 = 4.0 * np.where(root > 0, lap / safe, 0.0)[..., None] * x
        return q, (g1 + g2 + g3 - 2.0 * q * x) / mass


def rayleigh_quotient(sigma, theta, m, eps=0.0, conn=None):
    """Rayleigh quotient of a self-dual form.

    Args:
        sigma (SelfDualField): Nonzero form.
        theta (ThetaField): Angle data.
        m (MetricField): Metric.
        eps (float): Absolute smoothing of |sigma|, at least 0.

    Returns:
        float: The quotient.
    """
    if eps < 0:
        raise FieldError("smoothing parameter must be nonnegative")
    return RayleighEnergy(theta, m, conn).value(sigma.values, eps)


@dataclass
class LambdaOptions:
    """Settings of the lambda minimization.

    Attributes:
        random_starts (int): Random low-frequency starts.
        constant_starts (bool): Add the three constant eta forms as starts.
        epsilons (tuple): Relative smoothing schedule, scaled by Vol^{-1/2}.
        max_iter (int): Conjugate-gradient iterations per smoothing stage.
        tol (float): Relative gradient tolerance.
        seed (int): Seed of the random starts.
        workers (int): Threads running independent starts.
    """

    random_starts: int = 8
    constant_starts: bool = True
    epsilons: tuple = DEFAULT_EPSILONS
    max_iter: int = 200
    tol: float = 1e-8
    seed: int = 0
    workers: int = 1


@dataclass
class LambdaResult:
    """Discrete upper-bound estimate of lambda_theta."""

    value: float
    minimizer: SelfDualField
    quotient_history: list = field(default_factory=list)
    epsilon_final: float = 0.0
    converged: bool = True
    start_values: list = field(default_factory=list)

    def as_dict(self):
        return {
            "lambda": self.value,
            "epsilon_final": self.epsilon_final,
            "converged": self.converged,
            "start_values": list(self.start_values),
            "iterations": len(self.quotient_history),
        }


def _low_frequency(rng, grid):
    noise = rng.standard_normal(grid.dims + (3,))
    spectrum = np.fft.fftn(noise, axes=GRID_AXES)
    for axis, n in enumerate(grid.dims):
        freq = np.abs(np.fft.fftfreq(n, 1.0 / n))
        shape = [1] * spectrum.ndim
        shape[axis] = n
        spectrum = spectrum * (freq <= 1).reshape(shape)
    return np.fft.ifftn(spectrum, axes=GRID_AXES).real


def _starts(m, opts):
    rng = np.random.default_rng(opts.seed)
    starts = [_low_frequency(rng, m.grid) for _ in range(opts.random_starts)]
    if opts.constant_starts:
        for a in range(3):
            x = np.zeros(m.grid.dims + (3,))
            x[..., a] = 1.0
            starts.append(x)
    return starts


class _Descent:
    """Polak-Ribiere+ conjugate gradients on the unit sphere with Armijo backtracking."""

    armijo = 1e-4

    def __init__(self, energy, opts):
        self.energy = energy
        self.opts = opts
        self.grid = energy.m.grid
        self.weight = energy.m.vol.values[..., None] * self.grid.cell_volume

    def _normalize(self, x):
        return x / math.sqrt(self.energy.mass(x))

    def _euclidean(self, g):
        return remove_doublers(self.weight * g, self.grid)

    def run_stage(self, x, eps, history):
        q, g = self.energy.gradient(x, eps)
        e = self._euclidean(g)
        p = -e
        step = 1.0
        scale = math.sqrt(float(np.sum(e * e))) or 1.0
        converged = False
        for _ in range(self.opts.max_iter):
            p = p - (np.sum(p * x) / np.sum(x * x)) * x
            slope = float(np.sum(e * p))
            if slope >= 0:
                p, slope = -e, -float(np.sum(e * e))
            trial_step, accepted = step, False
            for _ in range(40):
                trial = self._normalize(x + trial_step * p)
                q_trial = self.energy.value(trial, eps)
                if q_trial <= q + self.armijo * trial_step * slope:
                    accepted = True
                    break
                trial_step *= 0.5
            if not accepted:
                converged = True
                break
            x = trial
            q_new, g = self.energy.gradient(x, eps)
            e_new = self._euclidean(g)
            beta_pr = max(0.0, float(np.sum(e_new * (e_new - e)) / max(np.sum(e * e), 1e-300)))
            p = -e_new + beta_pr * p
            e = e_new
            step = 2.0 * trial_step
            history.append(q_new)
            done = abs(q - q_new) <= self.opts.tol * max(1.0, abs(q_new))
            q = q_new
            if done or math.sqrt(float(np.sum(e * e))) <= self.opts.tol * scale:
                converged = True
                break
        return x, q, converged

    def run(self, start):
        x = self._normalize(remove_doublers(start, self.grid))
        history = []
        converged = True
        vol_scale = 1.0 / math.sqrt(float(np.sum(self.weight)))
        for eps in self.opts.epsilons:
            x, _, ok = self.run_stage(x, eps * vol_scale, history)
            converged = converged and ok
            log.debug("stage eps=%.1e: Q=%.6g", eps, history[-1] if history else float("nan"))
        return x, self.energy.value(x, 0.0), history, converged


def minimize_lambda(theta, m, curv=None, opts=None):
    """Estimates lambda_theta from above by multistart descent.

    Args:
        theta (ThetaField): Angle data.
        m (MetricField): Metric.
        curv (CurvatureBundle): Curvature; reuses its Christoffel symbols.
        opts (LambdaOptions): Solver settings.

    Returns:
        LambdaResult: Best quotient over all starts, re-evaluated at eps = 0.
    """
    opts = opts or LambdaOptions()
    conn = selfdual_connection(m, None if curv is None else curv.christoffel)
    energy = RayleighEnergy(theta, m, conn)
    descent = _Descent(energy, opts)
    starts = _starts(m, opts)
    if opts.workers > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            runs = list(pool.map(descent.run, starts))
    else:
        runs = [descent.run(start) for start in starts]

    best = None
    history = []
    for index, (x, value, run_history, converged) in enumerate(runs):
        log.debug("start %d: lambda estimate %.6g (converged=%s)", index, value, converged)
        for q in run_history:
            history.append(min(q, history[-1]) if history else q)
        if best is None or value < best[1]:
            best = (x, value, converged)
    x, value, converged = best
    if value < -NEGATIVE_ROUND_OFF:
        raise ConvergenceError(
            "quotient minimum {:.3e} is negative beyond round-off".format(value),
            residuals=[run[1] for run in runs],
        )
    if not converged:
        log.warning("lambda minimization stopped before its tolerance; reporting the best value")
    return LambdaResult(
        value=max(value, 0.0),
        minimizer=SelfDualField(m.grid, x),
        quotient_history=history,
        epsilon_final=opts.epsilons[-1] if opts.epsilons else 0.0,
        converged=converged,
        start_values=[run[1] for run in runs],
    )


class KField:
    """K = (1 - s^2/3) R + 2 s^2 w - |dtheta|^2 + lambda with its parts K = K+ - K-."""

    def __init__(self, K):
        self.K = K
        self.Kplus = ScalarField(K.grid, np.maximum(K.values, 0.0))
        self.Kminus = ScalarField(K.grid, np.maximum(-K.values, 0.0))
        self.grid = K.grid

    @classmethod
    def zero(cls, grid):
        return cls(ScalarField(grid, np.zeros(grid.dims)))

    def sup_norm(self):
        return float(np.max(np.abs(self.K.values)))


def assemble_K(theta, curv, lam):
    """Builds the K field.

    Args:
        theta (ThetaField): Angle data.
        curv (CurvatureBundle): R and w.
        lam (float): Nonnegative lambda estimate.
    """
    if lam < 0:
        raise FieldError("lambda must be nonnegative, got {}".format(lam))
    s2 = theta.s.values ** 2
    values = (1.0 - s2 / 3.0) * curv.R.values + 2.0 * s2 * curv.w.values - theta.dtheta_sq.values + lam
    return KField(ScalarField(theta.grid, values))


@dataclass(frozen=True)
class KeyInequalityReport:
    """``lhs <= rhs + slack`` for one configuration."""

    lhs: float
    rhs: float
    kind: str

    @property
    def slack(self):
        return self.rhs - self.lhs


def _monopole_terms(phi, conn, m):
    sigma = sigma_map(phi)
    norm = sigma.pointwise_norm()
    iF = conn.curv_plus(m).values
    forcing = integrate(
        ScalarField(m.grid, math.sqrt(8.0) * norm * np.sum(iF * sigma.values, axis=-1)), m.vol
    )
    dirac_term = 0.5 * dirac_weitzenboeck_check(phi, conn, m).lhs
    return sigma, norm, forcing, dirac_term


def key_inequality(phi, conn, theta, m, curv):
    """Three gradient terms of sigma(Phi) against curvature, forcing and Dirac terms."""
    sigma, norm, forcing, dirac_term = _monopole_terms(phi, conn, m)
    energy = RayleighEnergy(theta, m, selfdual_connection(m, curv.christoffel))
    lhs = sum(energy.terms(sigma.values, 0.0))
    s2 = theta.s.values ** 2
    pot = (1.0 - s2 / 3.0) * curv.R.values + 2.0 * s2 * curv.w.values - theta.dtheta_sq.values
    rhs = -integrate(ScalarField(m.grid, pot * norm ** 2), m.vol) + forcing + dirac_term
    return KeyInequalityReport(lhs, rhs, "key")


def key_inequality_reformulated(phi, conn, theta, m, curv, lam):
    """int K |sigma|^2 against forcing and Dirac terms, with lambda folded into K."""
    sigma, norm, forcing, dirac_term = _monopole_terms(phi, conn, m)
    kfield = assemble_K(theta, curv, lam)
    lhs = integrate(ScalarField(m.grid, kfield.K.values * norm ** 2), m.vol)
    return KeyInequalityReport(lhs, forcing + dirac_term, "key_reformulated")
