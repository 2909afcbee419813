"""Perturbed monopole residuals, a-priori bounds and curvature inequality reports.

Residual of the second equation, for every variant:

    r2 = sqrt(8) iF+ + F(|sigma(Phi)|) sigma(Phi) - eta

with F = beta(t)(K- + eps) and eta = K+ omega_hat for the perturbed equations,
eta = 0 and K taken at sin(theta) = 1, lambda = 0 for the simple version.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .curvature import LEVI_CIVITA, curvature_stack
from .exceptions import AdmissibilityError, FieldError, SwlabError
from .grid4 import OneFormField, ScalarField, grad, integrate, lp_norm
from .lambda_k import KField, assemble_K, beta, constant_theta, smooth_cutoff
from .selfdual_forms import (
    SelfDualField,
    TwoFormField,
    embed_array,
    exterior_derivative,
    hodge_energy,
    harmonic_selfdual_basis,
    l2_inner,
)
from .spinc_algebra import (
    SpinorField,
    U1Connection,
    dirac,
    sigma_map,
)

__author__ = "Johannes Kazantzidis"
__email__ = "johannes.kazantzidis@ess.eu"
__status__ = "Production"

log = logging.getLogger(__name__)

SQRT8 = math.sqrt(8.0)
VARIANTS = ("simple", "full", "general")


@dataclass
class PerturbationSpec:
    """Data of one variant of the perturbed equations.

    Attributes:
        variant (str): ``simple``, ``full`` or ``general``.
        eps (float): Positive smoothing constant of the simple and full variants.
        omega_hat (SelfDualField): Form with sup norm at most 1 (full variant).
        F (callable): Maps an array of |sigma| samples to the pointwise coefficient (general).
        eta (SelfDualField): Forcing form (general).
        kappa, T, delta (float): Admissibility constants of F (general).
    """

    variant: str
    eps: float = 0.0
    omega_hat: SelfDualField = None
    F: object = None
    eta: SelfDualField = None
    kappa: float = None
    T: float = 1.0
    delta: float = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise FieldError("unknown variant {!r}, expected one of {}".format(self.variant, VARIANTS))
        if self.variant in ("simple", "full") and not self.eps > 0:
            raise FieldError("eps must be positive, got {}".format(self.eps))
        if self.variant == "full":
            if self.omega_hat is None:
                raise FieldError("the full variant needs omega_hat")
            sup = float(np.max(self.omega_hat.pointwise_norm()))
            if sup > 1.0 + 1e-12:
                raise FieldError("|omega_hat| reaches {:.6g} > 1".format(sup))
        if self.variant == "general" and (self.F is None or self.eta is None):
            raise FieldError("the general variant needs F and eta")


@dataclass(eq=False)
class MonopoleConfig:
    """Pair (A, Phi) together with the background it is evaluated on."""

    conn: U1Connection
    phi: SpinorField
    m: object
    curv: object = None
    theta: object = None

    def __post_init__(self):
        grids = {self.conn.grid, self.phi.grid, self.m.grid}
        if len(grids) != 1:
            raise FieldError("configuration fields live on different grids")
        if self.curv is None:
            self.curv = curvature_stack(self.m)


@dataclass
class PswResidual:
    r1: object
    r2: SelfDualField
    norms: dict = field(default_factory=dict)

    @property
    def l2(self):
        return math.hypot(self.norms["r1_l2"], self.norms["r2_l2"])


@dataclass
class InequalityReport:
    """Both sides of an inequality ``lhs <= rhs``; ``margin = rhs - lhs``."""

    kind: str
    lhs: float
    rhs: float
    lhs_formula: str = ""
    rhs_formula: str = ""
    inputs: dict = field(default_factory=dict)

    @property
    def margin(self):
        return self.rhs - self.lhs

    @property
    def holds(self):
        return self.margin >= 0

    def as_dict(self):
        return {
            "kind": self.kind,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "lhs_formula": self.lhs_formula,
            "rhs_formula": self.rhs_formula,
            "inputs": dict(self.inputs),
        }


@dataclass
class BoundReport:
    kind: str
    value: float
    bound: float
    applicable: bool = True
    residual: float = 0.0

    @property
    def margin(self):
        return self.bound - self.value

    def as_dict(self):
        return {
            "kind": self.kind,
            "value": self.value,
            "bound": self.bound,
            "margin": self.margin,
            "applicable": self.applicable,
            "residual": self.residual,
        }


def simple_K(curv):
    """K at sin(theta) = 1 and lambda = 0, i.e. 2R/3 + 2w."""
    return KField(ScalarField(curv.R.grid, 2.0 * curv.R.values / 3.0 + 2.0 * curv.w.values))


def _second_residual(iF_plus, sigma, coeff, eta):
    out = SQRT8 * iF_plus + coeff[..., None] * sigma
    if eta is not None:
        out = out - eta
    return out


def _residual(cfg, coeff_of, eta):
    r1 = dirac(cfg.phi, cfg.conn, cfg.m)
    sigma = sigma_map(cfg.phi).values
    t = np.sqrt(np.sum(sigma * sigma, axis=-1))
    r2 = SelfDualField(
        cfg.m.grid, _second_residual(cfg.conn.curv_plus(cfg.m).values, sigma, coeff_of(t), eta)
    )
    norms = {
        "r1_l2": lp_norm(r1, 2, cfg.m.vol),
        "r1_inf": lp_norm(r1, math.inf, cfg.m.vol),
        "r2_l2": lp_norm(r2, 2, cfg.m.vol),
        "r2_inf": lp_norm(r2, math.inf, cfg.m.vol),
    }
    log.debug("residual norms: %s", norms)
    return PswResidual(r1, r2, norms)


def psw_residual(cfg, pert, K=None):
    """Residuals of the simple or full perturbed equations.

    Args:
        cfg (MonopoleConfig): Configuration on a flat chart.
        pert (PerturbationSpec): ``simple`` or ``full`` variant.
        K (KField): K field; the simple variant builds its own from the curvature.

    Returns:
        PswResidual: r1 = D_A Phi, r2 and their L2 and sup norms.
    """
    if pert.variant == "general":
        raise FieldError("use general_psw_residual for the general variant")
    if pert.variant == "simple":
        K = simple_K(cfg.curv)
        eta = None
    else:
        if K is None:
            raise FieldError("the full variant needs a K field")
        eta = K.Kplus.values[..., None] * pert.omega_hat.values
    k_minus = K.Kminus.values
    return _residual(cfg, lambda t: beta(t) * (k_minus + pert.eps), eta)


def reduce_to_general(pert, K):
    """Returns the general-variant data reproducing the full variant."""
    if pert.variant != "full":
        raise FieldError("only the full variant reduces to the general one")
    k_minus = K.Kminus.values
    return PerturbationSpec(
        variant="general",
        F=lambda t: beta(t) * (k_minus + pert.eps),
        eta=SelfDualField(K.grid, K.Kplus.values[..., None] * pert.omega_hat.values),
        kappa=float(np.max(k_minus)) + pert.eps,
        T=1.0,
        delta=pert.eps,
    )


def rescaled_cutoff(C, eta, T=1.0, delta=None):
    """General-variant data with F(x, t) = C gamma(t)."""
    return PerturbationSpec(
        variant="general",
        F=lambda t: C * smooth_cutoff(t),
        eta=eta,
        kappa=2.0 * C,
        T=T,
        delta=C / 2.0 if delta is None else delta,
    )


def check_admissibility(pert, K, n_samples=64, t_max=1e6):
    """Samples the conditions on F and eta.

    Requires kappa >= t F >= 0 on [0, T], t F >= K- + delta on [T, inf) and |eta| <= K+.

    Raises:
        AdmissibilityError: Lists every violated (condition, t, node) sample.
    """
    if pert.kappa is None or pert.delta is None or not pert.T > 0:
        raise AdmissibilityError("kappa, T and delta must be given")
    dims = K.grid.dims
    violations = []

    def record(condition, t, mask, values):
        node = tuple(int(i) for i in np.argwhere(mask)[0])
        violations.append({"condition": condition, "t": float(t), "node": node, "value": float(values[node])})

    t_low = np.linspace(0.0, pert.T, n_samples)
    t_high = np.geomspace(pert.T, max(t_max, 2.0 * pert.T), n_samples)
    floor = K.Kminus.values + pert.delta
    for t in np.concatenate([t_low, t_high]):
        tf = t * np.broadcast_to(pert.F(np.full(dims, t)), dims)
        if np.any(tf > pert.kappa * (1 + 1e-12)):
            record("t F <= kappa", t, tf > pert.kappa * (1 + 1e-12), tf)
        if t <= pert.T and np.any(tf < 0):
            record("t F >= 0", t, tf < 0, tf)
        if t >= pert.T and np.any(tf < floor - 1e-12):
            record("t F >= K- + delta", t, tf < floor - 1e-12, tf)
    eta_norm = pert.eta.pointwise_norm()
    excess = eta_norm > K.Kplus.values + 1e-12
    if np.any(excess):
        record("|eta| <= K+", 0.0, excess, eta_norm)
    if violations:
        raise AdmissibilityError(
            "{} admissibility violations, first: {}".format(len(violations), violations[0]),
            violations=violations,
        )
    return True


def general_psw_residual(cfg, pert, K):
    """Residuals of the general equations after checking admissibility against K."""
    if pert.variant != "general":
        raise FieldError("expected the general variant, got {!r}".format(pert.variant))
    check_admissibility(pert, K)
    return _residual(cfg, pert.F, pert.eta.values)


def _gate(res, scale, gate):
    limit = gate * max(1.0, scale)
    return res.l2 <= limit


def check_curvature_bound(cfg, pert, K, gate=1e-6):
    """sup |F_A+| <= (sup |K| + eps) / sqrt(8) on an approximate solution.

    Returns:
        BoundReport: Marked not applicable when the residual exceeds the gate.
    """
    res = psw_residual(cfg, pert, K)
    bound = (K.sup_norm() + pert.eps) / SQRT8
    value = float(np.max(cfg.conn.curv_plus(cfg.m).pointwise_norm()))
    applicable = _gate(res, K.sup_norm() + pert.eps, gate) if gate is not None else True
    if not applicable:
        log.warning("curvature bound not applicable: residual %.3e above gate", res.l2)
    return BoundReport("curvature_sup", value, bound, applicable, res.l2)


def check_phi_l4_bound(cfg, pert, K, gate=1e-6):
    """int |Phi|^4 <= 8 (1 + max K- / eps) Vol on an approximate solution."""
    res = psw_residual(cfg, pert, K)
    vol = integrate(ScalarField(cfg.m.grid, np.ones(cfg.m.grid.dims)), cfg.m.vol)
    bound = 8.0 * (1.0 + float(np.max(K.Kminus.values)) / pert.eps) * vol
    value = lp_norm(cfg.phi, 4, cfg.m.vol) ** 4
    applicable = _gate(res, K.sup_norm() + pert.eps, gate) if gate is not None else True
    if not applicable:
        log.warning("L4 bound not applicable: residual %.3e above gate", res.l2)
    return BoundReport("phi_l4", value, bound, applicable, res.l2)


def manufacture(m, theta, lam, eps, phi0=(1.0, 0.0), chi=None, a_extra=None, curv=None):
    """Builds an approximate solution of the full equations.

    Phi = e^{i chi} Phi0 and a = a_extra - d chi; omega_hat is then chosen so that
    the second equation holds exactly, which needs K+ > 0 wherever forcing remains.

    Args:
        m (MetricField): Flat metric.
        theta (ThetaField): Angle data.
        lam (float): Lambda used in K; the caller vouches for it.
        eps (float): Smoothing constant.
        phi0 (tuple): Constant spinor.
        chi (ScalarField): Gauge function, zero when None.
        a_extra (OneFormField): Additional connection form.

    Returns:
        tuple: (MonopoleConfig, PerturbationSpec, KField).
    """
    grid = m.grid
    if curv is None:
        curv = curvature_stack(m)
    chi_values = np.zeros(grid.dims) if chi is None else chi.values
    phi = SpinorField(grid, np.exp(1j * chi_values)[..., None] * np.asarray(phi0, dtype=complex))
    a = -grad(chi_values, grid)
    if a_extra is not None:
        a = a + a_extra.values
    cfg = MonopoleConfig(U1Connection(OneFormField(grid, a)), phi, m, curv, theta)
    K = assemble_K(theta, curv, lam)
    sigma = sigma_map(phi).values
    t = np.sqrt(np.sum(sigma * sigma, axis=-1))
    forcing = SQRT8 * cfg.conn.curv_plus(m).values + (beta(t) * (K.Kminus.values + eps))[..., None] * sigma
    kp = K.Kplus.values
    uncovered = (kp <= 0) & (np.linalg.norm(forcing, axis=-1) > 1e-14)
    if np.any(uncovered):
        raise AdmissibilityError(
            "K+ vanishes where the forcing does not",
            violations=[tuple(int(i) for i in idx) for idx in np.argwhere(uncovered)[:10]],
        )
    omega_hat = np.where(kp[..., None] > 0, forcing / np.where(kp > 0, kp, 1.0)[..., None], 0.0)
    sup = float(np.max(np.linalg.norm(omega_hat, axis=-1)))
    if sup > 1.0 + 1e-12:
        raise AdmissibilityError("manufactured omega_hat reaches {:.4g} > 1; raise lambda".format(sup))
    pert = PerturbationSpec("full", eps=eps, omega_hat=SelfDualField(grid, omega_hat))
    return cfg, pert, K


def flux_form(grid, i, j, n=1):
    """Constant 2-form 2 pi n dx^i ^ dx^j / (P_i P_j) with integral 2 pi n on the (i, j) torus."""
    if i == j:
        raise FieldError("flux needs two distinct axes")
    mat = np.zeros(grid.dims + (4, 4))
    value = 2.0 * math.pi * n / (grid.periods[i] * grid.periods[j])
    mat[..., i, j] = value
    mat[..., j, i] = -value
    return TwoFormField.from_matrix(grid, mat)


def wedge_integral(alpha, beta_form, grid):
    """int alpha ^ beta of two coordinate 2-forms (full antisymmetric arrays)."""
    density = 0.25 * np.einsum("ijkl,...ij,...kl->...", LEVI_CIVITA, alpha, beta_form)
    return float(np.sum(density) * grid.cell_volume)


def chern_pairing(F_rep, omega, m, closed_tol=1e-6):
    """int (F_rep / 2 pi) ^ omega.

    Raises:
        FieldError: When |dF_rep| exceeds ``closed_tol``.
    """
    mat = F_rep.matrix()
    defect = float(np.max(np.abs(exterior_derivative(mat, 2, m.grid))))
    if defect > closed_tol:
        raise FieldError("representative is not closed: max |dF| = {:.3e}".format(defect))
    return wedge_integral(mat / (2.0 * math.pi), embed_array(omega.values, m), m.grid)


def corollary_K(curv, delta):
    """K for constant theta with sin^2(theta) = delta and lambda dropped."""
    if not 0.0 <= delta <= 1.0:
        raise FieldError("delta must lie in [0, 1], got {}".format(delta))
    values = (1.0 - delta / 3.0) * curv.R.values + 2.0 * delta * curv.w.values
    return KField(ScalarField(curv.R.grid, values))


def weyl_branches(curv):
    """Counts nodes by the eigenvalue branch w takes on a Kaehler metric.

    There W+ has spectrum (R/6, -R/12, -R/12), so w = R/6 where R < 0 and
    w = -R/12 where R > 0.
    """
    R = curv.R.values
    scale = max(1.0, float(np.max(np.abs(R))))
    tol = 1e-12 * scale
    return {
        "R_negative": int(np.sum(R < -tol)),
        "R_positive": int(np.sum(R > tol)),
        "R_zero": int(np.sum(np.abs(R) <= tol)),
    }


def harmonicity(omega, m):
    """||(d + d*) omega||^2 / ||omega||^2."""
    mass = l2_inner(omega, omega, m)
    if mass <= 0:
        raise FieldError("omega vanishes")
    return hodge_energy(omega, m) / mass


def lebrun_linear(omega, m, K, c1, harmonic_tol=1e-8, require_harmonic=True):
    """int K |omega| / sqrt(2) dmu <= 4 pi c1 . [omega].

    Args:
        omega (SelfDualField): Harmonic self-dual form.
        m (MetricField): Metric.
        K (KField): K field, e.g. from ``assemble_K`` or ``corollary_K``.
        c1 (float or TwoFormField): The pairing c1 . [omega] or a closed representative of 2 pi c1.

    Returns:
        InequalityReport: Linear report.
    """
    q = harmonicity(omega, m)
    if require_harmonic and q > harmonic_tol:
        raise FieldError("omega is not harmonic: quotient {:.3e} above {:.1e}".format(q, harmonic_tol))
    pairing = chern_pairing(c1, omega, m) if isinstance(c1, TwoFormField) else float(c1)
    density = K.K.values * omega.pointwise_norm() / math.sqrt(2.0)
    lhs = integrate(ScalarField(m.grid, density), m.vol)
    return InequalityReport(
        "lebrun_linear",
        lhs,
        4.0 * math.pi * pairing,
        "int K |omega| / sqrt(2) dmu",
        "4 pi c1 . [omega]",
        {"c1_dot_omega": pairing, "harmonicity": q},
    )


def c1plus_squared(F_rep, m, basis=None):
    """(c1+)^2 = sum_k (int (F_rep/2pi) ^ omega_k)^2 over an orthonormal harmonic basis."""
    if basis is None:
        basis = harmonic_selfdual_basis(m)
    return float(sum(chern_pairing(F_rep, omega, m) ** 2 for omega in basis))


def lebrun_quadratic(K, m, c1plus_sq=None, F_rep=None, basis=None):
    """32 pi^2 (c1+)^2 <= int K-^2 dmu.

    Args:
        c1plus_sq (float): (c1+)^2, or None to compute it from ``F_rep``.
    """
    if c1plus_sq is None:
        if F_rep is None:
            raise FieldError("give either c1plus_sq or a representative")
        c1plus_sq = c1plus_squared(F_rep, m, basis)
    rhs = integrate(ScalarField(m.grid, K.Kminus.values ** 2), m.vol)
    return InequalityReport(
        "lebrun_quadratic",
        32.0 * math.pi ** 2 * c1plus_sq,
        rhs,
        "32 pi^2 (c1+)^2",
        "int K-^2 dmu",
        {"c1plus_sq": c1plus_sq},
    )


def intermediate_chain(cfg, pert, K, c1plus_sq):
    """Values of 32 pi^2 (c1+)^2 <= int |sqrt(8) iF+|^2 <= int (K- + eps)^2.

    Returns:
        tuple: Two InequalityReport instances, first and second link of the chain.
    """
    m = cfg.m
    forcing = integrate(
        ScalarField(m.grid, 8.0 * np.sum(cfg.conn.curv_plus(m).values ** 2, axis=-1)), m.vol
    )
    bound = integrate(ScalarField(m.grid, (K.Kminus.values + pert.eps) ** 2), m.vol)
    first = InequalityReport("chain_topology", 32.0 * math.pi ** 2 * c1plus_sq, forcing,
                             "32 pi^2 (c1+)^2", "int |sqrt(8) iF+|^2 dmu")
    second = InequalityReport("chain_equation", forcing, bound,
                              "int |sqrt(8) iF+|^2 dmu", "int (K- + eps)^2 dmu")
    return first, second


@dataclass(frozen=True)
class CatalogProduct:
    """Flat torus times a constant curvature surface Sigma_g, Kaehler with form |omega| = sqrt(2).

    Attributes:
        genus (int): Genus g of the surface.
        torus_area (float): Area A_T of the flat torus.
        surface_area (float): Needed for g = 1; otherwise 4 pi |g - 1|.
    """

    genus: int
    torus_area: float = 4.0 * math.pi ** 2
    surface_area: float = None

    @property
    def gauss_curvature(self):
        return float(np.sign(1 - self.genus))

    @property
    def area(self):
        if self.genus == 1:
            if self.surface_area is None:
                raise FieldError("a flat surface needs an explicit area")
            return float(self.surface_area)
        return 4.0 * math.pi * abs(self.genus - 1)

    @property
    def volume(self):
        return self.torus_area * self.area

    @property
    def R(self):
        return 2.0 * self.gauss_curvature

    @property
    def w(self):
        return min(self.R / 6.0, -self.R / 12.0)

    @property
    def c1_dot_omega(self):
        return (2.0 - 2.0 * self.genus) * self.torus_area

    @property
    def c1plus_sq(self):
        return self.c1_dot_omega ** 2 / (2.0 * self.volume)

    def K(self, delta):
        return (1.0 - delta / 3.0) * self.R + 2.0 * delta * self.w


def catalog_product(genus, torus_area=4.0 * math.pi ** 2, surface_area=None):
    return CatalogProduct(int(genus), float(torus_area), surface_area)


def catalog_linear(entry, delta):
    """Closed-form linear report of a catalog product with the Kaehler form."""
    return InequalityReport(
        "catalog_linear",
        entry.K(delta) * entry.volume,
        4.0 * math.pi * entry.c1_dot_omega,
        "K Vol (|omega| = sqrt 2)",
        "4 pi c1 . [omega]",
        {"genus": entry.genus, "delta": delta},
    )


def catalog_quadratic(entry, delta):
    k_minus = max(-entry.K(delta), 0.0)
    return InequalityReport(
        "catalog_quadratic",
        32.0 * math.pi ** 2 * entry.c1plus_sq,
        k_minus ** 2 * entry.volume,
        "32 pi^2 (c1+)^2",
        "K-^2 Vol",
        {"genus": entry.genus, "delta": delta},
    )


def delta_sweep(deltas, entry=None, curv=None, m=None, c1plus_sq=None):
    """Quadratic functional int ((1 - d/3) R + 2 d w)^2 against 32 pi^2 (c1+)^2 for d > 1.

    Evaluates either a catalog product or a grid metric (``curv``, ``m``, ``c1plus_sq``).

    Returns:
        list: One dict per coefficient with ``delta``, ``lhs``, ``rhs`` and ``below``,
        the latter flagging rhs < lhs.
    """
    rows = []
    for delta in deltas:
        if entry is not None:
            rhs = entry.K(delta) ** 2 * entry.volume
            lhs = 32.0 * math.pi ** 2 * entry.c1plus_sq
        else:
            if curv is None or m is None or c1plus_sq is None:
                raise SwlabError("a grid sweep needs curvature, metric and (c1+)^2")
            values = (1.0 - delta / 3.0) * curv.R.values + 2.0 * delta * curv.w.values
            rhs = integrate(ScalarField(m.grid, values ** 2), m.vol)
            lhs = 32.0 * math.pi ** 2 * c1plus_sq
        rows.append({"delta": float(delta), "lhs": lhs, "rhs": rhs, "below": rhs < lhs})
        log.debug("sweep delta'=%.3f: lhs=%.6g rhs=%.6g", delta, lhs, rhs)
    return rows


def flat_configuration(m, phi0=(0.0, 0.0)):
    """Constant spinor with the trivial connection; Phi0 = 0 gives the reducible solution."""
    grid = m.grid
    phi = SpinorField(grid, np.broadcast_to(np.asarray(phi0, dtype=complex), grid.dims + (2,)))
    return MonopoleConfig(U1Connection.trivial(grid), phi, m, theta=constant_theta(m))
