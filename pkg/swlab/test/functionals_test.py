import math

import numpy as np
import pytest

from swlab.curvature import curvature_stack, kaehler_product_metric
from swlab.exceptions import AdmissibilityError, FieldError, SwlabError
from swlab.functionals import (
    MonopoleConfig,
    PerturbationSpec,
    c1plus_squared,
    catalog_linear,
    catalog_product,
    catalog_quadratic,
    check_admissibility,
    check_curvature_bound,
    check_phi_l4_bound,
    chern_pairing,
    corollary_K,
    flat_configuration,
    flux_form,
    general_psw_residual,
    intermediate_chain,
    lebrun_linear,
    lebrun_quadratic,
    manufacture,
    psw_residual,
    reduce_to_general,
    rescaled_cutoff,
    delta_sweep,
    weyl_branches,
)
from swlab.grid4 import GridSpec, OneFormField, ScalarField
from swlab.lambda_k import KField, constant_theta, theta_from_angle
from swlab.selfdual_forms import SelfDualField, TwoFormField, harmonic_selfdual_basis
from swlab.spinc_algebra import U1Connection, plane_wave

__author__ = "Johannes Kazantzidis"
__email__ = "johannes.kazantzidis@ess.eu"
__status__ = "Production"

VOL = (2 * math.pi) ** 4


def constant_K(grid, value):
    return KField(ScalarField(grid, np.full(grid.dims, float(value))))


def zero_selfdual(grid):
    return SelfDualField(grid, np.zeros(grid.dims + (3,)))


@pytest.fixture(scope="module")
def manufactured(flat_line):
    """Full-variant solution on the flat line grid with a nontrivial gauge."""
    m, curv = flat_line
    chi = ScalarField(m.grid, 0.3 * np.sin(m.grid.coordinates()[0]))
    return manufacture(m, constant_theta(m), 1.0, 0.1, chi=chi, curv=curv)


@pytest.fixture(scope="module")
def near_solution(flat_line):
    """Full-variant configuration with curvature F_A+ != 0 and a varying K."""
    m, curv = flat_line
    x0 = m.grid.coordinates()[0]
    theta = theta_from_angle(0.3 * np.sin(x0), m)
    a = np.zeros(m.grid.dims + (4,))
    a[..., 1] = 1e-4 * np.sin(x0)
    chi = ScalarField(m.grid, 0.3 * np.sin(x0))
    return manufacture(m, theta, 1.0, 0.1, chi=chi, a_extra=OneFormField(m.grid, a), curv=curv)


def test_reducible_solution_has_zero_residual(flat4):
    cfg = flat_configuration(flat4)
    res = psw_residual(cfg, PerturbationSpec("simple", eps=0.1))
    assert res.l2 == 0.0


def test_constant_spinor_on_flat_torus(flat4):
    cfg = flat_configuration(flat4, (1.0, 0.0))
    res = psw_residual(cfg, PerturbationSpec("simple", eps=0.1))
    assert res.norms["r1_inf"] == 0.0
    assert res.norms["r2_inf"] == pytest.approx(0.1 / (2.0 * math.sqrt(2.0)), rel=1e-12)


def test_manufactured_solution_solves_the_full_equations(manufactured):
    cfg, pert, K = manufactured
    res = psw_residual(cfg, pert, K)
    assert res.norms["r1_inf"] <= 1e-4
    assert res.norms["r2_inf"] <= 1e-12
    assert float(np.max(pert.omega_hat.pointwise_norm())) <= 1.0


def test_reduction_to_general_variant_is_exact(manufactured):
    cfg, pert, K = manufactured
    general = reduce_to_general(pert, K)
    assert general.kappa == pytest.approx(pert.eps)
    full = psw_residual(cfg, pert, K)
    reduced = general_psw_residual(cfg, general, K)
    assert np.array_equal(reduced.r2.values, full.r2.values)
    assert reduced.norms == full.norms


def test_manufacture_needs_positive_K_where_forcing_remains(flat4):
    with pytest.raises(AdmissibilityError):
        manufacture(flat4, constant_theta(flat4), 0.0, 0.1)


def test_manufacture_rejects_large_omega(flat4):
    with pytest.raises(AdmissibilityError, match="raise lambda"):
        manufacture(flat4, constant_theta(flat4), 0.01, 0.1)


def test_variant_validation(grid4):
    with pytest.raises(FieldError):
        PerturbationSpec("other", eps=0.1)
    with pytest.raises(FieldError):
        PerturbationSpec("simple", eps=0.0)
    with pytest.raises(FieldError):
        PerturbationSpec("full", eps=0.1)
    big = SelfDualField(grid4, np.full(grid4.dims + (3,), 1.0))
    with pytest.raises(FieldError):
        PerturbationSpec("full", eps=0.1, omega_hat=big)
    with pytest.raises(FieldError):
        PerturbationSpec("general", eta=zero_selfdual(grid4))


def test_residual_variant_dispatch(flat4):
    cfg = flat_configuration(flat4, (1.0, 0.0))
    general = rescaled_cutoff(1.0, zero_selfdual(flat4.grid))
    with pytest.raises(FieldError):
        psw_residual(cfg, general)
    full = PerturbationSpec("full", eps=0.1, omega_hat=zero_selfdual(flat4.grid))
    with pytest.raises(FieldError):
        psw_residual(cfg, full)
    with pytest.raises(FieldError):
        general_psw_residual(cfg, full, constant_K(flat4.grid, 0.0))


def test_configuration_needs_one_grid(flat4, line_grid):
    with pytest.raises(FieldError):
        MonopoleConfig(U1Connection.trivial(line_grid), plane_wave(flat4.grid), flat4)


def test_rescaled_cutoff_is_admissible(grid4):
    pert = rescaled_cutoff(1.0, zero_selfdual(grid4), delta=0.3)
    assert check_admissibility(pert, constant_K(grid4, -0.2))


def test_rescaled_cutoff_with_large_K_minus_is_rejected(grid4):
    pert = rescaled_cutoff(1.0, zero_selfdual(grid4))
    with pytest.raises(AdmissibilityError) as e:
        check_admissibility(pert, constant_K(grid4, -0.6))
    assert e.value.violations[0]["condition"] == "t F >= K- + delta"


def test_vanishing_F_with_negative_K_is_rejected(grid4):
    pert = PerturbationSpec(
        "general", F=lambda t: np.zeros_like(t), eta=zero_selfdual(grid4), kappa=1.0, delta=0.1
    )
    with pytest.raises(AdmissibilityError):
        check_admissibility(pert, constant_K(grid4, -0.5))


def test_forcing_above_K_plus_is_rejected(grid4):
    eta = SelfDualField(grid4, np.broadcast_to([0.0, 0.5, 0.0], grid4.dims + (3,)))
    pert = rescaled_cutoff(1.0, eta)
    with pytest.raises(AdmissibilityError) as e:
        check_admissibility(pert, constant_K(grid4, 0.4))
    assert e.value.violations[-1]["condition"] == "|eta| <= K+"


def test_admissibility_needs_constants(grid4):
    pert = PerturbationSpec("general", F=lambda t: t, eta=zero_selfdual(grid4))
    with pytest.raises(AdmissibilityError):
        check_admissibility(pert, constant_K(grid4, 0.0))


def test_bounds_on_manufactured_solution(flat4):
    cfg, pert, K = manufacture(flat4, constant_theta(flat4), 1.0, 0.1)
    curvature = check_curvature_bound(cfg, pert, K)
    assert curvature.applicable
    assert curvature.value == 0.0
    assert curvature.bound == pytest.approx(1.1 / math.sqrt(8.0))
    l4 = check_phi_l4_bound(cfg, pert, K)
    assert l4.applicable
    assert l4.value == pytest.approx(VOL)
    assert l4.margin == pytest.approx(7.0 * VOL)
    assert l4.as_dict()["kind"] == "phi_l4"


def test_bounds_are_gated_on_the_residual(flat_line):
    m, curv = flat_line
    cfg = MonopoleConfig(U1Connection.trivial(m.grid), plane_wave(m.grid), m, curv)
    pert = PerturbationSpec("simple", eps=0.1)
    report = check_phi_l4_bound(cfg, pert, constant_K(m.grid, 0.0))
    assert not report.applicable
    assert check_phi_l4_bound(cfg, pert, constant_K(m.grid, 0.0), gate=None).applicable


def test_flux_pairing(flat4):
    omega = SelfDualField(flat4.grid, np.broadcast_to([1.0, 0.0, 0.0], flat4.grid.dims + (3,)))
    pairing = chern_pairing(flux_form(flat4.grid, 0, 1, n=3), omega, flat4)
    assert pairing == pytest.approx(3.0 * (2 * math.pi) ** 2 / math.sqrt(2.0), rel=1e-12)
    assert chern_pairing(flux_form(flat4.grid, 0, 2, n=3), omega, flat4) == pytest.approx(0.0, abs=1e-12)


def test_pairing_needs_closed_representative(line_grid, flat_line):
    m, _ = flat_line
    mat = np.zeros(line_grid.dims + (4, 4))
    mat[..., 1, 2] = np.sin(line_grid.coordinates()[0])
    mat[..., 2, 1] = -mat[..., 1, 2]
    with pytest.raises(FieldError):
        chern_pairing(TwoFormField.from_matrix(line_grid, mat), zero_selfdual(line_grid), m)


def test_flux_form_needs_two_axes(grid4):
    with pytest.raises(FieldError):
        flux_form(grid4, 1, 1)


def test_c1plus_squared_of_flux(flat4):
    basis = harmonic_selfdual_basis(flat4)
    assert c1plus_squared(flux_form(flat4.grid, 0, 1, n=2), flat4, basis) == pytest.approx(2.0, rel=1e-8)


def test_lebrun_on_flat_torus(flat4):
    omega = SelfDualField(flat4.grid, np.broadcast_to([math.sqrt(2.0), 0.0, 0.0], flat4.grid.dims + (3,)))
    K = corollary_K(curvature_stack(flat4), 0.5)
    linear = lebrun_linear(omega, flat4, K, 0.0)
    assert linear.lhs == 0.0 and linear.rhs == 0.0
    assert linear.holds
    quadratic = lebrun_quadratic(K, flat4, 0.0)
    assert quadratic.margin == 0.0
    assert quadratic.as_dict()["inputs"] == {"c1plus_sq": 0.0}


def test_lebrun_with_flux_representative(flat4):
    basis = harmonic_selfdual_basis(flat4)
    K = constant_K(flat4.grid, -1.0)
    report = lebrun_quadratic(K, flat4, F_rep=flux_form(flat4.grid, 0, 1), basis=basis)
    assert report.lhs == pytest.approx(32.0 * math.pi ** 2 * 0.5, rel=1e-8)
    assert report.rhs == pytest.approx(VOL)
    with pytest.raises(FieldError):
        lebrun_quadratic(K, flat4)


def test_lebrun_needs_harmonic_form(flat_line):
    m, curv = flat_line
    values = np.zeros(m.grid.dims + (3,))
    values[..., 0] = np.sin(m.grid.coordinates()[0])
    with pytest.raises(FieldError):
        lebrun_linear(SelfDualField(m.grid, values), m, corollary_K(curv, 0.0), 0.0)


def test_corollary_K_range(flat_line):
    _, curv = flat_line
    with pytest.raises(FieldError):
        corollary_K(curv, 1.5)


def test_intermediate_chain(flat4):
    cfg, pert, K = manufacture(flat4, constant_theta(flat4), 1.0, 0.1)
    first, second = intermediate_chain(cfg, pert, K, 0.0)
    assert first.lhs == 0.0 and first.rhs == 0.0
    assert second.lhs == 0.0
    assert second.rhs == pytest.approx(0.01 * VOL)


@pytest.mark.parametrize("delta", [0.0, 0.5, 1.0])
def test_genus_two_product_is_extremal(delta):
    entry = catalog_product(2)
    assert entry.R == -2.0
    assert entry.w == pytest.approx(-1.0 / 3.0)
    assert entry.K(delta) == pytest.approx(-2.0)
    linear = catalog_linear(entry, delta)
    assert linear.lhs == pytest.approx(linear.rhs, rel=1e-12)
    quadratic = catalog_quadratic(entry, delta)
    assert quadratic.lhs == pytest.approx(quadratic.rhs, rel=1e-12)


def test_sphere_product():
    entry = catalog_product(0)
    assert entry.w == pytest.approx(-1.0 / 6.0)
    assert entry.K(0.5) == pytest.approx(1.5)
    linear = catalog_linear(entry, 0.5)
    assert linear.lhs == pytest.approx(6.0 * math.pi * entry.torus_area)
    assert linear.rhs == pytest.approx(8.0 * math.pi * entry.torus_area)
    assert linear.holds


def test_flat_surface_needs_area():
    with pytest.raises(FieldError):
        catalog_product(1).area
    assert catalog_product(1, surface_area=2.0).volume == pytest.approx(8.0 * math.pi ** 2)


def test_sweep_over_catalog():
    entry = catalog_product(3)
    rows = delta_sweep([1.0, 1.5, 2.0], entry=entry)
    assert [row["delta"] for row in rows] == [1.0, 1.5, 2.0]
    for row in rows:
        assert row["lhs"] == pytest.approx(row["rhs"], rel=1e-12)


def test_sweep_over_grid(flat_line):
    m, curv = flat_line
    rows = delta_sweep([1.2], curv=curv, m=m, c1plus_sq=0.5)
    assert rows[0]["rhs"] == 0.0
    assert rows[0]["below"]
    with pytest.raises(SwlabError):
        delta_sweep([1.2], curv=curv)


def test_violated_curvature_bound_has_negative_margin(flat_line):
    m, curv = flat_line
    a = np.zeros(m.grid.dims + (4,))
    a[..., 1] = 5.0 * np.sin(m.grid.coordinates()[0])
    cfg = MonopoleConfig(U1Connection(OneFormField(m.grid, a)), plane_wave(m.grid), m, curv)
    report = check_curvature_bound(cfg, PerturbationSpec("simple", eps=0.1), constant_K(m.grid, 0.0), gate=None)
    assert report.applicable
    assert report.margin < 0


def test_l4_bound_is_saturated_by_constant_spinor(flat4):
    cfg = flat_configuration(flat4, phi0=(8.0 ** 0.25, 0.0))
    report = check_phi_l4_bound(cfg, PerturbationSpec("simple", eps=0.1), constant_K(flat4.grid, 0.0), gate=None)
    assert report.value == pytest.approx(8.0 * VOL, rel=1e-12)
    assert report.margin == pytest.approx(0.0, abs=1e-9 * VOL)


def test_pairing_ignores_exact_forms(flat_line):
    m, _ = flat_line
    a = np.zeros(m.grid.dims + (4,))
    a[..., 1] = np.sin(m.grid.coordinates()[0])
    exact = U1Connection(OneFormField(m.grid, a)).curv
    flux = flux_form(m.grid, 0, 1)
    shifted = TwoFormField.from_matrix(m.grid, flux.matrix() + exact.matrix())
    omega = SelfDualField(m.grid, np.broadcast_to([1.0, 0.0, 0.0], m.grid.dims + (3,)))
    assert chern_pairing(shifted, omega, m) == pytest.approx(chern_pairing(flux, omega, m), abs=1e-12)


@pytest.fixture(scope="module")
def kaehler():
    grid = GridSpec((4, 4, 32, 4))
    m = kaehler_product_metric(grid, 0.1 * np.cos(grid.coordinates()[2]))
    omega = SelfDualField(grid, np.broadcast_to([math.sqrt(2.0), 0.0, 0.0], grid.dims + (3,)))
    return m, curvature_stack(m), omega


def test_kaehler_form_gives_zero_gap_without_weyl_term(kaehler):
    m, curv, omega = kaehler
    linear = lebrun_linear(omega, m, corollary_K(curv, 0.0), 0.0)
    assert linear.lhs == pytest.approx(0.0, abs=1e-8)
    assert linear.inputs["harmonicity"] <= 1e-8
    assert lebrun_linear(omega, m, corollary_K(curv, 0.5), 0.0).lhs < 0


def test_weyl_branches_of_kaehler_product(kaehler):
    m, curv, _ = kaehler
    branches = weyl_branches(curv)
    assert branches["R_negative"] > 0 and branches["R_positive"] > 0
    assert sum(branches.values()) == int(np.prod(m.grid.dims))


def test_linear_margin_scales_with_omega(kaehler):
    m, curv, omega = kaehler
    K = corollary_K(curv, 0.5)
    flux = flux_form(m.grid, 0, 1)
    first = lebrun_linear(omega, m, K, flux)
    tripled = lebrun_linear(SelfDualField(m.grid, 3.0 * omega.values), m, K, flux)
    assert tripled.margin == pytest.approx(3.0 * first.margin, rel=1e-10)
    assert tripled.holds == first.holds


def test_grid_matches_catalog_on_flat_torus(flat4):
    entry = catalog_product(1, surface_area=4.0 * math.pi ** 2)
    omega = SelfDualField(flat4.grid, np.broadcast_to([math.sqrt(2.0), 0.0, 0.0], flat4.grid.dims + (3,)))
    for delta in (0.0, 0.5):
        grid_report = lebrun_linear(omega, flat4, corollary_K(curvature_stack(flat4), delta), 0.0)
        assert grid_report.margin == pytest.approx(catalog_linear(entry, delta).margin, abs=1e-8)


def test_near_solution_has_curvature_and_a_varying_K(near_solution):
    cfg, pert, K = near_solution
    assert float(np.max(cfg.conn.curv_plus(cfg.m).pointwise_norm())) >= 1e-4
    assert np.ptp(K.K.values) >= 0.08
    assert float(np.min(K.K.values)) > 0.0
    res = psw_residual(cfg, pert, K)
    assert res.norms["r2_inf"] <= 1e-12
    assert 0.0 < res.l2 <= 1e-2


def test_near_solution_bounds_hold_once_gated(near_solution):
    cfg, pert, K = near_solution
    for check in (check_curvature_bound, check_phi_l4_bound):
        assert not check(cfg, pert, K).applicable
        report = check(cfg, pert, K, gate=5e-2)
        assert report.applicable
        assert report.margin > 0.0
        assert report.value > 0.0


def test_general_variant_reproduces_full_on_varying_K(near_solution):
    cfg, pert, K = near_solution
    general = reduce_to_general(pert, K)
    assert check_admissibility(general, K)
    full = psw_residual(cfg, pert, K)
    reduced = general_psw_residual(cfg, general, K)
    assert np.allclose(reduced.r1.values, full.r1.values, atol=1e-14)
    assert np.allclose(reduced.r2.values, full.r2.values, atol=1e-14)
    for key, value in full.norms.items():
        assert reduced.norms[key] == pytest.approx(value, rel=1e-12, abs=1e-15)
