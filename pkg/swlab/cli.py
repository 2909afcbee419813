"""Command line front end.

Every subcommand writes one JSON report (stdout or ``--output``). Exit codes:
0 success, 1 a gate failed, 2 invalid input or numerical failure.
"""
import argparse
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import yaml

from . import functionals, lambda_k, presets, selfdual_forms, spinc_algebra
from .curvature import curvature_stack, summary
from .exceptions import FieldError, SwlabError
from .grid4 import Field, GridSpec, ScalarField, write_csv, write_fields
from .report import Report, provenance, write_table

__author__ = "Johannes Kazantzidis"
__email__ = "johannes.kazantzidis@ess.eu"
__status__ = "Production"

log = logging.getLogger(__name__)

SWEEP_CHECKS = ("weitzenboeck", "identity-s", "dirac", "delta")


def parse_dims(text):
    """``"16"`` or ``"4,32,4,4"`` to a 4-tuple."""
    parts = [int(p) for p in str(text).replace("x", ",").split(",") if p.strip()]
    if len(parts) == 1:
        parts = parts * 4
    if len(parts) != 4:
        raise FieldError("dims need 1 or 4 entries, got {!r}".format(text))
    return tuple(parts)


def parse_floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(p) for p in str(text).split(",") if p.strip()]


def threads():
    return max(1, int(os.environ.get("SWLAB_THREADS", "1")))


def make_grid(args):
    periods = parse_floats(args.periods) if args.periods else [2 * math.pi] * 4
    if len(periods) == 1:
        periods = periods * 4
    return GridSpec(parse_dims(args.dims), tuple(periods))


def _background(args, grid):
    m = presets.metric_preset(args.metric, grid)
    return m, curvature_stack(m)


def dump_fields(path, grid, **fields):
    """HDF5 container, or one CSV per node-shaped field when ``path`` ends in ``.csv``."""
    if not path.lower().endswith(".csv"):
        write_fields(path, grid, **fields)
        return
    stem = path[:-4]
    for name, field in fields.items():
        values = field.values if isinstance(field, Field) else np.asarray(field)
        if tuple(values.shape[:4]) != grid.dims:
            log.info("%s is not sampled on the grid, left out of the csv dump", name)
            continue
        write_csv("{}_{}.csv".format(stem, name), grid, values)


def cmd_curvature(args, report):
    grid = make_grid(args)
    m, curv = _background(args, grid)
    trace = np.trace(curv.Wplus, axis1=-2, axis2=-1)
    report.add(
        R=summary(curv.R, m.vol),
        w=summary(curv.w, m.vol),
        wplus_trace_max=float(np.max(np.abs(trace))),
        volume=summary(ScalarField(grid, np.ones(grid.dims)), m.vol)["integral"],
    )
    if args.dump:
        dump_fields(args.dump, grid, g=m.g, R=curv.R, w=curv.w, Wplus=curv.Wplus)


def cmd_hodge(args, report):
    grid = make_grid(args)
    m, curv = _background(args, grid)
    spectrum = selfdual_forms.harmonic_spectrum(m, k=args.k, dense_limit=args.dense_limit)
    tol = args.count_tol if args.count_tol is not None else selfdual_forms.default_count_tol(m, curv)
    basis = selfdual_forms.harmonic_selfdual_basis(m, count_tol=tol, spectrum=spectrum)
    harmonic = [functionals.harmonicity(form, m) for form in basis]
    rng = np.random.default_rng(args.seed)
    sigma = presets.random_smooth_selfdual(grid, rng)
    theta = presets.theta_preset(args.theta, m)
    residual = selfdual_forms.weitzenboeck_residual(sigma, m, curv)
    check_s = selfdual_forms.integral_identity_check_s(sigma, theta, m, curv)
    check_c = selfdual_forms.integral_identity_check_c(sigma, theta, m)
    combined = selfdual_forms.s_and_c_inequality(sigma, theta, m, curv)
    report.add(
        eigenvalues=spectrum[0],
        harmonic_count=len(basis),
        count_tol=tol,
        basis_harmonicity=harmonic,
        weitzenboeck_residual=residual,
        identity_s={"lhs": check_s.lhs, "rhs": check_s.rhs, "residual": check_s.residual},
        identity_c={"lhs": check_c.lhs, "rhs": check_c.rhs, "residual": check_c.residual},
        s_and_c={"lhs": combined.lhs, "middle": combined.middle, "rhs": combined.rhs, "slack": combined.slack},
    )
    report.gate("weitzenboeck", residual <= args.tol)
    report.gate("identity_s", check_s.residual <= args.tol)
    report.gate("identity_c", check_c.residual <= args.tol)
    scale = abs(combined.lhs) + abs(combined.rhs) + 1.0
    report.gate("s_and_c", combined.slack <= args.tol * scale)
    if args.expect_count is not None:
        report.gate("harmonic_count", len(basis) == args.expect_count)
    if args.dump:
        forms = {"basis{}".format(i): form for i, form in enumerate(basis)}
        dump_fields(args.dump, grid, sigma=sigma, eigenvalues=np.asarray(spectrum[0]), **forms)


def cmd_dirac_check(args, report):
    grid = make_grid(args)
    m, _ = _background(args, grid)
    rng = np.random.default_rng(args.seed)
    rows = []
    for index in range(args.samples):
        phi = presets.random_smooth_spinor(grid, rng)
        conn = presets.random_smooth_connection(grid, rng)
        check = spinc_algebra.dirac_weitzenboeck_check(phi, conn, m)
        margin = spinc_algebra.log_kato_check(phi, conn, floor=args.floor, m=m)
        rows.append({"sample": index, "lhs": check.lhs, "rhs": check.rhs,
                     "residual": check.residual, "log_kato_margin": margin})
        log.debug("dirac sample %d: residual %.3e, Kato margin %.3e", index, check.residual, margin)
    report.add(samples=rows, clifford=spinc_algebra.CliffordModel().check())
    report.gate("dirac_identity", max(r["residual"] for r in rows) <= args.tol)
    report.gate("log_kato", min(r["log_kato_margin"] for r in rows) >= -args.kato_tol)


def cmd_lambda(args, report):
    grid = make_grid(args)
    m, curv = _background(args, grid)
    theta = presets.theta_preset(args.theta, m)
    opts = lambda_k.LambdaOptions(
        random_starts=args.multistarts,
        constant_starts=not args.no_constant_starts,
        max_iter=args.max_iter,
        tol=args.cg_tol,
        seed=args.seed,
        workers=threads(),
    )
    result = lambda_k.minimize_lambda(theta, m, curv, opts)
    report.add(**result.as_dict())
    report.add(note="discrete upper-bound estimate")
    if args.dump:
        dump_fields(args.dump, grid, minimizer=result.minimizer)


def _manufactured(args, grid):
    m, curv = _background(args, grid)
    theta = presets.theta_preset(args.theta, m)
    chi = ScalarField(grid, presets.TrigExpression(args.chi).evaluate(grid)) if args.chi else None
    phi0 = (args.phi0, 0.0)
    return functionals.manufacture(m, theta, args.lam, args.eps, phi0=phi0, chi=chi, curv=curv)


def cmd_psw_residual(args, report):
    grid = make_grid(args)
    cfg, pert, K = _manufactured(args, grid)
    if args.variant == "simple":
        pert = functionals.PerturbationSpec("simple", eps=args.eps)
    res = functionals.psw_residual(cfg, pert, K)
    report.add(variant=args.variant, norms=res.norms)
    if args.variant == "full":
        general = functionals.reduce_to_general(pert, K)
        res_general = functionals.general_psw_residual(cfg, general, K)
        report.add(reduction_gap=float(np.max(np.abs(res.r2.values - res_general.r2.values))))
    report.gate("residual", res.l2 <= args.gate)


def cmd_bounds(args, report):
    grid = make_grid(args)
    cfg, pert, K = _manufactured(args, grid)
    curvature = functionals.check_curvature_bound(cfg, pert, K, gate=args.gate)
    l4 = functionals.check_phi_l4_bound(cfg, pert, K, gate=args.gate)
    report.add(curvature_bound=curvature.as_dict(), phi_l4_bound=l4.as_dict())
    for bound in (curvature, l4):
        report.gate(bound.kind, bound.applicable and bound.margin >= -args.gate * max(1.0, abs(bound.bound)))


def cmd_lebrun(args, report):
    if args.catalog is not None:
        entry = functionals.catalog_product(args.catalog, args.torus_area)
        delta = args.delta or 0.0
        linear = functionals.catalog_linear(entry, delta)
        quadratic = functionals.catalog_quadratic(entry, delta)
    else:
        grid = make_grid(args)
        m, curv = _background(args, grid)
        theta = presets.theta_preset(args.theta, m)
        if args.delta is not None:
            K = functionals.corollary_K(curv, args.delta)
        else:
            K = lambda_k.assemble_K(theta, curv, args.lam)
        basis = selfdual_forms.harmonic_selfdual_basis(m, curv=curv)
        if not basis:
            raise SwlabError("no harmonic self-dual form found")
        omega = _omega(args.omega, basis, m)
        if args.flux:
            i, j, n = (int(v) for v in args.flux.split(","))
            F_rep = functionals.flux_form(grid, i, j, n)
            linear = functionals.lebrun_linear(omega, m, K, F_rep)
            quadratic = functionals.lebrun_quadratic(K, m, F_rep=F_rep, basis=basis)
        else:
            linear = functionals.lebrun_linear(omega, m, K, args.c1)
            quadratic = functionals.lebrun_quadratic(K, m, c1plus_sq=args.c1plus_sq)
        report.add(weyl_branches=functionals.weyl_branches(curv))
    report.add(linear=linear.as_dict(), quadratic=quadratic.as_dict())
    report.gate("linear", linear.margin >= -args.tol)
    report.gate("quadratic", quadratic.margin >= -args.tol)


def _omega(spec, basis, m):
    if spec.startswith("eta"):
        a = int(spec[3:]) - 1
        values = np.zeros(m.grid.dims + (3,))
        values[..., a] = 1.0
        return selfdual_forms.SelfDualField(m.grid, values)
    return basis[int(spec)]


def refinement_sweep(check, dims_list, workers=1):
    """Runs ``check(dims)`` per grid size and estimates the observed order.

    Args:
        check (callable): Maps a dims tuple to ``(h, residual)``.
        dims_list (list): At least two dims tuples, coarse to fine.

    Returns:
        list: Rows with ``dims``, ``h``, ``residual`` and ``order`` (None for the first).
    """
    if len(dims_list) < 2:
        raise FieldError("a refinement sweep needs at least two grid sizes")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(check, dims_list))
    rows = []
    for index, (dims, (h, residual)) in enumerate(zip(dims_list, results)):
        order = None
        if index > 0:
            h0, r0 = results[index - 1]
            if r0 > 0 and residual > 0:
                order = math.log(r0 / residual) / math.log(h0 / h)
        rows.append({"dims": "x".join(str(n) for n in dims), "h": h, "residual": residual, "order": order})
        log.debug("sweep %s: residual %.3e order %s", dims, residual, order)
    return rows


def _sweep_check(args):
    periods = parse_floats(args.periods) if args.periods else [2 * math.pi] * 4
    periods = tuple(periods * 4 if len(periods) == 1 else periods)

    def check(dims):
        grid = GridSpec(dims, periods)
        m, curv = _background(args, grid)
        h = float(np.max(grid.spacing))
        rng = np.random.default_rng(args.seed)
        if args.check == "weitzenboeck":
            sigma = presets.random_smooth_selfdual(grid, rng)
            return h, selfdual_forms.weitzenboeck_residual(sigma, m, curv)
        if args.check == "identity-s":
            sigma = presets.random_smooth_selfdual(grid, rng)
            theta = presets.theta_preset(args.theta, m)
            return h, selfdual_forms.integral_identity_check_s(sigma, theta, m, curv).residual
        phi = presets.random_smooth_spinor(grid, rng)
        conn = presets.random_smooth_connection(grid, rng)
        return h, spinc_algebra.dirac_weitzenboeck_check(phi, conn, m).residual

    return check


def cmd_sweep(args, report):
    if args.check == "delta":
        entry = functionals.catalog_product(args.catalog or 2, args.torus_area)
        rows = functionals.delta_sweep(parse_floats(args.deltas), entry=entry)
        report.add(rows=rows)
    else:
        dims_list = [parse_dims(d) for d in args.dims_list.split(";")]
        rows = refinement_sweep(_sweep_check(args), dims_list, workers=threads())
        report.add(rows=rows)
        orders = [r["order"] for r in rows if r["order"] is not None]
        if args.min_order is not None and orders:
            report.gate("order", min(orders) >= args.min_order)
    if args.table:
        write_table(args.table, rows)


def _add_common(parser):
    parser.add_argument("--config", type=str, help="YAML file whose keys override flags")
    parser.add_argument("-o", "--output", type=str, help="report path, stdout when omitted")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("--dims", type=str, default="8", help="nodes per axis: N or N0,N1,N2,N3")
    parser.add_argument("--periods", type=str, default=None, help="period per axis, default 2pi")
    parser.add_argument("--metric", type=str, default="flat",
                        help="flat | conformal:EXPR | kaehler-product:EXPR | file:PATH")
    parser.add_argument("--theta", type=str, default="const:0", help="const:V | coord:AXIS | expr:EXPR | file:PATH")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--timings", action="store_true", help="add wall time to the report")
    parser.add_argument("--provenance", action="store_true", help="add git commit and versions")


def build_parser():
    parser = argparse.ArgumentParser(prog="swlab", description="Seiberg-Witten curvature laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curvature", help="scalar curvature and self-dual Weyl summary")
    _add_common(p)
    p.add_argument("--dump", type=str, help="HDF5 file, or CSV stem when it ends in .csv")
    p.set_defaults(func=cmd_curvature)

    p = sub.add_parser("hodge", help="harmonic self-dual forms and the Weitzenboeck identity reports")
    _add_common(p)
    p.add_argument("--k", type=int, default=6, help="eigenpairs to compute")
    p.add_argument("--dense-limit", type=int, default=2048)
    p.add_argument("--count-tol", type=float, default=None)
    p.add_argument("--expect-count", type=int, default=None)
    p.add_argument("--dump", type=str, help="HDF5 file, or CSV stem when it ends in .csv")
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(func=cmd_hodge)

    p = sub.add_parser("dirac-check", help="Dirac identity and log Kato sweeps")
    _add_common(p)
    p.add_argument("--samples", type=int, default=5)
    p.add_argument("--floor", type=float, default=1e-3)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--kato-tol", type=float, default=1e-3)
    p.set_defaults(func=cmd_dirac_check)

    p = sub.add_parser("lambda", help="estimate lambda_theta")
    _add_common(p)
    p.add_argument("--multistarts", type=int, default=8)
    p.add_argument("--no-constant-starts", action="store_true")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--cg-tol", type=float, default=1e-8)
    p.add_argument("--dump", type=str, help="HDF5 file, or CSV stem when it ends in .csv")
    p.set_defaults(func=cmd_lambda)

    for name, func, help_text in (
        ("psw-residual", cmd_psw_residual, "residuals of a manufactured configuration"),
        ("bounds", cmd_bounds, "a-priori bounds on a manufactured configuration"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        p.add_argument("--variant", choices=("simple", "full"), default="full")
        p.add_argument("--eps", type=float, default=0.1)
        p.add_argument("--lam", type=float, default=1.0, help="lambda folded into K")
        p.add_argument("--phi0", type=float, default=1.0, help="amplitude of the constant spinor")
        p.add_argument("--chi", type=str, default=None, help="gauge function expression")
        p.add_argument("--gate", type=float, default=1e-6)
        p.set_defaults(func=func)

    p = sub.add_parser("lebrun", help="both LeBrun-type inequality reports")
    _add_common(p)
    p.add_argument("--delta", type=float, default=None, help="sin^2(theta) of the corollary form")
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--omega", type=str, default="0", help="basis index or eta1..eta3")
    p.add_argument("--c1", type=float, default=0.0, help="c1 . [omega]")
    p.add_argument("--c1plus-sq", type=float, default=0.0)
    p.add_argument("--flux", type=str, default=None, help="i,j,n flux representative")
    p.add_argument("--catalog", type=int, default=None, help="genus of the T^2 x Sigma_g catalog entry")
    p.add_argument("--torus-area", type=float, default=4 * math.pi ** 2)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_lebrun)

    p = sub.add_parser("sweep", help="refinement studies and the delta' template")
    _add_common(p)
    p.add_argument("--check", choices=SWEEP_CHECKS, default="weitzenboeck")
    p.add_argument("--dims-list", type=str, default="8;16", help="semicolon separated dims")
    p.add_argument("--min-order", type=float, default=None)
    p.add_argument("--deltas", type=str, default="1.0,1.5,2.0,2.5,3.0")
    p.add_argument("--catalog", type=int, default=None)
    p.add_argument("--torus-area", type=float, default=4 * math.pi ** 2)
    p.add_argument("--table", type=str, default=None, help="CSV output of the rows")
    p.set_defaults(func=cmd_sweep)
    return parser


def apply_config(args):
    """Overrides parsed flags with the keys of the YAML file named by ``--config``."""
    if not args.config:
        return args
    with open(args.config) as f:
        overrides = yaml.safe_load(f) or {}
    if not isinstance(overrides, dict):
        raise FieldError("config file {} must hold a mapping".format(args.config))
    for key, value in overrides.items():
        name = str(key).replace("-", "_")
        if not hasattr(args, name):
            raise FieldError("unknown config key {!r}".format(key))
        setattr(args, name, value)
    return args


def _effective_config(args):
    skip = {"func", "config", "output", "verbose", "timings", "provenance"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def main(argv=None):
    """Runs one subcommand and returns the exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        apply_config(args)
        report = Report(args.command, _effective_config(args))
        start = time.perf_counter()
        args.func(args, report)
        if args.timings:
            report.extra["timings"] = {"wall_seconds": time.perf_counter() - start}
        if args.provenance:
            report.extra["provenance"] = provenance()
    except (SwlabError, OSError, yaml.YAMLError) as e:
        print("swlab {}: {}".format(getattr(args, "command", ""), e), file=sys.stderr)
        return 2
    if args.output:
        report.write(args.output)
    else:
        sys.stdout.write(report.to_json())
    return 0 if report.passed else 1


def run():
    sys.exit(main())
