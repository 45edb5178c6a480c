"""Command-line entry point ``ewdecay``.

Exit codes: 0 pass, 1 check or assertion failure, 2 configuration/input
error, 3 runtime blow-up.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig
from .diagnostics import (CutoffSpec, DiagnosticsError, SamplingError, fit_decay,
                          morawetz_check)
from .dynamics import BlowUpError, EnergyTrace, InitialDataError, NonlinearityError, NonlinearityParams
from .fem import AssemblyError, assemble
from .geometry import DampingConfigError, MeshError
from .mms import MMSConfig, convergence_study, format_table, is_monotone
from .pipeline import (CheckFailure, TOL_MORAWETZ, MIN_R_SQUARED, append_diagnostics, build_damping,
                       build_mesh, build_tensor, check_geometry, check_tensor, observability_ensemble,
                       simulate)
from .vtk import VTKFormatError, list_snapshots, read_snapshot

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3
MIN_ORDER = 1.8

log = logging.getLogger("ewdecay")


def _load_config(path):
    return RunConfig() if path is None else RunConfig.load(path)


def _print(lines):
    for line in lines:
        print(line)


def _fmt_point(p):
    return "[" + ", ".join(f"{x:.6g}" for x in p) + "]"


# ---------------------------------------------------------------- commands


def cmd_check_tensor(args):
    cfg = _load_config(args.config)
    if args.extend:
        cfg = cfg.replace(checks={"delta_extend": True})
    mesh = build_mesh(cfg)
    tc = check_tensor(cfg, mesh)
    b = tc.bounds
    print(f"alpha = {b.alpha:.12g}")
    print(f"beta = {b.beta:.12g}")
    if tc.assumption is not None:
        a = tc.assumption
        print(f"delta_max = {a.delta_max:.12g}" + ("  (capped)" if a.capped else ""))
        print(f"worst_point = {_fmt_point(a.worst_point)}")
    else:
        print(f"ellipticity fails at x = {_fmt_point(b.argmin)}")
    if cfg.geometry.dim == 2:
        print("note = out of theory (n = 2)")
    print(f"result = {'PASS' if tc.report.passed else 'FAIL'}")
    return EXIT_OK if tc.report.passed else EXIT_FAIL


def cmd_check_geometry(args):
    cfg = _load_config(args.config)
    if args.mesh:
        if not os.path.exists(args.mesh):
            raise ConfigError(f"mesh file not found: {args.mesh}")
        cfg = cfg.replace(geometry={"mesh_path": args.mesh})
    mesh = build_mesh(cfg)
    reports = check_geometry(cfg, mesh, args.xi)
    for r in reports:
        _print(r.lines())
    ok = all(r.passed for r in reports)
    print(f"result = {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_simulate(args):
    cfg = _load_config(args.config)
    if args.force:
        cfg = cfg.replace(flags={"force": True})
    try:
        result = simulate(cfg, args.out)
    except CheckFailure as exc:
        for r in exc.reports:
            _print(r.lines())
        print(f"result = FAIL ({exc})")
        return EXIT_FAIL
    _print(result.report_lines())
    ok = result.passed
    if args.ensemble:
        rep = observability_ensemble(cfg, range(args.ensemble))
        print(f"observability_max_ratio = {rep.max_ratio:.6g} over {args.ensemble} seeds")
        row = ("observability_ensemble_max", rep.max_ratio, "finite", rep.finite)
        append_diagnostics(os.path.join(args.out, "diagnostics.csv"), [row])
        ok = ok and rep.finite
    print(f"result = {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_fit_decay(args):
    try:
        trace = EnergyTrace.read_csv(args.trace)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read trace {args.trace}: {exc}") from exc
    fit = fit_decay(trace, args.t0, args.t1)
    print(f"window = [{fit.t_lo:g}, {fit.t_hi:g}] ({fit.n_points} records)")
    print(f"C1_hat = {fit.C1_hat:.12g}")
    print(f"C2_hat = {fit.C2_hat:.12g}")
    print(f"r_squared = {fit.r_squared:.12g}")
    ok = fit.C2_hat > 0 and fit.r_squared >= MIN_R_SQUARED
    rows = [("fit_C2", fit.C2_hat, 0.0, fit.C2_hat > 0),
            ("fit_r_squared", fit.r_squared, MIN_R_SQUARED, fit.r_squared >= MIN_R_SQUARED)]
    append_diagnostics(os.path.join(os.path.dirname(os.path.abspath(args.trace)),
                                    "diagnostics.csv"), rows)
    print(f"result = {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify_morawetz(args):
    run = args.run
    cfg_path = os.path.join(run, "config.resolved.json")
    if not os.path.exists(cfg_path):
        raise ConfigError(f"{run} has no config.resolved.json")
    cfg = RunConfig.load(cfg_path)
    paths = list_snapshots(run)
    if len(paths) < 2:
        raise SamplingError(f"{run} holds {len(paths)} snapshot(s); need at least two "
                            "(set output.snapshot_every)")
    trace = EnergyTrace.read_csv(os.path.join(run, cfg.output.trace))
    mesh = build_mesh(cfg)
    tc = check_tensor(cfg, mesh)
    delta = 1.0 if tc.assumption is None else min(tc.assumption.delta_max, 1.0)
    system = assemble(mesh, build_tensor(cfg), build_damping(cfg, mesh), check_ellipticity=False)
    nl = NonlinearityParams.make(cfg.nonlinearity.p, mesh.dim, cfg.nonlinearity.enabled)
    if args.phi == "cutoff":
        phi = CutoffSpec("cutoff", cfg.damping.R_d, cfg.geometry.R1 - cfg.damping.xi)
    else:
        phi = CutoffSpec()
    snaps = [read_snapshot(p) for p in paths]
    rep = morawetz_check(system, [(s.t, s.u, s.v) for s in snaps], delta, tc.bounds.beta,
                         float(trace.e_total[0]), phi, nl.active)
    print(f"snapshots = {len(snaps)}, T = {rep.T:g}, delta = {rep.delta:g}, C = {rep.C:g}")
    for k, v in rep.components.items():
        print(f"  {k} = {v:.12g}")
    print(f"lhs = {rep.lhs:.12g}")
    print(f"rhs = {rep.rhs:.12g}")
    print(f"slack = {rep.slack:.12g}")
    print(f"normalized_slack = {rep.normalized_slack:.6g} (tol {-args.tol})")
    ok = rep.passed(args.tol)
    append_diagnostics(os.path.join(run, "diagnostics.csv"),
                       [("morawetz_check_normalized_slack", rep.normalized_slack, -args.tol, ok)])
    print(f"result = {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_convergence(args):
    cfg = MMSConfig() if args.config is None else MMSConfig.load(args.config)
    if args.levels < 3:
        raise ConfigError("convergence needs --levels >= 3")
    rows = convergence_study(cfg, args.levels)
    print(format_table(rows))
    if not is_monotone(rows):
        print("warning = errors are not monotonically decreasing")
    orders = [r.order for r in rows[1:]]
    ok = all(o >= MIN_ORDER for o in orders)
    print(f"min_order = {min(orders):.4f} (required {MIN_ORDER})")
    print(f"result = {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(
        prog="ewdecay", description="Damped anisotropic elastic waves: checks, runs, diagnostics.")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("check-tensor", help="ellipticity and Assumption (A) check")
    s.add_argument("--config")
    s.add_argument("--extend", action="store_true", help="search delta in (0, 2]")
    s.set_defaults(func=cmd_check_tensor)

    s = sub.add_parser("check-geometry", help="boundary sign and damping cover checks")
    s.add_argument("--config")
    s.add_argument("--mesh", help="mesh text file (overrides the generator)")
    s.add_argument("--xi", type=float, default=None)
    s.set_defaults(func=cmd_check_geometry)

    s = sub.add_parser("simulate", help="run a configuration and write outputs")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--force", action="store_true", help="run even if checks fail")
    s.add_argument("--ensemble", type=int, default=0,
                   help="also run N random-seeded observability runs")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit-decay", help="log-linear fit of a trace")
    s.add_argument("--trace", required=True)
    s.add_argument("--t0", type=float, default=2.0)
    s.add_argument("--t1", type=float, default=10.0)
    s.set_defaults(func=cmd_fit_decay)

    s = sub.add_parser("verify-morawetz", help="multiplier inequality on run snapshots")
    s.add_argument("--run", required=True)
    s.add_argument("--phi", choices=("one", "cutoff"), default="one")
    s.add_argument("--tol", type=float, default=TOL_MORAWETZ)
    s.set_defaults(func=cmd_verify_morawetz)

    s = sub.add_parser("convergence", help="manufactured-solution refinement study")
    s.add_argument("--config")
    s.add_argument("--levels", type=int, default=3)
    s.set_defaults(func=cmd_convergence)
    return p


CONFIG_ERRORS = (ConfigError, MeshError, DampingConfigError, InitialDataError, NonlinearityError,
                 AssemblyError, SamplingError, VTKFormatError, DiagnosticsError, OSError)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore", invalid="ignore")
    try:
        return args.func(args)
    except BlowUpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
