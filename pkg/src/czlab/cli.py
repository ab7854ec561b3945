"""Command-line entry point.

Subcommands: sample, solve, maximal, goodlambda, kfield, ensemble, report.
Worker count for `ensemble` comes from --workers or the CZLAB_WORKERS
environment variable.  Exit code is 0 only when every requested check
passed.
"""

import argparse
import json
import sys

import numpy as np

from czlab import calibration
from czlab.errors import CzlabError
from czlab.flux import sample_environment, save_environment
from czlab.harness import (
    ExperimentConfig,
    build_f,
    config_hash,
    fit_tail_exponent,
    load_record,
    parse_config,
    pool_tails,
    run_ensemble,
    run_trial,
    write_config,
)
from czlab.lattice import Ball, ScalarField, maximal_fn, save_scalar_field, load_scalar_field
from czlab.solver import DirichletProblem, solve


def _load_config(args):
    if args.config:
        return parse_config(args.config)
    return ExperimentConfig()


def _add_config_arg(sub):
    sub.add_argument("--config", help="experiment config file (key = value lines)")


def cmd_sample(args):
    config = _load_config(args)
    env = sample_environment(args.seed, config.macro_radius, config.flux_params())
    save_environment(args.out, env)
    print("wrote %s (seed %d, R %g, family %s)" % (args.out, args.seed, config.macro_radius, config.family))
    return 0


def cmd_solve(args):
    config = _load_config(args)
    grid = config.grid()
    env = sample_environment(args.seed, config.macro_radius, config.flux_params())
    f = build_f(config, args.seed)
    zero = ScalarField(grid, np.zeros((grid.node_count,) * 2))
    rep = solve(DirichletProblem(env, "box", zero, rhs_vector_field=f,
                                 tolerance=config.solver_tolerance))
    save_scalar_field(args.out, rep.solution, extra_header=[("seed", args.seed)])
    print("wrote %s: %d iterations, residual %.3g, converged %s"
          % (args.out, rep.iterations, rep.final_residual, rep.converged))
    return 0 if rep.converged else 1


def cmd_maximal(args):
    phi = load_scalar_field(args.field)
    out = maximal_fn(phi, args.coarsening)
    save_scalar_field(args.out, out, extra_header=[("coarsening_h", args.coarsening)])
    print("wrote %s (max %.6g)" % (args.out, float(out.values.max())))
    return 0


def cmd_goodlambda(args):
    config = _load_config(args)
    record = run_trial(config, args.seed)
    if record.status != "ok":
        print("trial failed: %s" % record.error)
        return 1
    bad = 0
    for row in record.goodlambda_rows:
        if row["status"] != "ok":
            print("t/t*=%-8g aborted: %s" % (row["t_over_tstar"], row["error"]))
            continue
        ok = row["lhs"] <= config.C_meas * (row["rhs_decay"] + row["rhs_f"] + row["rhs_k"]) + 1e-15
        ok = ok and row["n_decay_violations"] == 0
        bad += 0 if ok else 1
        print("t/t*=%-8g lhs=%-12.6g rhs=%-12.6g c_meas=%-10.4g balls=%d (good %d, f %d, K %d) violations=%d %s"
              % (row["t_over_tstar"], row["lhs"],
                 row["rhs_decay"] + row["rhs_f"] + row["rhs_k"], row["c_meas"],
                 row["n_balls"], row["n_good"], row["n_bad_f"], row["n_bad_k"],
                 row["n_decay_violations"], "ok" if ok else "VIOLATION"))
    return 0 if bad == 0 else 1


def cmd_kfield(args):
    from czlab.regularity import ProbeConfig, build_K_field, k_field_nodal

    config = _load_config(args)
    env = sample_environment(args.seed, config.macro_radius, config.flux_params())
    kf = build_K_field(env, ProbeConfig(
        r_probe=config.probe_radius, stride=config.probe_stride,
        C_lip=config.C_lip, tolerance=config.solver_tolerance,
    ), grid_spacing=config.spacing)
    save_scalar_field(args.out, k_field_nodal(kf), extra_header=[
        ("seed", args.seed), ("C_lip", "%.17g" % config.C_lip),
        ("censored_fraction", "%.17g" % kf.censored_fraction),
    ])
    print("wrote %s (K in [%.4g, %.4g], censored %.3g)"
          % (args.out, kf.cell_K.min(), kf.cell_K.max(), kf.censored_fraction))
    return 0


def cmd_ensemble(args):
    config = _load_config(args)
    if args.seeds:
        lo, hi = (int(part) for part in args.seeds.split(":"))
        seeds = range(lo, hi)
    else:
        seeds = None
    records = run_ensemble(
        config, seeds=seeds, workers=args.workers,
        progress=lambda r: print("seed %d: %s (%.1fs)" % (r.seed, r.status, r.elapsed)),
    )
    failed = [r for r in records if r.status != "ok"]
    print("%d trials, %d failed, output in %s" % (len(records), len(failed), config.output_dir))
    for r in failed:
        print("  seed %d: %s" % (r.seed, r.error))
    return 0 if not failed else 1


def cmd_report(args):
    import glob
    import os

    from czlab.report import emit_report

    config = _load_config(args)
    paths = sorted(glob.glob(os.path.join(config.output_dir, "trial_*.json")))
    records = [load_record(p) for p in paths]
    out = emit_report(records, config)
    for name, path in sorted(out.items()):
        print("wrote %s" % path)

    ok = [r for r in records if r.status == "ok"]
    checks_pass = len(ok) > 0
    exps = config.exponents()
    table = pool_tails(records, exps)
    try:
        slope, stderr = fit_tail_exponent(table)
        target = float(exps.tail_slope()) + 0.15
        print("tail slope %.4g (stderr %.3g), target <= %.4g" % (slope, stderr, target))
        checks_pass = checks_pass and slope <= target
    except CzlabError as exc:
        print("tail fit unavailable: %s" % exc)
        checks_pass = False
    n_viol = bad_rows = 0
    for r in ok:
        for row in r.goodlambda_rows:
            if row["status"] != "ok":
                continue
            n_viol += row["n_decay_violations"]
            rhs = row["rhs_decay"] + row["rhs_f"] + row["rhs_k"]
            if row["lhs"] > config.C_meas * rhs + 1e-15:
                bad_rows += 1
    print("good-lambda: %d rows above C_meas * RHS, %d decay violations" % (bad_rows, n_viol))
    checks_pass = checks_pass and bad_rows == 0 and n_viol == 0
    w1p_rate = sum(1 for r in ok if r.w1p_ratio <= 1.0) / max(1, len(ok))
    print("w1p pass rate %.3f" % w1p_rate)
    checks_pass = checks_pass and w1p_rate >= 0.95
    print("config %s: %s" % (config_hash(config), "PASS" if checks_pass else "FAIL"))
    return 0 if checks_pass else 1


def cmd_config(args):
    write_config(args.out, ExperimentConfig())
    print("wrote default config to %s" % args.out)
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="czlab",
        description="numerical lab for gradient integrability of random-coefficient elliptic problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="sample a coefficient environment to a file")
    _add_config_arg(s)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_sample)

    s = sub.add_parser("solve", help="solve one trial's Dirichlet problem")
    _add_config_arg(s)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_solve)

    s = sub.add_parser("maximal", help="coarsened maximal function of a saved field")
    s.add_argument("--field", required=True)
    s.add_argument("--coarsening", type=float, default=1.0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_maximal)

    s = sub.add_parser("goodlambda", help="good-lambda rows for one seed")
    _add_config_arg(s)
    s.add_argument("--seed", type=int, required=True)
    s.set_defaults(fn=cmd_goodlambda)

    s = sub.add_parser("kfield", help="build and save the per-cell K field")
    _add_config_arg(s)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_kfield)

    s = sub.add_parser("ensemble", help="run the seeded trial ensemble")
    _add_config_arg(s)
    s.add_argument("--seeds", help="half-open seed range lo:hi (default from config)")
    s.add_argument("--workers", type=int, default=None,
                   help="process count (default: CZLAB_WORKERS or 1)")
    s.set_defaults(fn=cmd_ensemble)

    s = sub.add_parser("report", help="pool trial files into CSV/SVG reports")
    _add_config_arg(s)
    s.set_defaults(fn=cmd_report)

    s = sub.add_parser("init-config", help="write the default config file")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_config)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CzlabError as exc:
        print("error: %s: %s" % (type(exc).__name__, exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
