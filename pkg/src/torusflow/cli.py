"""Command-line interface.

Subcommands: run, sweep, linear, check, fit.  Exit codes: 0 pass,
1 assertion failure (a hard check or run flag failed), 2 solver failure,
3 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .cns import SolverError
from .harness import (
    ConfigError,
    PRESET_NAMES,
    check_suite,
    fit_csv,
    load_config,
    preset,
    run_scenario,
    sweep,
)

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_SOLVER = 2
EXIT_CONFIG = 3


def _add_config_args(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--config", help="TOML run configuration")
    g.add_argument("--preset", choices=PRESET_NAMES, help="built-in scenario")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")


def _resolve_config(args):
    cfg = load_config(args.config) if args.config else preset(args.preset)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
        cfg.initial = dataclasses.replace(cfg.initial, seed=args.seed)
    return cfg


def _cmd_run(args) -> int:
    cfg = _resolve_config(args)
    manifest = run_scenario(cfg, args.out)
    print(f"run {cfg.label}: {manifest.n_steps} steps, {manifest.wall_clock_s:.2f}s wall")
    for name, ok in manifest.flags.items():
        print(f"  {name}: {'PASS' if ok else 'FAIL'}")
    print(f"  csv: {manifest.csv_path}")
    return EXIT_OK if all(manifest.flags.values()) else EXIT_ASSERTION


def _cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    nus = [float(v) for v in args.nu.split(",") if v]
    report = sweep(cfg, nus, args.out, workers=args.workers)
    print(f"sweep over nu = {report['nu_values']}")
    for row in report["per_nu"]:
        print(
            f"  nu = {row['nu']:>6g}: rate(P~) = {row['rate_P']:.5f} "
            f"(R2 {row['rate_P_r2']:.4f}), rate(grad Pu) = {row['rate_gradPu']:.5f}"
        )
    print(f"  log-log slope of rate(P~) vs nu: {report['acoustic_rate_loglog_slope']:.4f}")
    print(f"  grad Pu rate spread: {report['grad_Pu_rate_relative_spread']:.2%}")
    return EXIT_OK


def _cmd_linear(args) -> int:
    from .linear import mode_table, slowest_linear_rate
    from .spectral import make_grid
    import math

    rows = mode_table(args.nu, args.mu, args.kmax, args.pprime)
    lines = ["k1,k2,k_mag2,re_lambda_plus,im_lambda_plus,re_lambda_minus,im_lambda_minus,R_k_abs,lambda_parabolic"]
    for r in rows:
        lines.append(
            f"{r.k[0]},{r.k[1]},{r.k_mag2!r},{r.lambda_plus.real!r},{r.lambda_plus.imag!r},"
            f"{r.lambda_minus.real!r},{r.lambda_minus.imag!r},{abs(r.R_k)!r},{r.lambda_parabolic!r}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    n = max(8, 2 * args.kmax)
    n += n % 2
    grid = make_grid((2 * math.pi, 2 * math.pi), (n, n))
    rate, k = slowest_linear_rate(grid, args.nu, args.mu, args.pprime)
    print(f"slowest linear rate {rate:.6g} on mode {k}")
    return EXIT_OK


def _cmd_check(args) -> int:
    report = check_suite(args.corpus_size, args.seed)
    if args.out:
        with open(args.out, "w") as f:
            json.dump(report, f, indent=2, sort_keys=True, default=float)
            f.write("\n")
    for rep in report["reports"]:
        print(
            f"  {rep['inequality_id']:>22}: {rep['trials']} trials, "
            f"{rep['violations']} violations, worst ratio {rep['worst_ratio']:.6f}"
            + (
                f", fitted C = {rep['fitted_constant']:.4f}"
                if rep["fitted_constant"] is not None
                else ""
            )
        )
    if report["trials"]:
        print(f"  eigenmode Poincare ratio: {report['poincare_eigenmode_ratio']:.12f}")
        print(f"  identity residual max:    {report['identity_max_residual']:.3e}")
    print(f"check suite: {'PASS' if report['ok'] else 'FAIL'}")
    return EXIT_OK if report["ok"] else EXIT_ASSERTION


def _cmd_fit(args) -> int:
    window = None
    if args.window:
        lo, hi = (float(v) for v in args.window.split(","))
        window = (lo, hi)
    fit = fit_csv(args.csv, args.column, window)
    out = dataclasses.asdict(fit)
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="torusflow",
        description="Decay-rate measurement harness for periodic viscous flows",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate one scenario and write CSV + manifest")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="viscosity sweep with per-run parallelism")
    _add_config_args(p)
    p.add_argument("--nu", required=True, help="comma-separated list, e.g. 10,20,40,80")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("linear", help="emit the linearized mode table")
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--kmax", type=int, default=4)
    p.add_argument("--pprime", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    p.set_defaults(func=_cmd_linear)

    p = sub.add_parser("check", help="inequality and identity witness suite")
    p.add_argument("--corpus-size", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="optional JSON report path")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("fit", help="fit an exponential envelope to a CSV column")
    p.add_argument("--csv", required=True)
    p.add_argument("--column", required=True)
    p.add_argument("--window", default=None, help="t_lo,t_hi")
    p.set_defaults(func=_cmd_fit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
