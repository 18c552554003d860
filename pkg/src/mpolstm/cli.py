"""Command-line harness: plan / decompose / reconstruct / train / sweep / check.

All subcommands are batch-style and deterministic given their flags and
seeds.  Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import checks, mpo, planner, training, weightio

USAGE_EXIT = 1
RUNTIME_EXIT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _factors(text: str) -> tuple[int, ...]:
    try:
        out = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad factor list {text!r}")
    if not out or any(f < 1 for f in out):
        raise argparse.ArgumentTypeError(f"factors must be positive: {text!r}")
    return out


def _resolve_config(path: str) -> str:
    if os.path.exists(path):
        return path
    config_dir = os.environ.get("MPOLSTM_CONFIG_DIR")
    if config_dir:
        candidate = os.path.join(config_dir, path)
        if os.path.exists(candidate):
            return candidate
    raise FileNotFoundError(f"config file not found: {path}")


def cmd_plan(args) -> int:
    d_w, d_u = planner.bonds_for_target(args.target_rho, args.nx, args.nh,
                                        args.factors,
                                        args.hidden_factors or args.factors)
    hidden = args.hidden_factors or args.factors
    w_plan = planner.GateFusedPlan.from_uniform(args.factors, hidden, d_w)
    u_plan = planner.GateFusedPlan.from_uniform(hidden, hidden, d_u)
    report = planner.compression_ratio(w_plan, u_plan, args.nx, args.nh)
    print(f"d_w={d_w} d_u={d_u}")
    print(f"params_w={report.params_w} params_u={report.params_u} "
          f"params_dense={report.params_dense}")
    print(f"rho_w={report.rho_w:.4f} rho_u={report.rho_u:.4f} "
          f"rho_total={report.rho_total:.4f}")
    return 0


def _pick_entry(bundle: dict, name: str | None, want_mpo: bool):
    matches = {k: v for k, v in bundle.items()
               if isinstance(v, mpo.MpoOperator) == want_mpo}
    kind = "mpo" if want_mpo else "dense"
    if name is not None:
        if name not in matches:
            raise ValueError(f"no {kind} entry named {name!r} in file "
                             f"(found: {sorted(bundle)})")
        return name, matches[name]
    if len(matches) != 1:
        raise ValueError(f"need exactly one {kind} entry or an explicit "
                         f"--entry (found: {sorted(matches)})")
    return next(iter(matches.items()))


def cmd_decompose(args) -> int:
    bundle = weightio.load_weights(args.infile)
    name, w = _pick_entry(bundle, args.entry, want_mpo=False)
    if w.ndim != 2:
        raise ValueError(f"entry {name!r} is not a matrix")
    row_factors = args.row_factors or args.factors
    col_factors = args.col_factors or args.factors
    if row_factors is None or col_factors is None:
        raise ValueError("give --factors, or both --row-factors and --col-factors")
    if args.bond_cap is None:
        plan = mpo.full_plan(col_factors, row_factors)
    else:
        plan = mpo.uniform_plan(col_factors, row_factors, args.bond_cap)
    op = mpo.decompose(w, plan)
    err = np.linalg.norm(mpo.reconstruct(op) - w)
    rel = err / max(np.linalg.norm(w), 1e-300)
    weightio.save_weights(args.out, {name: op})
    print(f"entry={name} shape={w.shape[0]}x{w.shape[1]} bonds={plan.bond_dims}")
    print(f"dense_params={w.size} mpo_params={op.parameter_count}")
    print(f"reconstruction_error={rel:.6e} discarded_norm={op.discarded_norm:.6e}")
    return 0


def cmd_reconstruct(args) -> int:
    bundle = weightio.load_weights(args.infile)
    name, op = _pick_entry(bundle, args.entry, want_mpo=True)
    w = mpo.reconstruct(op)
    weightio.save_weights(args.out, {name: w})
    print(f"entry={name} shape={w.shape[0]}x{w.shape[1]} "
          f"mpo_params={op.parameter_count} dense_params={w.size}")
    return 0


def cmd_train(args) -> int:
    config = weightio.load_config(_resolve_config(args.config))
    method = args.method or config.methods[0]
    rate = args.rate if args.rate is not None else config.rates[0]
    seed = args.seed if args.seed is not None else config.seeds[0]
    row = training.train(config, method, rate, seed)
    print(f"rate={row.rate:g} method={row.method} metric={row.metric:.4f} "
          f"params={row.parameter_count} ratio={row.ratio_actual:.3f} "
          f"seed={row.seed} wall_time={row.wall_time:.2f}s")
    return 0


def cmd_sweep(args) -> int:
    config = weightio.load_config(_resolve_config(args.config))
    grid = training.trial_grid(config)
    if args.dry_run:
        print(f"{len(grid)} planned trials:")
        for rate, method, seed in grid:
            print(f"  rate={rate:g} method={method} seed={seed}")
        return 0
    report = training.sweep(config, jobs=args.jobs)
    fmt = args.fmt or ("json" if str(args.out).endswith(".json") else "csv")
    weightio.emit_report(report, fmt, args.out, include_timing=args.timing)
    print(f"{len(report.rows)} trials -> {args.out}")
    print(f"{'rate':>8} {'method':>8} {'metric':>10} {'params':>9} {'ratio':>8} {'seed':>5}")
    for row in report.sorted_rows():
        metric = f"{row.metric:.4f}" if np.isfinite(row.metric) else "failed"
        print(f"{row.rate:>8g} {row.method:>8} {metric:>10} "
              f"{row.parameter_count:>9} {row.ratio_actual:>8.2f} {row.seed:>5}")
    return 0


def cmd_check(args) -> int:
    results = checks.run_checks(name_filter=args.filter, seed=args.seed)
    if not results:
        print(f"no checks match filter {args.filter!r}", file=sys.stderr)
        return RUNTIME_EXIT
    failed = 0
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        print(f"{status} {name}: {detail}")
        failed += 0 if ok else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else RUNTIME_EXIT


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mpolstm",
                     description="LSTM compression via operator-chain "
                                 "factorization, with planning, training, "
                                 "and verification tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", parents=[], help="bond dimensions for a target ratio")
    p.add_argument("--target-rho", type=float, required=True)
    p.add_argument("--nx", type=int, required=True)
    p.add_argument("--nh", type=int, required=True)
    p.add_argument("--factors", type=_factors, required=True,
                   help="comma list, e.g. 8,2,2,8")
    p.add_argument("--hidden-factors", type=_factors, default=None,
                   help="hidden-side factors if different from --factors")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("decompose", help="factorize a dense entry of a weight file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--entry", default=None)
    p.add_argument("--factors", type=_factors, default=None,
                   help="factor list for both sides of a square matrix")
    p.add_argument("--row-factors", type=_factors, default=None)
    p.add_argument("--col-factors", type=_factors, default=None)
    p.add_argument("--bond-cap", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("reconstruct", help="densify an operator entry of a weight file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--entry", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("train", help="run a single training trial")
    p.add_argument("--config", required=True)
    p.add_argument("--method", choices=training.METHODS, default=None)
    p.add_argument("--rate", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run the full rate x method x seed grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="report.csv")
    p.add_argument("--fmt", choices=("csv", "json"), default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--timing", action="store_true",
                   help="record measured wall times (breaks byte-level "
                        "reproducibility of the report file)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="run the built-in invariant suite")
    p.add_argument("--filter", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, FloatingPointError, OSError,
            weightio.WeightFileError) as exc:
        print(f"mpolstm {args.command}: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
