"""Command-line entry point: experiments, summaries, the exact solver and the bound checkers."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .allocator import optimality_gaps, precompute_q, solve_optimal
from .analytics import BoundInputs, concentration_check, regret_upper_bound
from .domain import Instance, allocation_of
from .environment import ArrivalStream, make_rng
from .harness import (
    QUANTILES,
    emit_plotdata,
    load_preset,
    load_records,
    policy_order,
    run_experiment,
    run_policy,
    summarize,
    write_plotdata,
    write_summary,
)
from .policies import FPCUCB1, warn_if_bound_violated


def _cmd_run(args) -> int:
    overrides = dict(master_seed=args.seed, workers=args.workers, fast_env=args.fast_env)
    if args.runs is not None:
        overrides["n_instances"] = args.runs
    if args.reps is not None:
        overrides["reps_per_instance"] = args.reps
    if args.horizon is not None:
        overrides["horizon"] = args.horizon
    out = Path(args.out or f"runs/test-{args.test}-seed{args.seed}")
    cfg = load_preset(args.test, out_dir=out, **overrides)
    records = run_experiment(cfg, progress=not args.quiet)
    if not args.quiet:
        print()
    write_summary(summarize(records, order=policy_order(out)), out / "summary.csv")
    print(f"{len(records)} records in {out}; summary at {out / 'summary.csv'}")
    return 0


def _cmd_summarize(args) -> int:
    src = Path(args.input)
    rows = summarize(load_records(src), QUANTILES, order=policy_order(src))
    dest = Path(args.out) if args.out else src / "summary.csv"
    write_summary(rows, dest)
    for row in rows:
        print(f"{row[0]:8s} {row[1]:18s} " + " ".join(f"{v:9.2f}" for v in row[2:]))
    return 0


def _cmd_plotdata(args) -> int:
    src = Path(args.input)
    cfg = json.loads((src / "config.json").read_text())
    rows = emit_plotdata(load_records(src), cfg["horizon"], cfg["stride"], args.stride, policy_order(src))
    dest = Path(args.out) if args.out else src / "plotdata.csv"
    write_plotdata(rows, dest)
    print(f"{len(rows)} rows written to {dest}")
    return 0


def _read_rates(path: str) -> np.ndarray:
    data = json.loads(Path(path).read_text())
    return np.asarray(data["lambda"] if isinstance(data, dict) else data, dtype=float)


def _cmd_solve(args) -> int:
    inst = Instance.load(args.instance)
    lam = _read_rates(args.lambda_override) if args.lambda_override else inst.lam
    intervals, value = solve_optimal(precompute_q(lam, inst.model))
    alloc = allocation_of(intervals, inst.K, inst.U)
    print(json.dumps({"intervals": [list(iv) for iv in intervals], "allocation": list(alloc.cells),
                      "value": value}))
    return 0


def _cmd_bound_check(args) -> int:
    inst = Instance.load(args.instance)
    policy = FPCUCB1(args.lambda_max)
    warn_if_bound_violated(policy, inst.lambda_max_true)
    gaps = optimality_gaps(inst)
    curves = []
    for rep in range(args.reps):
        stream = ArrivalStream.generate(inst.lam, args.horizon, make_rng(args.seed, rep, "env"))
        run = run_policy(inst, policy, stream, opt=gaps.opt)
        curves.append(run.trace.cumulative)
    mean = np.mean(curves, axis=0)
    rounds = sorted({int(r) for r in np.unique(np.geomspace(1, args.horizon, 12).round())} | {args.horizon})
    print(f"{'round':>7s} {'mean regret':>14s} {'bound':>14s}")
    worst = 0
    for n in rounds:
        bound = regret_upper_bound(BoundInputs(n, args.lambda_max, gaps))
        flag = "" if mean[n - 1] <= bound else "  VIOLATED"
        worst += bool(flag)
        print(f"{n:7d} {mean[n - 1]:14.4f} {bound:14.4f}{flag}")
    return 1 if worst else 0


def _cmd_conc_check(args) -> int:
    rng = make_rng(args.seed, "concentration")
    print(f"{'s':>3s} {'mu':>5s} {'gamma':>6s} {'rate':>10s} {'bound':>10s} {'ok':>3s}")
    bad = 0
    for s in (1, 5, 20):
        for mu in (0.5, 2.0, 8.0):
            for g in (1.0, 0.5):
                rate, bound = concentration_check(s, np.full(s, g), mu, mu, args.t, args.trials, rng)
                ok = rate <= bound + 3 * math.sqrt(bound / args.trials)
                bad += not ok
                print(f"{s:3d} {mu:5.1f} {g:6.2f} {rate:10.2e} {bound:10.2e} {'yes' if ok else 'NO':>3s}")
    return 1 if bad else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="perimeter-bandits")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a simulation study")
    r.add_argument("--test", required=True, choices=["i", "ii", "iii", "iv"])
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--runs", type=int, help="number of sampled instances")
    r.add_argument("--reps", type=int, help="environment replications per instance")
    r.add_argument("--horizon", type=int)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--out")
    r.add_argument("--fast-env", action="store_true")
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("summarize", help="quantile table from stored records")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_summarize)

    pd = sub.add_parser("plotdata", help="median scaled-regret curves")
    pd.add_argument("--in", dest="input", required=True)
    pd.add_argument("--stride", type=int, default=10)
    pd.add_argument("--out")
    pd.set_defaults(func=_cmd_plotdata)

    so = sub.add_parser("solve", help="optimal allocation for an instance file")
    so.add_argument("--instance", required=True)
    so.add_argument("--lambda-override")
    so.set_defaults(func=_cmd_solve)

    b = sub.add_parser("bound-check", help="FP-CUCB regret against its upper bound")
    b.add_argument("--instance", required=True)
    b.add_argument("--lambda-max", type=float, required=True)
    b.add_argument("--horizon", type=int, required=True)
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=_cmd_bound_check)

    c = sub.add_parser("conc-check", help="Monte-Carlo check of the rate-estimator deviation bound")
    c.add_argument("--t", type=float, required=True)
    c.add_argument("--trials", type=int, default=100_000)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=_cmd_conc_check)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
