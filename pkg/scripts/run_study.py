"""Run one of the four simulation studies and print its quantile table.

    python scripts/run_study.py --test i --seed 7 --out runs/test-i
    python scripts/run_study.py --test iv --seed 7 --runs 10 --reps 2   # quick look
"""

import argparse
from pathlib import Path

from perimeter_bandits.harness import (
    emit_plotdata,
    load_preset,
    policy_order,
    run_experiment,
    summarize,
    write_plotdata,
    write_summary,
)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--test", default="i", choices=["i", "ii", "iii", "iv"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--runs", type=int, default=50)
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--horizon", type=int, default=2000)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    out = args.out or Path("runs") / f"test-{args.test}-seed{args.seed}"
    cfg = load_preset(args.test, master_seed=args.seed, n_instances=args.runs, reps_per_instance=args.reps,
                      horizon=args.horizon, workers=args.workers, out_dir=out)
    records = run_experiment(cfg, progress=True)
    print()
    order = policy_order(out)
    rows = summarize(records, order=order)
    write_summary(rows, out / "summary.csv")
    write_plotdata(emit_plotdata(records, cfg.horizon, cfg.stride, 10, order), out / "plotdata.csv")
    print(f"{'policy':8s} {'params':18s} {'q025':>9s} {'median':>9s} {'q975':>9s}")
    for kind, params, lo, med, hi in rows:
        print(f"{kind:8s} {params:18s} {lo:9.2f} {med:9.2f} {hi:9.2f}")


if __name__ == "__main__":
    main()
