"""Median scaled-regret curves from a plotdata CSV, one panel per policy family."""

import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("plotdata")
    ap.add_argument("--out", default="regret.png")
    args = ap.parse_args()

    curves = defaultdict(lambda: ([], []))
    with open(args.plotdata, newline="") as fh:
        for row in csv.DictReader(fh):
            xs, ys = curves[row["policy_id"]]
            xs.append(int(row["round"]))
            ys.append(float(row["median_scaled_regret"]))

    fig, axes = plt.subplots(1, 2, figsize=(11, 4), sharey=True)
    for pid, (xs, ys) in curves.items():
        ax = axes[1] if pid.startswith("ts[") else axes[0]
        style = "k--" if pid == "greedy" else "-"
        ax.plot(xs, ys, style, label=pid, lw=1)
    for ax, title in zip(axes, ("FP-CUCB and Greedy", "Thompson sampling")):
        ax.set_title(title)
        ax.set_xlabel("round")
        ax.legend(fontsize=6, ncol=2)
    axes[0].set_ylabel("median scaled regret")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out} ({len(curves)} curves)")


if __name__ == "__main__":
    main()
