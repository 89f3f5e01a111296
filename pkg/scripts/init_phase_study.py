"""How much of FP-CUCB's and Greedy's regret comes from the start-up phase.

Replays test-(i) instances with four start-up schedules (the shipped
single-searcher rule and three alternatives that also search every cell at
least once) and prints median scaled regret at n = 2000. Used to check
whether a different start-up could explain gaps to published numbers.

    python scripts/init_phase_study.py --instances 50 --reps 2
"""

import argparse

import numpy as np

from perimeter_bandits import _kernels as kern
from perimeter_bandits.environment import ArrivalStream, make_rng
from perimeter_bandits.harness import ExperimentConfig, _kernel_params, _model_arrays, experiment_instance
from perimeter_bandits.policies import FPCUCB1, Greedy, policy_id


def single(K: int, U: int) -> np.ndarray:
    """Shipped rule: searcher 1 alone on cell t."""
    rows = np.zeros((K, K), np.int64)
    rows[np.arange(K), np.arange(K)] = 1
    return rows


def rotate(K: int, U: int) -> np.ndarray:
    """All searchers on single cells t, t+1, ..., wrapping around."""
    rows = np.zeros((K, K), np.int64)
    for t in range(K):
        for u in range(U):
            rows[t, (t + u) % K] = u + 1
    return rows


def spread(K: int, U: int) -> np.ndarray:
    """The line cut into U near-equal blocks, one per searcher, every round."""
    row = np.zeros(K, np.int64)
    for u, block in enumerate(np.array_split(np.arange(K), U)):
        row[block] = u + 1
    return np.tile(row, (K, 1))


def sweep(K: int, U: int) -> np.ndarray:
    """Searcher 1 covers the whole line, every round."""
    return np.ones((K, K), np.int64)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=20261016)
    ap.add_argument("--instances", type=int, default=50)
    ap.add_argument("--reps", type=int, default=2)
    args = ap.parse_args()

    cfg = ExperimentConfig.preset("i", master_seed=args.seed)
    policies = [Greedy(), FPCUCB1(1.0), FPCUCB1(20.0), FPCUCB1(60.0)]
    for rule in (single, rotate, spread, sweep):
        finals = {policy_id(p): [] for p in policies}
        for i in range(args.instances):
            inst, opt = experiment_instance(cfg, i)
            K, U = inst.K, inst.U
            use_cover, cover, scale, omega = _model_arrays(inst.model)
            for rep in range(args.reps):
                stream = ArrivalStream.generate(inst.lam, cfg.horizon, make_rng(cfg.master_seed, i, rep, "env"))
                for pol in policies:
                    kind, p1, p2 = _kernel_params(pol)
                    regret = np.zeros(cfg.horizon)
                    kern.simulate(kind, p1, p2, K, U, use_cover, cover, scale, omega, inst.lam, opt,
                                  stream.X, stream.offsets, stream.uniforms, False, stream.fast_u, make_rng(0),
                                  rule(K, U), regret, np.zeros((1, K), np.int64), False)
                    finals[policy_id(pol)].append(regret.sum() / opt)
        cells = "  ".join(f"{pid} {np.median(v):7.2f}" for pid, v in finals.items())
        print(f"{rule.__name__:7s} {cells}", flush=True)


if __name__ == "__main__":
    main()
