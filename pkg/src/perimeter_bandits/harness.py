"""Experiment orchestration: instance samplers, seeded replication, persistence and summaries.

Every (instance, rep) pair draws one arrival stream that all policies share,
so policies that act identically see identical detections. Policy-side
randomness (Thompson draws) gets its own stream per (instance, rep, policy).
"""

from __future__ import annotations

import csv
import json
import logging
import multiprocessing as mp
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels as kern
from .allocator import precompute_q, solve_optimal
from .analytics import RegretTrace, UndefinedMetricError
from .domain import Allocation, CaseII, Instance, MalformedInputError, detection_vector
from .environment import ArrivalStream, make_rng, stream_seed
from .policies import (
    FPCUCB1,
    FPCUCB2,
    Greedy,
    PolicyConfig,
    PolicyState,
    ThompsonSampling,
    init_schedule,
    policy_from_dict,
    policy_id,
    policy_observe,
    policy_select,
    policy_to_dict,
    warn_if_bound_violated,
)

log = logging.getLogger(__name__)

PRESET_DIR = Path(__file__).parent / "presets"
TEST_IDS = ("i", "ii", "iii", "iv")
QUANTILES = (0.025, 0.5, 0.975)
QUANTILE_METHOD = "linear"


# --------------------------------------------------------------------------- #
# instance samplers


def _band_rates(rng: np.random.Generator) -> np.ndarray:
    lows = []
    for k in range(1, 51):
        if k <= 10:
            lows.append(k)
        elif k <= 20:
            lows.append(20 - k)
        elif k <= 30:
            lows.append(k - 20)
        elif k <= 40:
            lows.append(40 - k)
        else:
            lows.append(k - 40)
    lows = np.array(lows, dtype=float)
    return rng.uniform(lows, lows + 10)


def sample_instance(test_id: str, rng: np.random.Generator) -> Instance:
    """Draw (lambda, omega) for one of the four simulation studies.

    Beta(a, b) has mean a / (a + b). Baselines are drawn per searcher column.
    """
    if test_id == "i":
        K, U = 15, 5
        lam = rng.uniform(10, 20, size=K)
        omega = rng.beta(np.arange(1, U + 1, dtype=float), 2.0, size=(K, U))
        phi = "reciprocal"
    elif test_id == "ii":
        K, U = 50, 3
        lam = _band_rates(rng)
        omega = rng.beta(np.arange(1, U + 1, dtype=float) + 2, 2.0, size=(K, U))
        phi = "half-offset"
    elif test_id == "iii":
        K, U = 25, 10
        lam = rng.uniform(90, 100, size=K)
        omega = rng.beta(30.0, 5.0, size=(K, U))
        phi = "reciprocal"
    elif test_id == "iv":
        K, U = 25, 5
        lam = rng.uniform(0.4, 1.0, size=K)
        omega = rng.beta(1.0, 1.0, size=(K, U))
        phi = "half-offset"
    else:
        raise MalformedInputError(f"unknown test id {test_id!r}; expected one of {TEST_IDS}")
    return Instance(lam, CaseII(phi, omega), name=f"test-{test_id}")


# --------------------------------------------------------------------------- #
# configuration


def _grid(rate_bounds: Sequence[float], means: Sequence[float], variances: Sequence[float]) -> list[PolicyConfig]:
    out: list[PolicyConfig] = [FPCUCB1(float(v)) for v in rate_bounds]
    out += [ThompsonSampling(float(m), float(v)) for v in variances for m in means]
    out.append(Greedy())
    return out


def preset_policies(test_id: str) -> list[PolicyConfig]:
    if test_id in ("i", "ii"):
        grid = (1, 5, 10, 20, 40, 60)
        return _grid(grid, grid, (1, 5, 10))
    if test_id == "iii":
        grid = (1, 10, 25, 50, 100, 200)
        return _grid(grid, grid, (5, 10, 25))
    if test_id == "iv":
        grid = (0.1, 1, 5, 10, 20, 40)
        return _grid(grid, grid, (1, 5, 10))
    raise MalformedInputError(f"unknown test id {test_id!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    test_id: str
    policies: tuple[PolicyConfig, ...]
    n_instances: int = 50
    reps_per_instance: int = 5
    horizon: int = 2000
    master_seed: int = 0
    out_dir: Path | None = None
    fast_env: bool = False
    workers: int = 1
    stride: int = 10
    instance_file: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "policies", tuple(self.policies))
        if self.test_id not in TEST_IDS and self.test_id != "custom":
            raise MalformedInputError(f"unknown test id {self.test_id!r}")
        if self.test_id == "custom" and self.instance_file is None:
            raise MalformedInputError("custom experiments need an instance file")
        for name in ("n_instances", "reps_per_instance", "horizon", "workers", "stride"):
            if getattr(self, name) < 1:
                raise MalformedInputError(f"{name} must be positive")
        if not self.policies:
            raise MalformedInputError("policy list is empty")
        ids = [policy_id(p) for p in self.policies]
        if len(set(ids)) != len(ids):
            raise MalformedInputError("duplicate policy configurations")
        if self.out_dir is not None:
            object.__setattr__(self, "out_dir", Path(self.out_dir))

    @classmethod
    def preset(cls, test_id: str, **overrides) -> "ExperimentConfig":
        return cls(test_id=test_id, policies=tuple(preset_policies(test_id)), **overrides)

    def to_dict(self) -> dict:
        return {
            "test_id": self.test_id,
            "n_instances": self.n_instances,
            "reps_per_instance": self.reps_per_instance,
            "horizon": self.horizon,
            "master_seed": self.master_seed,
            "fast_env": self.fast_env,
            "stride": self.stride,
            "instance_file": self.instance_file,
            "policies": [policy_to_dict(p) for p in self.policies],
        }

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> "ExperimentConfig":
        data = dict(data)
        data["policies"] = tuple(policy_from_dict(p) for p in data["policies"])
        data.pop("workers", None)
        data.pop("out_dir", None)
        data.update(overrides)
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path, **overrides) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()), **overrides)


def write_presets(directory: Path = PRESET_DIR) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for tid in TEST_IDS:
        cfg = ExperimentConfig.preset(tid)
        (directory / f"test-{tid}.json").write_text(json.dumps(cfg.to_dict(), indent=1) + "\n")


def load_preset(test_id: str, **overrides) -> ExperimentConfig:
    path = PRESET_DIR / f"test-{test_id}.json"
    if path.exists():
        return ExperimentConfig.load(path, **overrides)
    return ExperimentConfig.preset(test_id, **overrides)


# --------------------------------------------------------------------------- #
# single runs


def trace_rounds(horizon: int, stride: int) -> np.ndarray:
    rounds = list(range(0, horizon + 1, stride))
    if rounds[-1] != horizon:
        rounds.append(horizon)
    return np.array(rounds)


def downsample(scaled: np.ndarray, stride: int) -> np.ndarray:
    rounds = trace_rounds(scaled.size, stride)
    padded = np.concatenate([[0.0], scaled])
    return padded[rounds]


@dataclass(frozen=True)
class RunOutput:
    regret: np.ndarray
    opt: float
    actions: np.ndarray | None = None

    @property
    def trace(self) -> RegretTrace:
        return RegretTrace(self.regret, self.opt)


def _model_arrays(model):
    if isinstance(model, CaseII):
        return False, np.zeros((1, 1, 1, 1)), model.scaling_table(), np.ascontiguousarray(model.omega)
    return True, np.ascontiguousarray(model.cover_table()), np.zeros((1, 2)), np.zeros((1, 1))


def _kernel_params(config: PolicyConfig) -> tuple[int, float, float]:
    if isinstance(config, FPCUCB1):
        return kern.FPCUCB1, config.lambda_max, 0.0
    if isinstance(config, FPCUCB2):
        return kern.FPCUCB2, config.tau_max, 0.0
    if isinstance(config, Greedy):
        return kern.GREEDY, 0.0, 0.0
    alpha, beta = config.prior
    return kern.TS, alpha, beta


def run_policy(instance: Instance, config: PolicyConfig, stream: ArrivalStream,
               rng: np.random.Generator | None = None, opt: float | None = None,
               record_actions: bool = False) -> RunOutput:
    """Compiled run of one policy against a pre-drawn arrival stream."""
    if isinstance(config, FPCUCB2) and not isinstance(instance.model, CaseII):
        raise MalformedInputError("FPCUCB2 needs a case-II model")
    if opt is None:
        opt = solve_optimal(precompute_q(instance.lam, instance.model))[1]
    if opt <= 0:
        raise UndefinedMetricError("optimal expected reward is zero")
    rng = np.random.Generator(np.random.Philox(0)) if rng is None else rng
    n = stream.horizon
    K, U = instance.K, instance.U
    use_cover, cover, scale, omega = _model_arrays(instance.model)
    kind, p1, p2 = _kernel_params(config)
    regret = np.zeros(n)
    actions = np.zeros((n, K) if record_actions else (1, K), dtype=np.int64)
    kern.simulate(kind, float(p1), float(p2), K, U, use_cover, cover, scale, omega,
                  np.ascontiguousarray(instance.lam), float(opt), stream.X, stream.offsets,
                  stream.uniforms, stream.fast, stream.fast_u, rng, init_schedule(config, K, U),
                  regret, actions, record_actions)
    return RunOutput(regret, float(opt), actions if record_actions else None)


def run_policy_reference(instance: Instance, config: PolicyConfig, stream: ArrivalStream,
                         rng: np.random.Generator | None = None,
                         opt: float | None = None) -> tuple[list[Allocation], RegretTrace]:
    """Same run as :func:`run_policy` through the public policy API, one round at a time."""
    if opt is None:
        opt = solve_optimal(precompute_q(instance.lam, instance.model))[1]
    state = PolicyState.initial(config, instance.K, instance.U)
    actions, regret = [], []
    for t in range(1, stream.horizon + 1):
        a = policy_select(state, config, instance.model, t, rng)
        gamma = detection_vector(instance.model, a)
        Y = stream.observe(t, gamma)
        regret.append(max(opt - float(gamma @ instance.lam), 0.0))
        state = policy_observe(state, config, instance.model, a, Y)
        actions.append(a)
    return actions, RegretTrace(np.array(regret), opt)


# --------------------------------------------------------------------------- #
# experiments


@dataclass(frozen=True, eq=False)
class RunRecord:
    instance: int
    rep: int
    policy: str
    seed: int
    final_scaled_regret: float
    trace: np.ndarray
    wall_clock: float = 0.0

    def same_result(self, other: "RunRecord") -> bool:
        return (self.instance, self.rep, self.policy, self.seed, self.final_scaled_regret) == (
            other.instance, other.rep, other.policy, other.seed, other.final_scaled_regret
        ) and np.array_equal(self.trace, other.trace)


_INSTANCE_CACHE: dict[tuple, tuple[Instance, float]] = {}


def experiment_instance(config: ExperimentConfig, index: int) -> tuple[Instance, float]:
    key = (config.test_id, config.master_seed, index, config.instance_file)
    if key not in _INSTANCE_CACHE:
        if config.test_id == "custom":
            inst = Instance.load(config.instance_file)
        else:
            inst = sample_instance(config.test_id, make_rng(config.master_seed, index, "instance"))
        opt = solve_optimal(precompute_q(inst.lam, inst.model))[1]
        if len(_INSTANCE_CACHE) > 256:
            _INSTANCE_CACHE.clear()
        _INSTANCE_CACHE[key] = (inst, opt)
    return _INSTANCE_CACHE[key]


def run_unit(config: ExperimentConfig, index: int, rep: int) -> list[RunRecord]:
    """All policies on one (instance, rep), sharing its arrival stream."""
    inst, opt = experiment_instance(config, index)
    env_seed = stream_seed(config.master_seed, index, rep, "env")
    stream = ArrivalStream.generate(inst.lam, config.horizon, make_rng(config.master_seed, index, rep, "env"),
                                    fast=config.fast_env)
    out = []
    for pol in config.policies:
        pid = policy_id(pol)
        start = time.perf_counter()
        run = run_policy(inst, pol, stream, make_rng(config.master_seed, index, rep, pid), opt)
        scaled = run.trace.scaled
        out.append(RunRecord(index, rep, pid, env_seed, float(scaled[-1]),
                             downsample(scaled, config.stride), time.perf_counter() - start))
    return out


def _unit_worker(args) -> list[RunRecord]:
    config, index, rep = args
    return run_unit(config, index, rep)


def _policy_file(pid: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", pid).strip("_") + ".csv"


RECORD_COLUMNS = ("instance", "rep", "seed", "final_scaled_regret", "trace_json")


def _record_row(r: RunRecord) -> list:
    return [r.instance, r.rep, r.seed, repr(r.final_scaled_regret), json.dumps(r.trace.tolist())]


class RecordWriter:
    """Single writer for per-policy record CSVs plus a manifest of finished units."""

    def __init__(self, out_dir: Path, config: ExperimentConfig):
        self.out_dir = out_dir
        self.records_dir = out_dir / "records"
        self.records_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = out_dir / "manifest.jsonl"
        self.failures: list[tuple[int, int, str, str]] = []
        (out_dir / "config.json").write_text(json.dumps(config.to_dict(), indent=1) + "\n")
        for pol in config.policies:
            path = self.records_dir / _policy_file(policy_id(pol))
            if not path.exists():
                with open(path, "w", newline="") as fh:
                    csv.writer(fh).writerow(RECORD_COLUMNS)

    def completed(self) -> set[tuple[int, int]]:
        if not self.manifest.exists():
            return set()
        done = set()
        for line in self.manifest.read_text().splitlines():
            if line.strip():
                entry = json.loads(line)
                done.add((entry["instance"], entry["rep"]))
        return done

    def write(self, records: Sequence[RunRecord]) -> None:
        """Append records; the unit enters the manifest only if every record landed."""
        ok = True
        for r in records:
            try:
                with open(self.records_dir / _policy_file(r.policy), "a", newline="") as fh:
                    csv.writer(fh).writerow(_record_row(r))
            except OSError as exc:
                log.error("could not write record %s/%s/%s: %s", r.instance, r.rep, r.policy, exc)
                self.failures.append((r.instance, r.rep, r.policy, str(exc)))
                ok = False
        if records and ok:
            entry = {"instance": records[0].instance, "rep": records[0].rep,
                     "wall_clock": {r.policy: round(r.wall_clock, 6) for r in records}}
            with open(self.manifest, "a") as fh:
                fh.write(json.dumps(entry) + "\n")


def run_experiment(config: ExperimentConfig, progress: bool = False) -> list[RunRecord]:
    """Run every instance x rep x policy cell; resumes from ``out_dir`` when present."""
    for pol in config.policies:
        if config.test_id != "custom":
            continue
        inst, _ = experiment_instance(config, 0)
        warn_if_bound_violated(pol, inst.lambda_max_true)
    units = [(i, r) for i in range(config.n_instances) for r in range(config.reps_per_instance)]
    writer = RecordWriter(config.out_dir, config) if config.out_dir is not None else None
    records: list[RunRecord] = []
    if writer is not None:
        done = writer.completed()
        if done:
            records = [r for r in load_records(config.out_dir) if (r.instance, r.rep) in done]
            units = [u for u in units if u not in done]
    jobs = [(config, i, r) for i, r in units]
    if config.workers > 1 and len(jobs) > 1:
        ctx = mp.get_context("spawn")
        with ctx.Pool(config.workers) as pool:
            results: Iterable = pool.imap_unordered(_unit_worker, jobs)
            for batch in results:
                _collect(batch, records, writer, progress, len(jobs))
    else:
        for job in jobs:
            _collect(_unit_worker(job), records, writer, progress, len(jobs))
    records.sort(key=lambda r: (r.instance, r.rep, r.policy))
    return records


def _collect(batch, records, writer, progress, total) -> None:
    records.extend(batch)
    if writer is not None:
        writer.write(batch)
    if progress:
        done = len({(r.instance, r.rep) for r in records})
        print(f"\r{done} units done ({total} scheduled)", end="", flush=True)


def load_records(out_dir: str | Path) -> list[RunRecord]:
    out_dir = Path(out_dir)
    config = json.loads((out_dir / "config.json").read_text())
    records = []
    for pol in config["policies"]:
        pid = policy_id(policy_from_dict(pol))
        path = out_dir / "records" / _policy_file(pid)
        if not path.exists():
            continue
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                records.append(RunRecord(int(row["instance"]), int(row["rep"]), pid, int(row["seed"]),
                                         float(row["final_scaled_regret"]),
                                         np.array(json.loads(row["trace_json"]), dtype=float)))
    records.sort(key=lambda r: (r.instance, r.rep, r.policy))
    return records


def policy_order(out_dir: str | Path) -> list[str]:
    config = json.loads((Path(out_dir) / "config.json").read_text())
    return [policy_id(policy_from_dict(p)) for p in config["policies"]]


# --------------------------------------------------------------------------- #
# summaries


def _split_id(pid: str) -> tuple[str, str]:
    if "[" in pid:
        kind, rest = pid.split("[", 1)
        return kind, rest.rstrip("]")
    return pid, ""


def summarize(records: Sequence[RunRecord], quantiles: Sequence[float] = QUANTILES,
              order: Sequence[str] | None = None) -> list[tuple]:
    """Per policy: (policy, params, lower quantile, median, upper quantile) of final scaled regret."""
    groups: dict[str, list[float]] = {}
    for r in sorted(records, key=lambda r: (r.instance, r.rep)):
        groups.setdefault(r.policy, []).append(r.final_scaled_regret)
    order = list(order) if order is not None else sorted(groups)
    rows = []
    for pid in order:
        vals = groups.get(pid)
        if not vals:
            log.warning("no records for %s; row omitted", pid)
            continue
        qs = np.quantile(np.array(vals), quantiles, method=QUANTILE_METHOD)
        kind, params = _split_id(pid)
        rows.append((kind, params, *(float(v) for v in qs)))
    return rows


def summary_columns(quantiles: Sequence[float] = QUANTILES) -> list[str]:
    names = []
    for q in quantiles:
        names.append("median" if q == 0.5 else "q" + f"{q:.3f}".split(".")[1].rstrip("0").ljust(3, "0"))
    return ["policy", "params", *names]


def write_summary(rows: Sequence[tuple], path: str | Path, quantiles: Sequence[float] = QUANTILES) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(summary_columns(quantiles))
        for row in rows:
            w.writerow([row[0], row[1], *(repr(v) for v in row[2:])])
    meta = {"quantiles": list(quantiles), "quantile_method": QUANTILE_METHOD,
            "statistic": "scaled regret at the horizon"}
    path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=1) + "\n")


def emit_plotdata(records: Sequence[RunRecord], horizon: int, trace_stride: int, stride: int = 1,
                  order: Sequence[str] | None = None) -> list[tuple[int, str, float]]:
    """Median scaled-regret curve per policy at the stored rounds that are multiples of ``stride``."""
    rounds = trace_rounds(horizon, trace_stride)
    groups: dict[str, list[np.ndarray]] = {}
    for r in sorted(records, key=lambda r: (r.instance, r.rep)):
        if r.trace.size != rounds.size:
            raise MalformedInputError(f"record {r.instance}/{r.rep}/{r.policy} has a trace for a different horizon")
        groups.setdefault(r.policy, []).append(r.trace)
    keep = (rounds % stride == 0) | (rounds == horizon)
    rows = []
    for pid in (order if order is not None else sorted(groups)):
        if pid not in groups:
            continue
        med = np.median(np.vstack(groups[pid]), axis=0)
        rows.extend((int(t), pid, float(m)) for t, m, k in zip(rounds, med, keep) if k)
    return rows


def write_plotdata(rows: Sequence[tuple[int, str, float]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "policy_id", "median_scaled_regret"])
        for t, pid, m in rows:
            w.writerow([t, pid, repr(m)])
