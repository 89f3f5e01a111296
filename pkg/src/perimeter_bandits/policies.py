"""Decision policies: FP-CUCB for known and for scaling-only detection, Greedy, Thompson sampling.

All policies pick an allocation by solving the full-information problem for
a vector of per-arm rates (optimistic, estimated, or sampled). Arms are cells,
except for :class:`FPCUCB2`, whose arms are (cell, searcher) pairs whose rates
``omega[k, u] * lam[k]`` are learned directly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Union

import numpy as np

from .allocator import precompute_q, q_from_arm_rates, solve_optimal
from .domain import Allocation, CaseII, DetectionModel, MalformedInputError, allocation_of, detection_vector, intervals_of

log = logging.getLogger(__name__)


class PolicyContractError(ValueError):
    """A policy was called outside its preconditions."""


# --------------------------------------------------------------------------- #
# configurations


@dataclass(frozen=True)
class FPCUCB1:
    lambda_max: float
    kind: str = field(default="fpcucb1", init=False, repr=False)

    def __post_init__(self) -> None:
        _positive(lambda_max=self.lambda_max)

    @property
    def label(self) -> str:
        return f"lambda_max={_fmt(self.lambda_max)}"


@dataclass(frozen=True)
class FPCUCB2:
    tau_max: float
    kind: str = field(default="fpcucb2", init=False, repr=False)

    def __post_init__(self) -> None:
        _positive(tau_max=self.tau_max)

    @property
    def label(self) -> str:
        return f"tau_max={_fmt(self.tau_max)}"


@dataclass(frozen=True)
class Greedy:
    kind: str = field(default="greedy", init=False, repr=False)

    @property
    def label(self) -> str:
        return ""


@dataclass(frozen=True)
class ThompsonSampling:
    prior_mean: float
    prior_var: float
    kind: str = field(default="ts", init=False, repr=False)

    def __post_init__(self) -> None:
        _positive(prior_mean=self.prior_mean, prior_var=self.prior_var)

    @property
    def label(self) -> str:
        return f"mean={_fmt(self.prior_mean)};var={_fmt(self.prior_var)}"

    @property
    def prior(self) -> tuple[float, float]:
        return ts_prior_from_moments(self.prior_mean, self.prior_var)


PolicyConfig = Union[FPCUCB1, FPCUCB2, Greedy, ThompsonSampling]


def _positive(**params: float) -> None:
    for name, value in params.items():
        if not value > 0:
            raise MalformedInputError(f"{name} must be strictly positive, got {value}")


def _fmt(x: float) -> str:
    return f"{x:g}"


def policy_from_dict(data: Mapping) -> PolicyConfig:
    """Parse ``{"policy": "fpcucb1", "lambda_max": 20}`` and friends."""
    kind = data.get("policy")
    if kind == "fpcucb1":
        return FPCUCB1(float(data["lambda_max"]))
    if kind == "fpcucb2":
        return FPCUCB2(float(data["tau_max"]))
    if kind == "greedy":
        return Greedy()
    if kind == "ts":
        return ThompsonSampling(float(data["prior_mean"]), float(data["prior_var"]))
    raise MalformedInputError(f"unknown policy {kind!r}")


def policy_to_dict(config: PolicyConfig) -> dict:
    out = {"policy": config.kind}
    if isinstance(config, FPCUCB1):
        out["lambda_max"] = config.lambda_max
    elif isinstance(config, FPCUCB2):
        out["tau_max"] = config.tau_max
    elif isinstance(config, ThompsonSampling):
        out.update(prior_mean=config.prior_mean, prior_var=config.prior_var)
    return out


def policy_id(config: PolicyConfig) -> str:
    return f"{config.kind}[{config.label}]" if config.label else config.kind


# --------------------------------------------------------------------------- #
# indices


def fpcucb1_index(S, G, t: float, lambda_max: float):
    """Upper confidence index: mean + 2 ln t / G + sqrt(6 lambda_max ln t / G)."""
    G = np.asarray(G, dtype=float)
    if np.any(G <= 0):
        raise PolicyContractError("index needs strictly positive applied detection probability")
    logt = math.log(t)
    out = np.asarray(S, dtype=float) / G + 2.0 * logt / G + np.sqrt(6.0 * lambda_max * logt / G)
    return float(out) if out.ndim == 0 else out


def fpcucb2_index(S, Phi, t: float, tau_max: float):
    """Same confidence index for (cell, searcher) arms filtered by the scaling factors."""
    return fpcucb1_index(S, Phi, t, tau_max)


def greedy_estimate(S, G):
    """Filtered-Poisson rate estimate: observed counts over applied detection probability."""
    G = np.asarray(G, dtype=float)
    if np.any(G <= 0):
        raise PolicyContractError("estimate needs strictly positive applied detection probability")
    out = np.asarray(S, dtype=float) / G
    return float(out) if out.ndim == 0 else out


def ts_prior_from_moments(mean: float, var: float) -> tuple[float, float]:
    """Gamma (shape, rate) with the given mean and variance."""
    if not (mean > 0 and var > 0):
        raise PolicyContractError("prior mean and variance must be positive")
    return mean * mean / var, mean / var


# --------------------------------------------------------------------------- #
# state


@dataclass(frozen=True, eq=False)
class PolicyState:
    """Sufficient statistics: observed counts ``S`` and applied probability ``G`` per arm.

    ``t`` counts completed rounds, so the next decision is for round ``t + 1``.
    """

    S: np.ndarray
    G: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, config: PolicyConfig, K: int, U: int) -> "PolicyState":
        shape = (K, U) if isinstance(config, FPCUCB2) else (K,)
        return cls(np.zeros(shape), np.zeros(shape), 0)


def ts_sample_rates(state: PolicyState, alpha: float, beta: float, rng: np.random.Generator) -> np.ndarray:
    """Posterior draw per cell: Gamma(shape alpha + S_k, rate beta + G_k)."""
    shape = alpha + state.S
    scale = 1.0 / (beta + state.G)
    return np.array([rng.gamma(a, s) for a, s in zip(shape, scale)])


def init_schedule(config: PolicyConfig, K: int, U: int) -> np.ndarray:
    """Allocations played before the first index-based decision, one row per round.

    FPCUCB1 and Greedy put searcher 1 alone on cell t in round t. FPCUCB2
    walks every (cell, searcher) pair once, searcher 1 first. Thompson
    sampling has no such phase.
    """
    if isinstance(config, (FPCUCB1, Greedy)):
        rows = np.zeros((K, K), dtype=np.int64)
        rows[np.arange(K), np.arange(K)] = 1
        return rows
    if isinstance(config, FPCUCB2):
        rows = np.zeros((K * U, K), dtype=np.int64)
        t = np.arange(K * U)
        rows[t, t % K] = t // K + 1
        return rows
    return np.zeros((0, K), dtype=np.int64)


def _init_allocation(config: PolicyConfig, K: int, U: int, t: int) -> Allocation | None:
    rows = init_schedule(config, K, U)
    return Allocation(tuple(rows[t - 1]), U) if t <= rows.shape[0] else None


def arm_rates(state: PolicyState, config: PolicyConfig, t: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """The rate vector the policy optimises against in round ``t``."""
    if isinstance(config, FPCUCB1):
        return fpcucb1_index(state.S, state.G, t, config.lambda_max)
    if isinstance(config, FPCUCB2):
        return fpcucb2_index(state.S, state.G, t, config.tau_max)
    if isinstance(config, Greedy):
        return greedy_estimate(state.S, state.G)
    if rng is None:
        raise PolicyContractError("Thompson sampling needs a random generator")
    alpha, beta = config.prior
    return ts_sample_rates(state, alpha, beta, rng)


def policy_select(state: PolicyState, config: PolicyConfig, model: DetectionModel,
                  t: int | None = None, rng: np.random.Generator | None = None) -> Allocation:
    """Allocation for round ``t`` (defaults to ``state.t + 1``).

    Case-I policies use the full detection ``model``; :class:`FPCUCB2` reads
    only the scaling rules of a :class:`CaseII` model and never its baselines.
    """
    t = state.t + 1 if t is None else t
    if t < 1:
        raise PolicyContractError("rounds start at t = 1")
    K, U = model.K, model.U
    init = _init_allocation(config, K, U, t)
    if init is not None:
        return init
    rates = arm_rates(state, config, t, rng)
    if isinstance(config, FPCUCB2):
        if not isinstance(model, CaseII):
            raise PolicyContractError("FPCUCB2 needs the scaling rules of a case-II model")
        q = q_from_arm_rates(rates, model.scaling_table())
    else:
        q = precompute_q(rates, model)
    intervals, _ = solve_optimal(q, K, U)
    return allocation_of(intervals, K, U)


def policy_observe(state: PolicyState, config: PolicyConfig, model: DetectionModel,
                   allocation: Allocation, Y) -> PolicyState:
    """Fold one round's detections into the statistics.

    ``Y`` is a length-K count vector, or for :class:`FPCUCB2` optionally a
    mapping ``{(k, u): count}`` with 1-based keys.
    """
    K = model.K
    if isinstance(Y, Mapping):
        vec = np.zeros(K, dtype=np.int64)
        for (k, u), y in Y.items():
            if allocation.cells[k - 1] != u and y:
                raise PolicyContractError(f"count for cell {k} reported against searcher {u} not covering it")
            vec[k - 1] += y
        Y = vec
    Y = np.asarray(Y)
    if Y.shape != (K,) or np.any(Y < 0):
        raise PolicyContractError("observations must be K nonnegative counts")
    searched = allocation.searched()
    if np.any(Y[~searched] > 0):
        raise PolicyContractError("detections reported in an unsearched cell")
    S, G = state.S.copy(), state.G.copy()
    if isinstance(config, FPCUCB2):
        if not isinstance(model, CaseII):
            raise PolicyContractError("FPCUCB2 needs the scaling rules of a case-II model")
        scale = model.scaling_table()
        for i, j, u in intervals_of(allocation):
            S[i - 1 : j, u - 1] += Y[i - 1 : j]
            G[i - 1 : j, u - 1] += scale[u - 1, j - i + 1]
    else:
        S += Y
        G += detection_vector(model, allocation)
    return replace(state, S=S, G=G, t=state.t + 1)


def warn_if_bound_violated(config: PolicyConfig, true_max: float) -> None:
    bound = getattr(config, "lambda_max", None) or getattr(config, "tau_max", None)
    if bound is not None and bound < true_max:
        log.warning("%s: rate bound %g is below the true maximum %g", policy_id(config), bound, true_max)
