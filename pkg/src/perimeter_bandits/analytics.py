"""Reward and regret bookkeeping, analytical regret bounds, and Monte-Carlo checkers."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Literal, Mapping, Sequence

import numpy as np

from .allocator import GapSummary, feasible_allocations, precompute_q, solve_optimal, CapacityError
from .domain import Allocation, DetectionModel, Instance, detection_vector


class UndefinedMetricError(ValueError):
    """Scaled regret is undefined when the optimal reward is zero."""


class BoundInputError(ValueError):
    """Gap inputs are inconsistent (e.g. smallest gap above largest gap)."""


# --------------------------------------------------------------------------- #
# rewards and regret


def expected_reward(lam, model: DetectionModel, allocation: Allocation | Sequence[int]) -> float:
    """Mean number of detections per round: gamma(a) . lambda."""
    return float(detection_vector(model, allocation) @ np.asarray(lam, dtype=float))


def optimal_value(instance: Instance) -> float:
    return solve_optimal(precompute_q(instance.lam, instance.model))[1]


@dataclass(frozen=True, eq=False)
class RegretTrace:
    increments: np.ndarray
    opt: float
    cumulative: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "cumulative", np.cumsum(self.increments))

    @property
    def scaled(self) -> np.ndarray:
        return self.cumulative / self.opt

    @property
    def final(self) -> float:
        return float(self.scaled[-1]) if self.scaled.size else 0.0


def scaled_regret(allocations: Sequence[Allocation], instance: Instance, opt: float | None = None) -> RegretTrace:
    """Expected regret of a sequence of actions, also rescaled by the optimal per-round reward."""
    opt = optimal_value(instance) if opt is None else opt
    if opt <= 0:
        raise UndefinedMetricError("optimal expected reward is zero")
    inc = np.array([max(opt - expected_reward(instance.lam, instance.model, a), 0.0) for a in allocations])
    return RegretTrace(inc, opt)


# --------------------------------------------------------------------------- #
# upper bound


def b_func(x, rate_max: float, n_arms: int):
    return rate_max + np.sqrt(rate_max ** 2 + np.square(x) / (9.0 * n_arms ** 2))


def adaptive_simpson(fn: Callable[[float], float], a: float, b: float, rtol: float = 1e-8,
                     max_depth: int = 60) -> float:
    """Adaptive Simpson quadrature with a relative tolerance on the running estimate."""
    if a == b:
        return 0.0
    fa, fm, fb = fn(a), fn(0.5 * (a + b)), fn(b)
    whole = (b - a) / 6.0 * (fa + 4 * fm + fb)
    tol = rtol * max(abs(whole), 1e-300)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = fn(lm), fn(rm)
        left = (m - a) / 6.0 * (fa + 4 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4 * frm + fb)
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= 15 * tol:
            return left + right + delta / 15.0
        return (recurse(a, m, fa, flm, fm, left, tol / 2, depth + 1)
                + recurse(m, b, fm, frm, fb, right, tol / 2, depth + 1))

    return recurse(a, b, fa, fm, fb, whole, tol, 0)


@dataclass(frozen=True, eq=False)
class BoundInputs:
    """Horizon, rate bound and gaps for one bound evaluation.

    ``gaps`` holds per-cell arrays for known detection probabilities or
    per-(cell, searcher) arrays for the scaling-function case; the number of
    arms is their size.
    """

    n: int
    rate_max: float
    gaps: GapSummary

    @property
    def n_arms(self) -> int:
        return int(self.gaps.delta_min_k.size)


def regret_upper_bound(inputs: BoundInputs, case: Literal["I", "II"] = "I") -> float:
    """Finite-time regret bound of FP-CUCB after ``inputs.n`` rounds.

    sum over arms with a suboptimal action of
        12 A^2 / p_min * [b(d_min)/d_min + int_{d_min}^{d_max} b(x)/x^2 dx] * ln n
    plus (pi^2/3 + 1) * A * max gap, with A the number of arms and b built
    from the rate bound and A.
    """
    if inputs.n < 1:
        raise BoundInputError("horizon must be at least 1")
    if not inputs.rate_max > 0:
        raise BoundInputError("rate bound must be positive")
    gaps = inputs.gaps
    if (case == "I") != (gaps.delta_min_k.ndim == 1):
        raise BoundInputError(f"case {case} gap arrays have the wrong shape {gaps.delta_min_k.shape}")
    A = inputs.n_arms
    rate = inputs.rate_max
    dmin = gaps.delta_min_k.ravel()
    dmax = gaps.delta_max_k.ravel()
    pmin = gaps.prob_min_k.ravel()

    def integrand(x: float) -> float:
        return float(b_func(x, rate, A)) / (x * x)

    log_coef = 0.0
    for lo, hi, p in zip(dmin, dmax, pmin):
        if not (lo > 0):
            continue
        if lo > hi * (1 + 1e-12) + 1e-12:
            raise BoundInputError(f"smallest gap {lo} exceeds largest gap {hi}")
        hi = max(hi, lo)
        log_coef += 12.0 * A * A / p * (float(b_func(lo, rate, A)) / lo + adaptive_simpson(integrand, lo, hi))
    delta_max = float(np.nanmax(dmax)) if np.any(~np.isnan(dmax)) else 0.0
    return log_coef * math.log(inputs.n) + (math.pi ** 2 / 3 + 1) * A * delta_max


# --------------------------------------------------------------------------- #
# concentration


def concentration_check(s: int, gamma_seq, mu: float, mu_max: float, t: float, trials: int,
                        rng: np.random.Generator) -> tuple[float, float]:
    """Monte-Carlo deviation rate of the filtered Poisson estimator, with the 2 t^-3 bound.

    Draws ``trials`` independent sets of Y_j ~ Poisson(gamma_j mu), j = 1..s,
    and counts how often |sum Y / sum gamma - mu| reaches
    2 ln t / sum gamma + sqrt(6 mu_max ln t / sum gamma).
    """
    gamma = np.asarray(gamma_seq, dtype=float)
    if gamma.shape != (s,) or s < 1:
        raise ValueError("gamma_seq must hold s >= 1 detection probabilities")
    if mu_max < mu:
        warnings.warn(f"mu_max={mu_max} below mu={mu}: deviation bound not guaranteed", stacklevel=2)
    if t < s:
        warnings.warn(f"t={t} below s={s}", stacklevel=2)
    G = gamma.sum()
    logt = math.log(t)
    width = 2 * logt / G + math.sqrt(6 * mu_max * logt / G)
    Y = rng.poisson(gamma * mu, size=(trials, s)).sum(axis=1)
    rate = float(np.mean(np.abs(Y / G - mu) >= width))
    return rate, 2.0 * t ** -3.0


# --------------------------------------------------------------------------- #
# lower-bound ingredients


def kl_poisson(lam: float, theta: float) -> float:
    """KL divergence between Poisson(lam) and Poisson(theta)."""
    if not (lam > 0 and theta > 0):
        raise ValueError("Poisson means must be positive")
    return lam * math.log(lam / theta) + theta - lam


@dataclass(frozen=True)
class ActionVector:
    g: tuple[float, ...]
    reward: float
    gap: float


LOWER_BOUND_LIMITS = (6, 3)


def action_universe(instance: Instance, limits: tuple[int, int] = LOWER_BOUND_LIMITS,
                    tol: float = 1e-12) -> list[ActionVector]:
    """Distinct detection-probability vectors over all feasible allocations."""
    K, U = instance.K, instance.U
    if K > limits[0] or U > limits[1]:
        raise CapacityError(f"action enumeration refused for K={K}, U={U}")
    seen: list[np.ndarray] = []
    for cells in feasible_allocations(K, U):
        g = detection_vector(instance.model, Allocation(cells, U))
        if not any(np.allclose(g, h, rtol=0, atol=tol) for h in seen):
            seen.append(g)
    rewards = [float(g @ instance.lam) for g in seen]
    opt = max(rewards)
    return [ActionVector(tuple(g), r, opt - r) for g, r in zip(seen, rewards)]


@dataclass(frozen=True)
class LowerBoundEval:
    objective: float
    constraint_lhs: float
    warnings: tuple[str, ...] = ()


def lower_bound_components(d: Mapping[Sequence[float], float], theta, instance: Instance,
                           universe: list[ActionVector] | None = None,
                           tol: float = 1e-9) -> LowerBoundEval:
    """Objective sum d_g gap_g and constraint sum d_g sum_k g_k kl(lam_k, theta_k) for given (d, theta).

    Nothing is optimised. ``d`` maps suboptimal detection vectors to weights.
    """
    theta = np.asarray(theta, dtype=float)
    universe = action_universe(instance) if universe is None else universe
    gap_tol = tol * max(1.0, max(a.reward for a in universe))
    optimal = [a for a in universe if a.gap <= gap_tol]
    kl = np.array([kl_poisson(l, th) for l, th in zip(instance.lam, theta)])
    objective = 0.0
    constraint = 0.0
    for g, weight in d.items():
        if weight < 0:
            raise ValueError("weights must be nonnegative")
        g = np.asarray(g, dtype=float)
        match = next((a for a in universe if np.allclose(a.g, g, rtol=0, atol=1e-12)), None)
        if match is None:
            raise ValueError(f"{tuple(g)} is not an achievable detection vector")
        if match.gap <= gap_tol and weight > 0:
            raise ValueError(f"{tuple(g)} is optimal; weights live on suboptimal actions")
        objective += weight * match.gap
        constraint += weight * float(np.dot(match.g, kl))
    notes = []
    played = np.zeros(instance.K, dtype=bool)
    for a in optimal:
        played |= np.asarray(a.g) > 0
    moved = played & ~np.isclose(theta, instance.lam, rtol=0, atol=1e-12)
    if moved.any():
        cells = ", ".join(str(k + 1) for k in np.flatnonzero(moved))
        notes.append(f"theta differs from lambda on optimally searched cells {cells}; the alternative is not admissible")
    return LowerBoundEval(objective, constraint, tuple(notes))
