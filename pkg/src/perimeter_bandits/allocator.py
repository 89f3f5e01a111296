"""Full-information allocation: q-values, exact subset DP, forced-coverage variants, gaps.

The exact solver is a dynamic program over (next free cell, set of used
searchers). From each state it either leaves the cell unsearched or opens an
interval ``[c, j]`` with an unused searcher, so it runs in O(K^2 U 2^U).
Ties between equal-value optima resolve to the lexicographically smallest
interval list.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np

from . import _kernels as kern
from .domain import (
    Allocation,
    CaseII,
    DetectionModel,
    Instance,
    Interval,
    MalformedInputError,
    intervals_of,
    validate_allocation,
)

MAX_SUBSET_WIDTH = 16
BRUTE_FORCE_LIMITS = (8, 3)


class CapacityError(RuntimeError):
    """Problem too large for the exact solver or the brute-force oracle."""


@dataclass(frozen=True, eq=False)
class QTable:
    """Mean detections per interval assignment; ``values[i-1, j-1, u-1]`` for interval (i, j, u)."""

    values: np.ndarray

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def U(self) -> int:
        return self.values.shape[2]

    def __getitem__(self, iju: tuple[int, int, int]) -> float:
        i, j, u = iju
        if not (1 <= i <= j <= self.K) or not (1 <= u <= self.U):
            raise IndexError(f"no interval ({i}, {j}, {u})")
        return float(self.values[i - 1, j - 1, u - 1])

    def reward(self, allocation: Allocation) -> float:
        return float(sum(self[iv] for iv in intervals_of(allocation)))


def precompute_q(lam, model: DetectionModel) -> QTable:
    """All K(K+1)/2 * U interval values for rates ``lam`` under ``model``."""
    lam = np.ascontiguousarray(lam, dtype=float)
    if lam.shape != (model.K,):
        raise MalformedInputError(f"rate vector must have length {model.K}")
    if np.any(lam < 0):
        raise MalformedInputError("rates must be nonnegative")
    q = np.zeros((model.K, model.K, model.U))
    if isinstance(model, CaseII):
        W = np.ascontiguousarray(model.omega * lam[:, None])
        kern.q_from_scaling(model.scaling_table(), W, q)
    else:
        kern.q_from_cover(model.cover_table(), lam, q)
    return QTable(q)


def q_from_arm_rates(tau, scale: np.ndarray) -> QTable:
    """Interval values for per-(cell, searcher) rates under scaling table ``scale[u, n]``."""
    tau = np.ascontiguousarray(tau, dtype=float)
    q = np.zeros((tau.shape[0], tau.shape[0], tau.shape[1]))
    kern.q_from_scaling(np.ascontiguousarray(scale, dtype=float), tau, q)
    return QTable(q)


def _as_array(q) -> np.ndarray:
    arr = q.values if isinstance(q, QTable) else np.asarray(q, dtype=float)
    if arr.ndim != 3 or arr.shape[0] != arr.shape[1]:
        raise MalformedInputError(f"q-table must have shape (K, K, U), got {arr.shape}")
    return np.ascontiguousarray(arr)


def _check_width(U: int, limit: int) -> None:
    if U > limit:
        raise CapacityError(
            f"U={U} exceeds the exact solver's subset-width limit {limit}; "
            "no heuristic path is provided for larger fleets"
        )


def _cells_to_intervals(cells: np.ndarray, U: int) -> tuple[Interval, ...]:
    return intervals_of(Allocation(tuple(int(c) for c in cells), U))


def solve_optimal(q, K: int | None = None, U: int | None = None, *,
                  width_limit: int = MAX_SUBSET_WIDTH) -> tuple[tuple[Interval, ...], float]:
    """Optimal interval assignment and its value."""
    arr = _as_array(q)
    K = arr.shape[0] if K is None else K
    U = arr.shape[2] if U is None else U
    if arr.shape != (K, K, U):
        raise MalformedInputError(f"q-table shape {arr.shape} does not match K={K}, U={U}")
    _check_width(U, width_limit)
    f = np.empty((K + 1, 1 << U))
    cells = np.zeros(K, dtype=np.int64)
    value = kern.solve(arr, f, cells)
    return _cells_to_intervals(cells, U), float(value)


def solve_optimal_forced(q, K: int | None, U: int | None, k: int,
                         mode: Literal["max", "min"] = "max", *, searcher: int | None = None,
                         width_limit: int = MAX_SUBSET_WIDTH) -> tuple[tuple[Interval, ...], float]:
    """Best (``max``) or worst (``min``) allocation among those searching cell ``k``.

    ``searcher`` further restricts to allocations where that searcher covers k.
    The minimum over covering allocations is a single covering interval with
    every other searcher idle, because all q-values are nonnegative.
    """
    arr = _as_array(q)
    K = arr.shape[0] if K is None else K
    U = arr.shape[2] if U is None else U
    if not 1 <= k <= K:
        raise MalformedInputError(f"cell {k} outside 1..{K}")
    if searcher is not None and not 1 <= searcher <= U:
        raise MalformedInputError(f"searcher {searcher} outside 1..{U}")
    _check_width(U, width_limit)
    if mode == "min":
        best = None
        for i in range(1, k + 1):
            for j in range(k, K + 1):
                for u in range(1, U + 1):
                    if searcher is not None and u != searcher:
                        continue
                    v = arr[i - 1, j - 1, u - 1]
                    if best is None or v < best[0]:
                        best = (v, Interval(i, j, u))
        return (best[1],), float(best[0])
    if mode != "max":
        raise ValueError(f"mode must be 'max' or 'min', got {mode!r}")
    f = np.empty((K + 1, 1 << U))
    g = np.empty((K + 1, 1 << U))
    kern.dp_fill(arr, f)
    force_u = -1 if searcher is None else searcher - 1
    kern.forced_fill(arr, f, g, k - 1, force_u)
    cells = np.zeros(K, dtype=np.int64)
    value = kern.forced_reconstruct(arr, f, g, k - 1, force_u, cells)
    return _cells_to_intervals(cells, U), float(value)


# --------------------------------------------------------------------------- #
# brute-force oracle


@lru_cache(maxsize=64)
def feasible_allocations(K: int, U: int) -> tuple[tuple[int, ...], ...]:
    """Every feasible allocation of K cells to U searchers, by filtering {0..U}^K."""
    return tuple(cells for cells in itertools.product(range(U + 1), repeat=K)
                 if validate_allocation(cells, U) is None)


def brute_force_optimal(q, K: int | None = None, U: int | None = None,
                        forced_cell: int | None = None, *,
                        limits: tuple[int, int] = BRUTE_FORCE_LIMITS,
                        forced_searcher: int | None = None) -> float:
    """Exhaustive maximum over all feasible allocations (optionally covering ``forced_cell``)."""
    arr = np.asarray(q.values if isinstance(q, QTable) else q, dtype=float)
    K = arr.shape[0] if K is None else K
    U = arr.shape[2] if U is None else U
    if K > limits[0] or U > limits[1]:
        raise CapacityError(f"brute force refused for K={K}, U={U} (limits K<={limits[0]}, U<={limits[1]})")
    values = brute_force_values(arr, K, U, forced_cell, forced_searcher)
    return max(values)


def brute_force_values(arr: np.ndarray, K: int, U: int, forced_cell: int | None = None,
                       forced_searcher: int | None = None) -> list[float]:
    out = []
    for cells in feasible_allocations(K, U):
        if forced_cell is not None:
            owner = cells[forced_cell - 1]
            if owner == 0 or (forced_searcher is not None and owner != forced_searcher):
                continue
        total = 0.0
        for i, j, u in intervals_of(Allocation(cells, U)):
            total += arr[i - 1, j - 1, u - 1]
        out.append(total)
    return out


# --------------------------------------------------------------------------- #
# optimality gaps


@dataclass(frozen=True, eq=False)
class GapSummary:
    """Per-arm optimality gaps driving the regret upper bound.

    Arms are cells for known detection probabilities and (cell, searcher)
    pairs for the scaling-function case; arrays then have shape (K, U).
    ``delta_min_k`` is NaN where no suboptimal action uses the arm.
    """

    opt: float
    delta_min_k: np.ndarray
    delta_max_k: np.ndarray
    prob_min_k: np.ndarray

    @property
    def has_suboptimal(self) -> np.ndarray:
        return ~np.isnan(self.delta_min_k)

    @property
    def delta_min(self) -> float:
        vals = self.delta_min_k[self.has_suboptimal]
        return float(vals.min()) if vals.size else math.nan

    @property
    def delta_max(self) -> float:
        return float(np.nanmax(self.delta_max_k)) if np.any(~np.isnan(self.delta_max_k)) else 0.0

    @property
    def gamma_min_k(self) -> np.ndarray:
        return self.prob_min_k


def _gap_tol(opt: float) -> float:
    return 1e-9 * max(1.0, abs(opt))


def optimality_gaps(instance: Instance, *, width_limit: int = MAX_SUBSET_WIDTH) -> GapSummary:
    """Per-cell gaps for known detection probabilities.

    For each cell k: the largest gap is opt minus the worst covering action;
    the smallest is opt minus the best covering action whose reward is
    strictly below opt (NaN when every covering action is optimal).
    """
    q = precompute_q(instance.lam, instance.model).values
    K, U = instance.K, instance.U
    _check_width(U, width_limit)
    cover = instance.model.cover_table()
    return _gaps(q, K, U, cover, per_searcher=False)


def optimality_gaps_arms(instance: Instance, *, width_limit: int = MAX_SUBSET_WIDTH) -> GapSummary:
    """Per-(cell, searcher) gaps for the scaling-function case.

    Only allocations with a reward different from opt count, for both the
    smallest and the largest gap. ``prob_min_k[k, u]`` is the smallest
    scaling factor searcher u applies when covering cell k.
    """
    if not isinstance(instance.model, CaseII):
        raise MalformedInputError("per-(cell, searcher) gaps need a scaling-function model")
    q = precompute_q(instance.lam, instance.model).values
    K, U = instance.K, instance.U
    _check_width(U, width_limit)
    scale = instance.model.scaling_table()
    return _gaps(q, K, U, scale, per_searcher=True)


def _gaps(q: np.ndarray, K: int, U: int, probs: np.ndarray, per_searcher: bool) -> GapSummary:
    full = 1 << U
    f = np.empty((K + 1, full))
    kern.dp_fill(q, f)
    opt = float(f[0, 0])
    tol = _gap_tol(opt)
    fa, fb = np.empty((K + 1, full)), np.empty((K + 1, full))
    ga, gb = np.empty((K + 1, full)), np.empty((K + 1, full))
    kern.top2_fill(q, fa, fb, tol)
    shape = (K, U) if per_searcher else (K,)
    dmin = np.full(shape, np.nan)
    dmax = np.full(shape, np.nan)
    pmin = np.full(shape, np.inf)
    searchers = range(U) if per_searcher else (-1,)
    for k in range(K):
        for fu in searchers:
            pos = (k, fu) if per_searcher else (k,)
            a, b = kern.forced_top2(q, fa, fb, ga, gb, k, fu, tol)
            best_sub = a if a < opt - tol else b
            if np.isfinite(best_sub):
                dmin[pos] = max(opt - best_sub, 0.0)
            us = [fu] if per_searcher else range(U)
            worst = math.inf
            for i in range(k + 1):
                for j in range(k, K):
                    for u in us:
                        worst = min(worst, q[i, j, u])
                        p = probs[u, j - i + 1] if per_searcher else probs[i, j, u, k]
                        pmin[pos] = min(pmin[pos], p)
            if per_searcher:
                if worst < opt - tol:
                    dmax[pos] = opt - worst
            else:
                dmax[pos] = max(opt - worst, 0.0)
    return GapSummary(opt=opt, delta_min_k=dmin, delta_max_k=dmax, prob_min_k=pmin)
