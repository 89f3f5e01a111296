"""Core problem types: allocations, interval assignments, detection models and instances.

Cells and searchers are 1-based at the public surface (``cells[k-1]`` is the
searcher covering cell ``k``, ``0`` meaning unsearched). Dense numpy tables used
by the numerical kernels are 0-based.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np


class MalformedInputError(ValueError):
    """Input is structurally wrong (bad IDs, shapes, probabilities)."""


class InfeasibleAllocationError(ValueError):
    """Allocation breaks the disjoint connected sub-region rule."""


class ModelIncompleteError(KeyError):
    """A case-I detection table has no entry for the queried interval."""


# --------------------------------------------------------------------------- #
# allocations


class Interval(NamedTuple):
    i: int
    j: int
    u: int


@dataclass(frozen=True)
class Violation:
    """First connectivity violation found in an allocation."""

    searcher: int
    run_starts: tuple[int, ...]

    def __str__(self) -> str:
        splits = ", ".join(str(p) for p in self.run_starts[1:])
        return f"searcher {self.searcher} split at position {splits}"


def validate_allocation(cells: Sequence[int], U: int) -> Violation | None:
    """Check that every searcher ID labels at most one contiguous run.

    Returns ``None`` for a feasible allocation, otherwise the first offending
    searcher with the 1-based start positions of each of its runs. Entries
    outside ``{0, ..., U}`` raise :class:`MalformedInputError`.
    """
    cells = tuple(int(c) for c in cells)
    if len(cells) == 0:
        raise MalformedInputError("allocation must cover at least one cell")
    for pos, c in enumerate(cells, start=1):
        if c < 0 or c > U:
            raise MalformedInputError(f"cell {pos} has searcher id {c} outside 0..{U}")
    runs: dict[int, list[int]] = {}
    prev = 0
    for pos, c in enumerate(cells, start=1):
        if c != 0 and c != prev:
            runs.setdefault(c, []).append(pos)
        prev = c
    bad = [(starts[1], u) for u, starts in runs.items() if len(starts) > 1]
    if not bad:
        return None
    _, u = min(bad)
    return Violation(searcher=u, run_starts=tuple(runs[u]))


@dataclass(frozen=True)
class Allocation:
    """Length-K assignment of cells to searcher IDs (0 = unsearched)."""

    cells: tuple[int, ...]
    U: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "cells", tuple(int(c) for c in self.cells))
        violation = validate_allocation(self.cells, self.U)
        if violation is not None:
            raise InfeasibleAllocationError(str(violation))

    @property
    def K(self) -> int:
        return len(self.cells)

    def searched(self) -> np.ndarray:
        return np.asarray(self.cells) != 0

    @classmethod
    def idle(cls, K: int, U: int) -> "Allocation":
        return cls((0,) * K, U)


def intervals_of(allocation: Allocation | Sequence[int], U: int | None = None) -> tuple[Interval, ...]:
    """Interval triples ``(i, j, u)`` of an allocation, sorted by ``i``."""
    if not isinstance(allocation, Allocation):
        allocation = Allocation(tuple(allocation), U if U is not None else max(allocation, default=0))
    out = []
    cells = allocation.cells
    k = 0
    while k < len(cells):
        u = cells[k]
        if u == 0:
            k += 1
            continue
        start = k
        while k + 1 < len(cells) and cells[k + 1] == u:
            k += 1
        out.append(Interval(start + 1, k + 1, u))
        k += 1
    return tuple(out)


def allocation_of(intervals: Sequence[Sequence[int]], K: int, U: int | None = None) -> Allocation:
    """Inverse of :func:`intervals_of`."""
    intervals = [Interval(*map(int, iv)) for iv in intervals]
    if U is None:
        U = max((iv.u for iv in intervals), default=0)
    cells = [0] * K
    seen: set[int] = set()
    for i, j, u in intervals:
        if not (1 <= i <= j <= K):
            raise MalformedInputError(f"interval ({i}, {j}, {u}) outside cells 1..{K}")
        if not (1 <= u <= U):
            raise MalformedInputError(f"searcher {u} outside 1..{U}")
        if u in seen:
            raise InfeasibleAllocationError(f"searcher {u} assigned to two intervals")
        seen.add(u)
        for k in range(i - 1, j):
            if cells[k] != 0:
                raise InfeasibleAllocationError(f"cell {k + 1} covered by searchers {cells[k]} and {u}")
            cells[k] = u
    return Allocation(tuple(cells), U)


# --------------------------------------------------------------------------- #
# scaling rules

ScalingRule = Callable[[int], float]


def reciprocal(n_cells: int) -> float:
    return 1.0 / n_cells


def half_offset(n_cells: int) -> float:
    return 1.0 / (0.5 + 0.5 * n_cells)


SCALING_RULES: dict[str, ScalingRule] = {
    "reciprocal": reciprocal,
    "half-offset": half_offset,
}


def register_scaling_rule(name: str, rule: ScalingRule) -> None:
    """Add a scaling rule. ``rule(n)`` must lie in [0, 1] and not increase with n."""
    SCALING_RULES[name] = rule


def scaling_rule(name: str) -> ScalingRule:
    try:
        return SCALING_RULES[name]
    except KeyError:
        raise MalformedInputError(f"unknown scaling rule {name!r}; known: {sorted(SCALING_RULES)}") from None


# --------------------------------------------------------------------------- #
# detection models


@dataclass(frozen=True, eq=False)
class CaseI:
    """Known detection probabilities, one entry per (interval, searcher, covered cell).

    ``table[i, j, u, k]`` (0-based) is the detection probability in cell ``k``
    when searcher ``u`` covers cells ``i..j``. Entries with ``k`` outside
    ``i..j`` or ``j < i`` are ignored; NaN marks a missing entry.
    """

    table: np.ndarray

    def __post_init__(self) -> None:
        t = np.array(self.table, dtype=float)
        if t.ndim != 4 or t.shape[0] != t.shape[1] or t.shape[0] != t.shape[3]:
            raise MalformedInputError(f"case-I table must have shape (K, K, U, K), got {t.shape}")
        K = t.shape[0]
        inside = _inside_mask(K, t.shape[2])
        t = np.where(inside, t, 0.0)
        vals = t[inside & ~np.isnan(t)]
        if np.any(vals <= 0) or np.any(vals > 1):
            raise MalformedInputError("case-I detection probabilities must lie in (0, 1]")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def K(self) -> int:
        return self.table.shape[0]

    @property
    def U(self) -> int:
        return self.table.shape[2]

    def cover_table(self) -> np.ndarray:
        if np.isnan(self.table).any():
            i, j, u, k = np.argwhere(np.isnan(self.table))[0]
            raise ModelIncompleteError(f"no detection probability for interval ({i + 1}, {j + 1}, {u + 1})")
        return self.table

    def interval_probs(self, i: int, j: int, u: int) -> np.ndarray:
        probs = self.table[i - 1, j - 1, u - 1, i - 1 : j]
        if np.isnan(probs).any():
            raise ModelIncompleteError(f"no detection probability for interval ({i}, {j}, {u})")
        return probs

    @classmethod
    def constant(cls, K: int, U: int, value: float = 1.0) -> "CaseI":
        return cls(np.full((K, K, U, K), value))

    @classmethod
    def from_intervals(cls, K: int, U: int, entries: dict[tuple[int, int, int], Sequence[float]]) -> "CaseI":
        table = np.full((K, K, U, K), np.nan)
        for (i, j, u), probs in entries.items():
            probs = np.asarray(probs, dtype=float)
            if probs.shape != (j - i + 1,):
                raise MalformedInputError(f"interval ({i}, {j}, {u}) needs {j - i + 1} probabilities")
            table[i - 1, j - 1, u - 1, i - 1 : j] = probs
        return cls(table)


@dataclass(frozen=True, eq=False)
class CaseII:
    """Parametric detection: ``gamma_k(a) = phi_u(a) * omega[k, u]`` for the searcher u covering k."""

    phi: tuple[str, ...]
    omega: np.ndarray

    def __post_init__(self) -> None:
        omega = np.array(self.omega, dtype=float)
        if omega.ndim != 2:
            raise MalformedInputError("omega must be a K x U matrix")
        if np.any(omega <= 0) or np.any(omega > 1):
            raise MalformedInputError("baseline probabilities must lie in (0, 1]")
        phi = (self.phi,) * omega.shape[1] if isinstance(self.phi, str) else tuple(self.phi)
        if len(phi) != omega.shape[1]:
            raise MalformedInputError(f"need {omega.shape[1]} scaling rules, got {len(phi)}")
        for name in phi:
            scaling_rule(name)
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "phi", phi)

    @property
    def K(self) -> int:
        return self.omega.shape[0]

    @property
    def U(self) -> int:
        return self.omega.shape[1]

    def scaling_table(self) -> np.ndarray:
        """``out[u, n]`` = scaling of searcher u (0-based) over n cells; ``out[:, 0] = 0``."""
        out = np.zeros((self.U, self.K + 1))
        for u, name in enumerate(self.phi):
            rule = scaling_rule(name)
            out[u, 1:] = [rule(n) for n in range(1, self.K + 1)]
        return out

    def cover_table(self) -> np.ndarray:
        K, U = self.K, self.U
        scale = self.scaling_table()
        table = np.zeros((K, K, U, K))
        for i in range(K):
            for j in range(i, K):
                table[i, j, :, i : j + 1] = (scale[:, j - i + 1][:, None] * self.omega[i : j + 1].T)
        return table

    def interval_probs(self, i: int, j: int, u: int) -> np.ndarray:
        rule = scaling_rule(self.phi[u - 1])
        return rule(j - i + 1) * self.omega[i - 1 : j, u - 1]


DetectionModel = Union[CaseI, CaseII]


def _inside_mask(K: int, U: int) -> np.ndarray:
    i = np.arange(K)[:, None, None, None]
    j = np.arange(K)[None, :, None, None]
    k = np.arange(K)[None, None, None, :]
    return np.broadcast_to((i <= k) & (k <= j), (K, K, U, K))


def detection_vector(model: DetectionModel, allocation: Allocation | Sequence[int]) -> np.ndarray:
    """Per-cell detection probabilities induced by an allocation."""
    if not isinstance(allocation, Allocation):
        allocation = Allocation(tuple(allocation), model.U)
    if allocation.K != model.K:
        raise MalformedInputError(f"allocation has {allocation.K} cells, model has {model.K}")
    gamma = np.zeros(model.K)
    for i, j, u in intervals_of(allocation):
        gamma[i - 1 : j] = model.interval_probs(i, j, u)
    return gamma


# --------------------------------------------------------------------------- #
# instances


@dataclass(frozen=True, eq=False)
class Instance:
    """One fully specified surveillance problem."""

    lam: np.ndarray
    model: DetectionModel
    name: str = ""
    lambda_max_true: float = field(init=False)

    def __post_init__(self) -> None:
        lam = np.array(self.lam, dtype=float)
        if lam.ndim != 1 or lam.size != self.model.K:
            raise MalformedInputError(f"rate vector must have length K={self.model.K}")
        if np.any(lam <= 0):
            raise MalformedInputError("arrival rates must be positive")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "lambda_max_true", float(lam.max()))

    @property
    def K(self) -> int:
        return self.model.K

    @property
    def U(self) -> int:
        return self.model.U

    def to_dict(self) -> dict:
        if isinstance(self.model, CaseII):
            phi = self.model.phi[0] if len(set(self.model.phi)) == 1 else list(self.model.phi)
            model = {"case": "II", "phi": phi, "omega": self.model.omega.tolist()}
        else:
            model = {"case": "I", "gamma": _dense_gamma_json(self.model)}
        return {"K": self.K, "U": self.U, "lambda": self.lam.tolist(), "model": model}

    @classmethod
    def from_dict(cls, data: dict, name: str = "") -> "Instance":
        try:
            K, U = int(data["K"]), int(data["U"])
            lam = data["lambda"]
            spec = data["model"]
            case = spec["case"]
        except KeyError as exc:
            raise MalformedInputError(f"instance is missing field {exc}") from None
        if case == "II":
            model: DetectionModel = CaseII(spec["phi"], np.asarray(spec["omega"], dtype=float))
        elif case == "I":
            model = _case_i_from_json(spec["gamma"], K, U)
        else:
            raise MalformedInputError(f"unknown model case {case!r}")
        if model.K != K or model.U != U:
            raise MalformedInputError(f"model dimensions {(model.K, model.U)} disagree with K={K}, U={U}")
        return cls(np.asarray(lam, dtype=float), model, name=name)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "Instance":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), name=path.stem)


def _dense_gamma_json(model: CaseI) -> list:
    # gamma[i][j][u] -> per-cell list for cells i..j, null where j < i
    K, U = model.K, model.U
    out = []
    for i in range(K):
        row = []
        for j in range(K):
            if j < i:
                row.append(None)
                continue
            row.append([
                None if np.isnan(model.table[i, j, u, i]) else model.table[i, j, u, i : j + 1].tolist()
                for u in range(U)
            ])
        out.append(row)
    return out


def _case_i_from_json(gamma: list, K: int, U: int) -> CaseI:
    table = np.full((K, K, U, K), np.nan)
    if len(gamma) != K:
        raise MalformedInputError("case-I gamma must have K rows")
    for i in range(K):
        for j in range(i, K):
            per_u = gamma[i][j]
            if per_u is None:
                continue
            if len(per_u) != U:
                raise MalformedInputError(f"gamma[{i + 1}][{j + 1}] needs {U} searcher entries")
            for u, probs in enumerate(per_u):
                if probs is None:
                    continue
                if len(probs) != j - i + 1:
                    raise MalformedInputError(f"gamma[{i + 1}][{j + 1}][{u + 1}] needs {j - i + 1} values")
                table[i, j, u, i : j + 1] = probs
    return CaseI(table)
