"""Trigger specifications, the transmit decision and receiver-side error bounds.

A trigger specification is a small tree:

* leaves: :class:`AbsoluteChange`, :class:`RelativeChange`,
  :class:`NMostChanged`, :class:`AlwaysSend`;
* :class:`Subset` restricts its inner node to a set of index pairs;
* :class:`Combined` applies all children at once: an element is sent only
  if every child governing it fires;
* :class:`Partition` is like :class:`Combined` but requires its children to
  govern disjoint regions.

Before use a specification is compiled for a matrix dimension with
:func:`compile_spec`, which validates it and flattens it into *clauses*
(region mask + leaf).  Every upper-triangle element must be governed by at
least one clause and by at most one :class:`NMostChanged`.

An :class:`NMostChanged` clause ranks only those elements of its region
that pass every elementwise clause governing them, so a combination with an
absolute-change trigger sends "up to N of the elements that changed by more
than T".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

from .symmat import SymMatrix, packed_index, packed_size, triu

__all__ = [
    "AbsoluteChange",
    "RelativeChange",
    "NMostChanged",
    "AlwaysSend",
    "Subset",
    "Combined",
    "Partition",
    "TriggerSpec",
    "TriggerPlan",
    "ReducedEventSet",
    "SpecError",
    "BoundError",
    "compile_spec",
    "decide",
    "bounds",
    "relative_deviation",
]

DEVIATIONS = ("absolute", "relative")


class SpecError(ValueError):
    """Invalid trigger specification."""


class BoundError(ValueError):
    """No finite sound bound exists for the received event-set."""


@dataclass(frozen=True)
class AbsoluteChange:
    """Send ``(i, j)`` iff ``|P[i,j] - buf[i,j]| > T[i,j]``.

    ``thresholds`` is a :class:`SymMatrix` or a scalar shared by all elements.
    """

    thresholds: SymMatrix | float


@dataclass(frozen=True)
class RelativeChange:
    """Send ``(i, j)`` iff ``|P[i,j] - buf[i,j]| > T[i,j] * |buf[i,j]|``."""

    thresholds: SymMatrix | float


@dataclass(frozen=True)
class NMostChanged:
    """Send the ``budget`` elements with the largest deviation.

    Ties at the cut are resolved towards the lexicographically smaller pair.
    """

    budget: int
    deviation: str = "absolute"


@dataclass(frozen=True)
class AlwaysSend:
    pass


@dataclass(frozen=True)
class Subset:
    """Apply ``inner`` only to the given unordered index pairs (0-based)."""

    indices: frozenset
    inner: "TriggerSpec"

    def __post_init__(self):
        pairs = frozenset(
            (min(int(i), int(j)), max(int(i), int(j))) for i, j in self.indices
        )
        object.__setattr__(self, "indices", pairs)


@dataclass(frozen=True)
class Combined:
    """All children apply simultaneously.

    With ``sharp=True`` an N-most-changed child only contributes to the bound
    when its budget was used up; with ``sharp=False`` its bound is always
    included (the plain max-of-children rule).
    """

    children: tuple
    sharp: bool = True

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))


@dataclass(frozen=True)
class Partition:
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))


TriggerSpec = Union[
    AbsoluteChange, RelativeChange, NMostChanged, AlwaysSend, Subset, Combined, Partition
]


@dataclass(frozen=True, eq=False)
class _Clause:
    kind: str  # "absolute" | "relative" | "always" | "nmost"
    mask: np.ndarray
    thresholds: np.ndarray | None = None
    budget: int = 0
    relative: bool = False
    sharp: bool = True
    size: int = field(default=0)


@dataclass(frozen=True, eq=False)
class TriggerPlan:
    """A validated specification bound to dimension ``n``."""

    spec: TriggerSpec
    n: int
    elementwise: tuple
    ranked: tuple

    @property
    def size(self) -> int:
        return packed_size(self.n)


def _threshold_vector(value, n: int) -> np.ndarray:
    if isinstance(value, SymMatrix):
        if value.n != n:
            raise SpecError(f"threshold matrix is {value.n}x{value.n}, expected n={n}")
        t = value.data.copy()
    else:
        t = np.full(packed_size(n), float(value))
    if not np.all(np.isfinite(t)) or np.any(t < 0):
        raise SpecError("thresholds must be finite and nonnegative")
    return t


def _collect(node, region: np.ndarray, n: int, sharp: bool, out: list) -> np.ndarray:
    if isinstance(node, (AbsoluteChange, RelativeChange)):
        kind = "absolute" if isinstance(node, AbsoluteChange) else "relative"
        out.append(_Clause(kind, region, _threshold_vector(node.thresholds, n)))
        return region
    if isinstance(node, AlwaysSend):
        out.append(_Clause("always", region))
        return region
    if isinstance(node, NMostChanged):
        if isinstance(node.budget, bool) or int(node.budget) != node.budget or node.budget < 1:
            raise SpecError(f"N-most-changed budget must be a positive integer, got {node.budget!r}")
        if node.deviation not in DEVIATIONS:
            raise SpecError(f"unknown deviation {node.deviation!r}")
        out.append(
            _Clause(
                "nmost",
                region,
                budget=int(node.budget),
                relative=node.deviation == "relative",
                sharp=sharp,
                size=int(region.sum()),
            )
        )
        return region
    if isinstance(node, Subset):
        sel = np.zeros(packed_size(n), dtype=bool)
        for i, j in node.indices:
            if i < 0 or j >= n:
                raise SpecError(f"subset index ({i}, {j}) out of range for n={n}")
            sel[packed_index(i, j, n)] = True
        sub = region & sel
        if not sub.any():
            raise SpecError("subset governs no elements")
        return _collect(node.inner, sub, n, sharp, out)
    if isinstance(node, Combined):
        if len(node.children) < 2:
            raise SpecError("a combined trigger needs at least two children")
        governed = np.zeros_like(region)
        for child in node.children:
            governed |= _collect(child, region, n, node.sharp, out)
        return governed
    if isinstance(node, Partition):
        if not node.children:
            raise SpecError("a partition needs at least one child")
        governed = np.zeros_like(region)
        for child in node.children:
            part = _collect(child, region, n, sharp, out)
            if (governed & part).any():
                raise SpecError(f"partition children overlap at {_pairs(governed & part, n)}")
            governed |= part
        return governed
    raise SpecError(f"not a trigger specification node: {node!r}")


def _pairs(mask: np.ndarray, n: int) -> list:
    rows, cols = triu(n)
    return [(int(r), int(c)) for r, c in zip(rows[mask], cols[mask])]


def compile_spec(spec: TriggerSpec, n: int) -> TriggerPlan:
    """Validate ``spec`` for dimension ``n`` and flatten it into clauses."""
    n = int(n)
    if n < 1:
        raise SpecError(f"dimension must be >= 1, got {n}")
    clauses: list = []
    governed = _collect(spec, np.ones(packed_size(n), dtype=bool), n, True, clauses)
    if not governed.all():
        raise SpecError(f"elements not governed by any trigger: {_pairs(~governed, n)}")
    ranked = tuple(c for c in clauses if c.kind == "nmost")
    per_element = np.zeros(packed_size(n), dtype=int)
    for c in ranked:
        per_element += c.mask
    if (per_element > 1).any():
        raise SpecError(
            "more than one N-most-changed trigger governs "
            f"{_pairs(per_element > 1, n)}"
        )
    for c in clauses:
        c.mask.setflags(write=False)
    elementwise = tuple(c for c in clauses if c.kind != "nmost")
    return TriggerPlan(spec, n, elementwise, ranked)


@dataclass(frozen=True, eq=False)
class ReducedEventSet:
    """Upper-triangle index-value pairs sent at one timestep.

    ``positions`` are packed upper-triangle positions in increasing order.
    """

    n: int
    positions: np.ndarray
    values: np.ndarray
    timestep: int = 0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.intp).reshape(-1)
        val = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if pos.size != val.size:
            raise ValueError("positions and values differ in length")
        if pos.size and (pos.min() < 0 or pos.max() >= packed_size(self.n)):
            raise ValueError("event position out of range")
        if pos.size > 1 and np.any(np.diff(pos) <= 0):
            order = np.argsort(pos, kind="stable")
            pos, val = pos[order], val[order]
            if np.any(np.diff(pos) == 0):
                raise ValueError("duplicate index pair in event-set")
        if not np.all(np.isfinite(val)):
            raise ValueError("event values must be finite")
        if self.timestep < 0:
            raise ValueError("timestep must be nonnegative")
        pos.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_entries(cls, n: int, entries: Iterable, timestep: int = 0) -> ReducedEventSet:
        """Build from ``((i, j), value)`` pairs with ``i <= j`` (0-based)."""
        pos, val = [], []
        for (i, j), v in entries:
            if i > j:
                raise ValueError(f"reduced event-set entry ({i}, {j}) has i > j")
            pos.append(packed_index(i, j, n))
            val.append(v)
        return cls(n, np.array(pos, dtype=np.intp), np.array(val), timestep)

    @classmethod
    def empty(cls, n: int, timestep: int = 0) -> ReducedEventSet:
        return cls(n, np.zeros(0, dtype=np.intp), np.zeros(0), timestep)

    def __len__(self) -> int:
        return int(self.positions.size)

    def pairs(self) -> list:
        rows, cols = triu(self.n)
        return [(int(rows[p]), int(cols[p])) for p in self.positions]

    @property
    def entries(self) -> list:
        return [(ij, float(v)) for ij, v in zip(self.pairs(), self.values)]

    def symmetric(self) -> list:
        """The full event-set: every entry plus its transpose."""
        out = []
        for (i, j), v in self.entries:
            out.append(((i, j), v))
            if i != j:
                out.append(((j, i), v))
        return out

    def mask(self) -> np.ndarray:
        m = np.zeros(packed_size(self.n), dtype=bool)
        m[self.positions] = True
        return m

    def __eq__(self, other) -> bool:
        if not isinstance(other, ReducedEventSet):
            return NotImplemented
        return (
            self.n == other.n
            and self.timestep == other.timestep
            and np.array_equal(self.positions, other.positions)
            and self.values.tobytes() == other.values.tobytes()
        )

    __hash__ = None


def relative_deviation(change: np.ndarray, base: np.ndarray) -> np.ndarray:
    """``change / |base|`` with ``x/0`` read as +inf for ``x > 0`` and 0 for ``x == 0``."""
    base = np.abs(base)
    out = np.empty_like(change)
    nz = base > 0
    np.divide(change, base, out=out, where=nz)
    out[~nz] = np.where(change[~nz] > 0, np.inf, 0.0)
    return out


def _require_plan(plan) -> TriggerPlan:
    if not isinstance(plan, TriggerPlan):
        raise TypeError("trigger specification is not validated; use compile_spec() first")
    return plan


def _check_dims(plan: TriggerPlan, *mats: SymMatrix) -> None:
    for m in mats:
        if m.n != plan.n:
            raise ValueError(f"dimension mismatch: plan n={plan.n}, matrix n={m.n}")


def _select_ranked(candidates: np.ndarray, score: np.ndarray, budget: int) -> np.ndarray:
    idx = np.flatnonzero(candidates)
    if idx.size <= budget:
        return idx
    order = np.lexsort((idx, -score[idx]))
    return np.sort(idx[order[:budget]])


def decide(plan: TriggerPlan, p: SymMatrix, buf_prev: SymMatrix, timestep: int = 0) -> ReducedEventSet:
    """Select the upper-triangle elements of ``p`` to transmit."""
    plan = _require_plan(plan)
    _check_dims(plan, p, buf_prev)
    change = np.abs(p.data - buf_prev.data)
    passed = np.ones(plan.size, dtype=bool)
    for c in plan.elementwise:
        if c.kind == "absolute":
            passed &= ~c.mask | (change > c.thresholds)
        elif c.kind == "relative":
            passed &= ~c.mask | (change > c.thresholds * np.abs(buf_prev.data))
    fire = passed
    if plan.ranked:
        fire = passed.copy()
        for c in plan.ranked:
            score = relative_deviation(change, buf_prev.data) if c.relative else change
            fire[c.mask] = False
            fire[_select_ranked(c.mask & passed, score, c.budget)] = True
    pos = np.flatnonzero(fire)
    return ReducedEventSet(plan.n, pos, p.data[pos], timestep)


def bounds(
    plan: TriggerPlan,
    buf_k: SymMatrix,
    buf_prev: SymMatrix,
    events: ReducedEventSet,
) -> SymMatrix:
    """Elementwise bounds on ``|P_k - buf_k|`` computable at the receiver.

    Sent elements get 0.  An unsent element gets the max of the bounds of the
    clauses governing it (threshold, or threshold times ``|buf_k|``), plus
    the N-most-changed term when that clause may have been the reason for
    not sending.

    Raises:
        BoundError: if the event-set is inconsistent with the plan or the
            only sound bound would be infinite (relative N-most-changed when
            every ranked element had a zero buffer value).
    """
    plan = _require_plan(plan)
    _check_dims(plan, buf_k, buf_prev)
    if events.n != plan.n:
        raise ValueError(f"dimension mismatch: plan n={plan.n}, event-set n={events.n}")
    sent = events.mask()
    unsent = ~sent
    delta = np.zeros(plan.size)
    covered = np.zeros(plan.size, dtype=bool)
    for c in plan.elementwise:
        if c.kind == "always":
            continue
        term = c.thresholds if c.kind == "absolute" else c.thresholds * np.abs(buf_k.data)
        np.maximum(delta, np.where(c.mask, term, 0.0), out=delta)
        covered |= c.mask
    if plan.ranked:
        change = np.abs(buf_k.data - buf_prev.data)
        for c in plan.ranked:
            target = c.mask & unsent
            if not target.any():
                continue
            got = sent & c.mask
            count = int(got.sum())
            if c.sharp and count < c.budget:
                # Budget not used up: every candidate was sent, so unsent
                # elements failed an elementwise clause.
                continue
            if count == 0:
                raise BoundError("N-most-changed region has unsent elements but none were sent")
            if c.relative:
                least = relative_deviation(change[got], buf_prev.data[got]).min()
                if np.isinf(least):
                    raise BoundError(
                        "relative N-most-changed bound is unbounded: every sent element "
                        "had a zero buffer value"
                    )
                term = np.abs(buf_k.data) * least
            else:
                term = np.full(plan.size, change[got].min())
            np.maximum(delta, np.where(target, term, 0.0), out=delta)
            covered |= target
    missing = unsent & ~covered
    if missing.any():
        raise BoundError(
            f"elements {_pairs(missing, plan.n)} were not sent although every "
            "trigger governing them must fire"
        )
    delta[sent] = 0.0
    return SymMatrix._wrap(plan.n, delta)
