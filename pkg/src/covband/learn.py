"""Grid search for a shared scalar trigger threshold.

The objective averages, over the sequences of a dataset, the per-step
number of transmitted elements plus ``lam`` times the per-step relative
conservativeness.  Both terms are first averaged within each sequence so
long sequences do not dominate.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .metrics import run_experiment
from .symmat import packed_size
from .triggers import AbsoluteChange, Combined, NMostChanged, RelativeChange

__all__ = [
    "TRIGGER_KINDS",
    "LearnConfig",
    "ObjectiveBreakdown",
    "spec_for",
    "evaluate",
    "objective",
    "grid_search",
    "sweep",
    "log_grid",
]

TRIGGER_KINDS = ("absolute", "relative", "combined")


@dataclass(frozen=True)
class LearnConfig:
    """Inputs of a threshold search.

    ``trigger_kind="combined"`` is absolute-change plus absolute-deviation
    N-most-changed with budget ``budget``.  ``printed_rc_sum`` multiplies the
    conservativeness term by ``n(n+1)/2``, i.e. sums the (index independent)
    per-step ratio over the upper triangle.
    """

    lam: float
    grid: tuple
    trigger_kind: str
    dataset: Sequence
    budget: int = 7
    init: str = "zero"
    printed_rc_sum: bool = False

    def __post_init__(self):
        grid = tuple(float(t) for t in self.grid)
        object.__setattr__(self, "grid", grid)
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if not grid:
            raise ValueError("grid must not be empty")
        if any(t <= 0 for t in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be positive and strictly increasing")
        if self.trigger_kind not in TRIGGER_KINDS:
            raise ValueError(f"unknown trigger kind {self.trigger_kind!r}")
        if not self.dataset:
            raise ValueError("dataset is empty")


@dataclass(frozen=True)
class ObjectiveBreakdown:
    total: float
    data_term: float
    cons_term: float


def spec_for(kind: str, threshold: float, budget: int = 7):
    if kind == "absolute":
        return AbsoluteChange(threshold)
    if kind == "relative":
        return RelativeChange(threshold)
    if kind == "combined":
        return Combined((AbsoluteChange(threshold), NMostChanged(budget)))
    raise ValueError(f"unknown trigger kind {kind!r}")


def evaluate(threshold: float, cfg: LearnConfig) -> tuple:
    """``(data_term, cons_term)`` at one threshold, independent of ``lam``."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    runs = run_experiment(cfg.dataset, spec_for(cfg.trigger_kind, threshold, cfg.budget), cfg.init)
    data = float(np.mean([np.mean([m.sent for m in run]) for run in runs]))
    cons = float(np.mean([np.mean([m.rc for m in run]) for run in runs]))
    if cfg.printed_rc_sum:
        cons *= packed_size(cfg.dataset[0][0].n)
    return data, cons


def _combine(lam: float, data: float, cons: float) -> ObjectiveBreakdown:
    return ObjectiveBreakdown(data + lam * cons, data, cons)


def objective(threshold: float, cfg: LearnConfig) -> ObjectiveBreakdown:
    return _combine(cfg.lam, *evaluate(threshold, cfg))


def _evaluate_grid(cfg: LearnConfig, workers: int) -> list:
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(evaluate, cfg.grid, [cfg] * len(cfg.grid)))
    return [evaluate(t, cfg) for t in cfg.grid]


def _pick(grid, terms, lam: float) -> tuple:
    curve = [(t, _combine(lam, d, c)) for t, (d, c) in zip(grid, terms)]
    best = int(np.argmin([b.total for _, b in curve]))  # first minimum = smallest T
    return curve[best][0], curve


def grid_search(cfg: LearnConfig, workers: int = 1) -> tuple:
    """Minimise the objective over ``cfg.grid``; ties go to the smaller threshold.

    Returns ``(t_star, curve)`` with ``curve`` a list of
    ``(threshold, ObjectiveBreakdown)``.
    """
    return _pick(cfg.grid, _evaluate_grid(cfg, workers), cfg.lam)


def sweep(cfg: LearnConfig, lams: Sequence[float], workers: int = 1) -> dict:
    """Grid search for several ``lam`` values, evaluating the grid only once."""
    terms = _evaluate_grid(cfg, workers)
    return {float(lam): _pick(cfg.grid, terms, float(lam)) for lam in lams}


def log_grid(lo: float = 1e-6, hi: float = 1e-1, per_decade: int = 25) -> tuple:
    """Logarithmically spaced thresholds, ``per_decade`` points per decade."""
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")
    count = int(round(np.log10(hi / lo) * per_decade)) + 1
    return tuple(np.logspace(np.log10(lo), np.log10(hi), count))
