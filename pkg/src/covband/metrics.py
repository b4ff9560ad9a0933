"""Per-step metrics, experiment runner and summary statistics."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import frame_size, open_channel
from .symmat import SymMatrix, packed_size
from .triggers import TriggerPlan, TriggerSpec, compile_spec

__all__ = [
    "StepMetrics",
    "SummaryStats",
    "ExperimentError",
    "InvariantViolation",
    "relative_conservativeness",
    "run_sequence",
    "run_experiment",
    "summarize",
    "data_reduction_ratio",
]


RC_TOL = 1e-12
PSD_TOL = 1e-9


class InvariantViolation(RuntimeError):
    """A bound failed to be conservative."""


class ExperimentError(RuntimeError):
    """A step of an experiment failed; carries the sequence and step."""

    def __init__(self, seq: int, k: int, cause: Exception):
        super().__init__(f"sequence {seq}, step {k}: {cause}")
        self.seq = seq
        self.k = k
        self.cause = cause

    def __reduce__(self):
        return type(self), (self.seq, self.k, self.cause)


@dataclass(frozen=True)
class StepMetrics:
    k: int
    sent: int
    rc: float
    bytes: int


def relative_conservativeness(p_hat: SymMatrix, p: SymMatrix) -> float:
    """``trace(P_hat - P) / trace(P)``."""
    tr = p.trace()
    if not tr > 0:
        raise ValueError(f"covariance trace must be positive, got {tr}")
    return (p_hat.trace() - tr) / tr


def run_sequence(plan: TriggerPlan, seq: Sequence[SymMatrix], init: str = "zero", check_psd: bool = False) -> list:
    """Transmit one sequence and record the metrics of every step.

    Raises :class:`InvariantViolation` if the relative conservativeness is
    negative beyond rounding or, with ``check_psd``, if ``P_hat - P`` is not
    positive semidefinite.
    """
    tx, rx = open_channel(plan, init)
    out = []
    for p in seq:
        events = tx.step(p)
        p_hat = rx.step(events)
        rc = relative_conservativeness(p_hat, p)
        if rc < -RC_TOL or (check_psd and not (p_hat - p).is_psd(PSD_TOL)):
            raise InvariantViolation(f"bound at step {events.timestep} is not conservative (rc={rc:.3e})")
        out.append(StepMetrics(events.timestep, len(events), rc, frame_size(len(events))))
    return out


def run_experiment(
    dataset: Sequence[Sequence[SymMatrix]],
    spec: TriggerSpec | TriggerPlan,
    init: str = "zero",
    check_psd: bool = False,
    workers: int = 1,
) -> list:
    """Run every sequence through a fresh channel; one metrics list per sequence.

    With ``workers > 1`` sequences run in separate processes; results are
    returned in dataset order regardless of completion order.  Failures are
    re-raised as :class:`ExperimentError` (or :class:`InvariantViolation`)
    naming the sequence and step.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    n = dataset[0][0].n
    plan = spec if isinstance(spec, TriggerPlan) else compile_spec(spec, n)
    jobs = [(s, plan, seq, init, check_psd) for s, seq in enumerate(dataset)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(job) for job in jobs]


def _run_one(job) -> list:
    s, plan, seq, init, check_psd = job
    try:
        return run_sequence(plan, seq, init, check_psd)
    except InvariantViolation as exc:
        raise InvariantViolation(f"sequence {s}: {exc}") from exc
    except (ValueError, ArithmeticError) as exc:
        raise ExperimentError(s, _failed_step(plan, seq, init), exc) from exc


def _failed_step(plan, seq, init) -> int:
    tx, rx = open_channel(plan, init)
    for k, p in enumerate(seq, start=1):
        try:
            relative_conservativeness(rx.step(tx.step(p)), p)
        except (ValueError, ArithmeticError):
            return k
    return -1


@dataclass(frozen=True)
class SummaryStats:
    """Box-plot summary: type-7 quartiles and Tukey 1.5 IQR whiskers."""

    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: list = field(default_factory=list)

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


def summarize(values) -> SummaryStats:
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValueError("cannot summarize an empty list")
    q1, med, q3 = np.percentile(x, [25, 50, 75])  # linear interpolation
    lo_fence = q1 - 1.5 * (q3 - q1)
    hi_fence = q3 + 1.5 * (q3 - q1)
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    outliers = sorted(float(v) for v in x[(x < lo_fence) | (x > hi_fence)])
    return SummaryStats(
        float(med), float(q1), float(q3), float(inside.min()), float(inside.max()), outliers
    )


def data_reduction_ratio(sent_total: int, steps: int, n: int) -> float:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    return 1.0 - sent_total / (steps * packed_size(n))
