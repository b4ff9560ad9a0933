"""Transmitter/receiver state machines and the event-set wire format.

Frame layout, little-endian::

    offset  size  field
    0       2     magic 0xC0BA
    2       1     version (1)
    3       1     n
    4       1     reserved, must be 0
    5       4     timestep (u32)
    9       2     entry count (u16)
    11      10*c  entries: i u8, j u8, value binary64 (1-based, i <= j)

Entries are written in row-major upper-triangle order.
"""

from __future__ import annotations

import struct

import numpy as np

from .bounder import BoundResult, bound
from .symmat import SymMatrix, packed_index, packed_size, triu
from .triggers import ReducedEventSet, TriggerPlan, bounds, decide

__all__ = [
    "FrameError",
    "Transmitter",
    "Receiver",
    "encode",
    "decode",
    "frame_size",
    "HEADER_SIZE",
    "ENTRY_SIZE",
    "tx_step",
    "rx_step",
    "open_channel",
    "INIT_POLICIES",
]

MAGIC = 0xC0BA
VERSION = 1
_HEADER = struct.Struct("<HBBBIH")
_ENTRY = struct.Struct("<BBd")
HEADER_SIZE = _HEADER.size
ENTRY_SIZE = _ENTRY.size


class FrameError(ValueError):
    """Malformed or out-of-order frame."""


def frame_size(count: int) -> int:
    return HEADER_SIZE + ENTRY_SIZE * count


def encode(events: ReducedEventSet) -> bytes:
    if events.n > 255:
        raise ValueError("wire format supports n <= 255")
    if len(events) > 0xFFFF or events.timestep > 0xFFFFFFFF:
        raise ValueError("event-set does not fit the frame header")
    rows, cols = triu(events.n)
    out = bytearray(_HEADER.pack(MAGIC, VERSION, events.n, 0, events.timestep, len(events)))
    for p, v in zip(events.positions, events.values):
        out += _ENTRY.pack(int(rows[p]) + 1, int(cols[p]) + 1, float(v))
    return bytes(out)


def decode(frame: bytes) -> ReducedEventSet:
    if len(frame) < HEADER_SIZE:
        raise FrameError(f"truncated frame: {len(frame)} bytes, header needs {HEADER_SIZE}")
    magic, version, n, reserved, timestep, count = _HEADER.unpack_from(frame, 0)
    if magic != MAGIC:
        raise FrameError(f"bad magic 0x{magic:04X}")
    if version != VERSION:
        raise FrameError(f"unsupported version {version}")
    if reserved != 0:
        raise FrameError("reserved header byte is not zero")
    if n < 1:
        raise FrameError("dimension must be >= 1")
    if len(frame) != frame_size(count):
        raise FrameError(f"frame length {len(frame)} does not match {count} entries")
    positions = np.empty(count, dtype=np.intp)
    values = np.empty(count)
    seen = set()
    for k in range(count):
        i, j, v = _ENTRY.unpack_from(frame, HEADER_SIZE + k * ENTRY_SIZE)
        if not (1 <= i <= n and 1 <= j <= n):
            raise FrameError(f"entry ({i}, {j}) out of range for n={n}")
        if i > j:
            raise FrameError(f"entry ({i}, {j}) has i > j")
        if (i, j) in seen:
            raise FrameError(f"duplicate entry ({i}, {j})")
        if not np.isfinite(v):
            raise FrameError(f"entry ({i}, {j}) is not finite")
        seen.add((i, j))
        positions[k] = packed_index(i - 1, j - 1, n)
        values[k] = v
    return ReducedEventSet(n, positions, values, timestep)


def _apply(buf: SymMatrix, events: ReducedEventSet) -> SymMatrix:
    if not len(events):
        return buf
    return buf.replace(events.positions, events.values)


class Transmitter:
    """Transmitter side: trigger plus buffer.

    Args:
        plan: Compiled trigger plan.
        buffer: Initial buffer, identical to the receiver's.
        full_first: Send every element at the first step regardless of the
            trigger, so the receiver starts from an exact copy.
    """

    def __init__(self, plan: TriggerPlan, buffer: SymMatrix, full_first: bool = False):
        if buffer.n != plan.n:
            raise ValueError(f"buffer n={buffer.n} does not match plan n={plan.n}")
        self.plan = plan
        self.buf = buffer
        self.k = 0
        self.full_first = full_first

    def step(self, p: SymMatrix) -> ReducedEventSet:
        if p.n != self.plan.n:
            raise ValueError(f"dimension mismatch: plan n={self.plan.n}, matrix n={p.n}")
        k = self.k + 1
        if self.full_first and k == 1:
            events = ReducedEventSet(p.n, np.arange(packed_size(p.n)), p.data, k)
        else:
            events = decide(self.plan, p, self.buf, timestep=k)
        self.buf = _apply(self.buf, events)
        self.k = k
        return events


class Receiver:
    """Receiver side: buffer, previous buffer and bounder.

    After :meth:`step`, ``delta_hat`` and ``result`` hold the error bounds
    and the bound of the latest step.
    """

    def __init__(self, plan: TriggerPlan, buffer: SymMatrix):
        if buffer.n != plan.n:
            raise ValueError(f"buffer n={buffer.n} does not match plan n={plan.n}")
        self.plan = plan
        self.buf = buffer
        self.buf_prev = buffer
        self.k = 0
        self.delta_hat: SymMatrix | None = None
        self.result: BoundResult | None = None

    def step(self, events: ReducedEventSet) -> SymMatrix:
        if events.timestep != self.k + 1:
            raise FrameError(f"expected timestep {self.k + 1}, got {events.timestep}")
        if events.n != self.plan.n:
            raise FrameError(f"frame n={events.n} does not match plan n={self.plan.n}")
        buf_prev, buf = self.buf, _apply(self.buf, events)
        delta_hat = bounds(self.plan, buf, buf_prev, events)
        result = bound(buf, delta_hat)
        self.buf_prev, self.buf = buf_prev, buf
        self.delta_hat, self.result = delta_hat, result
        self.k = events.timestep
        return result.p_hat


def tx_step(state: Transmitter, p: SymMatrix) -> ReducedEventSet:
    return state.step(p)


def rx_step(state: Receiver, events: ReducedEventSet) -> SymMatrix:
    return state.step(events)


INIT_POLICIES = ("zero", "identity", "full")


def open_channel(plan: TriggerPlan, init: str = "zero") -> tuple:
    """Create a synchronised transmitter/receiver pair.

    ``init`` selects the common initial buffer: ``"zero"``, ``"identity"``,
    or ``"full"`` (zero buffers, and the first matrix is sent completely).
    """
    if init not in INIT_POLICIES:
        raise ValueError(f"unknown initial buffer policy {init!r}; expected one of {INIT_POLICIES}")
    start = SymMatrix.identity(plan.n) if init == "identity" else SymMatrix.zeros(plan.n)
    return Transmitter(plan, start, full_first=init == "full"), Receiver(plan, start)
