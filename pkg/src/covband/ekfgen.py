"""Covariance sequences from an EKF tracking 2-D vehicle trajectories.

State ``(x, y, theta, v, omega)``; the process model moves the vehicle
along its heading, integrates the turn rate and lets the turn rate decay by
``beta`` each step.  Positions are measured directly.

Randomness comes from ``numpy.random.Generator`` with the PCG64 bit
generator; Gaussian draws use NumPy's ziggurat sampler.  A given seed
therefore reproduces a sequence bitwise on a given NumPy release.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .symmat import SymMatrix, packed_size

__all__ = [
    "VehicleModel",
    "EkfState",
    "TrajectoryRecord",
    "CsvFormatError",
    "transition",
    "transition_jacobian",
    "predict",
    "update",
    "initial_state",
    "generate_sequence",
    "synth_trajectories",
    "ingest_csv",
    "write_sequence",
    "read_sequence",
    "write_dataset",
    "read_dataset",
]

STATE_DIM = 5
_H = np.hstack([np.eye(2), np.zeros((2, 3))])


@dataclass(frozen=True)
class VehicleModel:
    beta: float = 0.9
    ts: float = 1 / 25
    var_x: float = 1e-3
    var_y: float = 1e-3
    var_theta: float = 1e-3
    var_v: float = 1e-2
    var_omega: float = 1e-2
    var_pos: float = 0.1
    # Documented with the model but not used by its equations.
    wheelbase: float = 2.5

    def __post_init__(self):
        variances = (self.var_x, self.var_y, self.var_theta, self.var_v, self.var_omega, self.var_pos)
        if min(variances) <= 0:
            raise ValueError("all noise variances must be positive")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        if self.ts <= 0:
            raise ValueError("sampling period must be positive")

    @property
    def q(self) -> np.ndarray:
        return np.diag([self.var_x, self.var_y, self.var_theta, self.var_v, self.var_omega])

    @property
    def r(self) -> np.ndarray:
        return self.var_pos * np.eye(2)


@dataclass(frozen=True)
class EkfState:
    x_hat: np.ndarray
    p: np.ndarray  # dense 5x5, kept exactly symmetric

    def covariance(self) -> SymMatrix:
        return SymMatrix.from_dense(self.p)


@dataclass(frozen=True)
class TrajectoryRecord:
    track_id: str
    positions: np.ndarray = field(repr=False)  # shape (length, 2), metres

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError(f"positions must have shape (length, 2), got {pos.shape}")
        if pos.shape[0] < 2:
            raise ValueError("a trajectory needs at least two positions")
        if not np.all(np.isfinite(pos)):
            raise ValueError("trajectory positions must be finite")
        object.__setattr__(self, "positions", pos)

    def __len__(self) -> int:
        return self.positions.shape[0]


def transition(x: np.ndarray, model: VehicleModel) -> np.ndarray:
    px, py, theta, v, omega = x
    ts = model.ts
    return np.array(
        [
            px + ts * v * np.cos(theta),
            py + ts * v * np.sin(theta),
            theta + ts * omega,
            v,
            model.beta * omega,
        ]
    )


def transition_jacobian(x: np.ndarray, model: VehicleModel) -> np.ndarray:
    _, _, theta, v, _ = x
    ts = model.ts
    c, s = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [1.0, 0.0, -ts * v * s, ts * c, 0.0],
            [0.0, 1.0, ts * v * c, ts * s, 0.0],
            [0.0, 0.0, 1.0, 0.0, ts],
            [0.0, 0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, model.beta],
        ]
    )


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def predict(state: EkfState, model: VehicleModel) -> EkfState:
    f = transition_jacobian(state.x_hat, model)
    p = f @ state.p @ f.T + model.q
    return EkfState(transition(state.x_hat, model), _symmetrize(p))


def update(state: EkfState, z, model: VehicleModel) -> EkfState:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (2,) or not np.all(np.isfinite(z)):
        raise ValueError("measurement must be a finite 2-vector")
    p = state.p
    s = _H @ p @ _H.T + model.r
    if np.linalg.cond(s) > 1e12:
        raise np.linalg.LinAlgError("innovation covariance is numerically singular")
    gain = np.linalg.solve(s, _H @ p).T
    x_hat = state.x_hat + gain @ (z - _H @ state.x_hat)
    p = (np.eye(STATE_DIM) - gain @ _H) @ p
    return EkfState(x_hat, _symmetrize(p))


def initial_state(z1, model: VehicleModel) -> EkfState:
    z1 = np.asarray(z1, dtype=np.float64)
    x_hat = np.array([z1[0], z1[1], 0.0, 0.0, 0.0])
    p = np.diag([model.var_pos, model.var_pos, 1.0, 1.0, 1.0])
    return EkfState(x_hat, p)


def generate_sequence(
    traj: TrajectoryRecord, model: VehicleModel | None = None, noise_seed: int = 0
) -> list:
    """Posterior covariances of an EKF run on noisy positions of ``traj``.

    The first element is the initial covariance; the list has one matrix
    per trajectory position.
    """
    model = model or VehicleModel()
    rng = np.random.default_rng(noise_seed)
    z = traj.positions + rng.normal(0.0, np.sqrt(model.var_pos), size=traj.positions.shape)
    state = initial_state(z[0], model)
    seq = [state.covariance()]
    for zk in z[1:]:
        state = update(predict(state, model), zk, model)
        seq.append(state.covariance())
    return seq


def synth_trajectories(count: int, length: int, seed: int, ts: float = 1 / 25) -> list:
    """Piecewise constant-speed, constant-turn-rate tracks.

    Each segment lasts 25 to 250 steps with speed in [0, 15] m/s and turn
    rate in [-0.5, 0.5] rad/s, drawn uniformly.
    """
    if length < 2:
        raise ValueError("length must be at least 2")
    rng = np.random.default_rng(seed)
    tracks = []
    for t in range(count):
        pos = np.empty((length, 2))
        x, y = rng.uniform(-50.0, 50.0, size=2)
        heading = rng.uniform(-np.pi, np.pi)
        k = 0
        while k < length:
            seg = int(rng.integers(25, 251))
            speed = rng.uniform(0.0, 15.0)
            turn = rng.uniform(-0.5, 0.5)
            for _ in range(min(seg, length - k)):
                pos[k] = x, y
                x += ts * speed * np.cos(heading)
                y += ts * speed * np.sin(heading)
                heading += ts * turn
                k += 1
        tracks.append(TrajectoryRecord(f"synth-{t}", pos))
    return tracks


class CsvFormatError(ValueError):
    pass


def ingest_csv(path, max_length: int = 3000) -> list:
    """Read track tables with ``trackId``, ``xCenter`` and ``yCenter`` columns.

    Rows are expected grouped by track in frame order.  Tracks longer than
    ``max_length`` or shorter than two rows are dropped.
    """
    path = Path(path)
    tracks: dict = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"trackId", "xCenter", "yCenter"} - set(reader.fieldnames or ())
        if missing:
            raise CsvFormatError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            line = reader.line_num
            try:
                x, y = float(row["xCenter"]), float(row["yCenter"])
            except (TypeError, ValueError):
                raise CsvFormatError(
                    f"{path}:{line}: non-numeric position "
                    f"({row['xCenter']!r}, {row['yCenter']!r})"
                ) from None
            if not (np.isfinite(x) and np.isfinite(y)):
                raise CsvFormatError(f"{path}:{line}: non-finite position")
            tracks.setdefault(row["trackId"], []).append((x, y))
    return [
        TrajectoryRecord(str(tid), np.array(pts))
        for tid, pts in tracks.items()
        if 2 <= len(pts) <= max_length
    ]


_SEQ_HEADER = struct.Struct("<BI")


def write_sequence(path, seq: Sequence[SymMatrix], fmt: str = "bin") -> None:
    """Write a covariance sequence as packed binary or text frames.

    Binary: ``n`` (u8), length (u32), then each packed upper triangle as
    little-endian binary64.  Text: matrices in the symmetric-matrix text
    format separated by blank lines.
    """
    path = Path(path)
    if fmt == "bin":
        n = seq[0].n
        if any(m.n != n for m in seq):
            raise ValueError("all matrices in a sequence must share n")
        body = np.concatenate([m.data for m in seq]).astype("<f8").tobytes()
        path.write_bytes(_SEQ_HEADER.pack(n, len(seq)) + body)
    elif fmt == "txt":
        path.write_text("\n".join(m.to_text() for m in seq))
    else:
        raise ValueError(f"unknown sequence format {fmt!r}")


def read_sequence(path) -> list:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".txt":
        blocks = [b for b in raw.decode().split("\n\n") if b.strip()]
        return [SymMatrix.from_text(b) for b in blocks]
    if len(raw) < _SEQ_HEADER.size:
        raise ValueError(f"{path}: truncated sequence file")
    n, length = _SEQ_HEADER.unpack_from(raw, 0)
    m = packed_size(n)
    expected = _SEQ_HEADER.size + 8 * m * length
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=_SEQ_HEADER.size).reshape(length, m)
    return [SymMatrix(n, row) for row in data]


def write_dataset(directory, sequences: Sequence, fmt: str = "bin", track_ids: Sequence | None = None) -> list:
    """Write one file per sequence plus a ``tracks.csv`` manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    suffix = "cov" if fmt == "bin" else "txt"
    paths = []
    with (directory / "tracks.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["file", "track_id", "length"])
        for i, seq in enumerate(sequences):
            path = directory / f"seq_{i:05d}.{suffix}"
            write_sequence(path, seq, fmt)
            tid = track_ids[i] if track_ids is not None else str(i)
            writer.writerow([path.name, tid, len(seq)])
            paths.append(path)
    return paths


def read_dataset(directory) -> list:
    """All ``seq_*.cov`` / ``seq_*.txt`` files of a directory, in name order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory {directory} does not exist")
    files = sorted(p for p in directory.glob("seq_*") if p.suffix in (".cov", ".txt"))
    if not files:
        raise ValueError(f"no sequence files in {directory}")
    return [read_sequence(p) for p in files]
