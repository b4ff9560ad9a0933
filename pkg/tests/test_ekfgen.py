from __future__ import annotations

import numpy as np
import pytest

from covband import ekfgen
from covband.ekfgen import (
    CsvFormatError,
    EkfState,
    TrajectoryRecord,
    VehicleModel,
    generate_sequence,
    ingest_csv,
    predict,
    synth_trajectories,
    transition,
    transition_jacobian,
    update,
)
from covband.symmat import SymMatrix

MODEL = VehicleModel()


def _random_state(rng) -> np.ndarray:
    return np.array(
        [rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-np.pi, np.pi), rng.uniform(0, 15), rng.uniform(-0.5, 0.5)]
    )


def _fd_jacobian(x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    cols = []
    for i in range(5):
        e = np.zeros(5)
        e[i] = h
        cols.append((transition(x + e, MODEL) - transition(x - e, MODEL)) / (2 * h))
    return np.column_stack(cols)


def test_defaults():
    assert MODEL.beta == 0.9
    assert MODEL.ts == pytest.approx(0.04)
    assert np.array_equal(np.diag(MODEL.q), [1e-3, 1e-3, 1e-3, 1e-2, 1e-2])
    assert np.array_equal(MODEL.r, 0.1 * np.eye(2))


@pytest.mark.parametrize(
    "kwargs", [dict(beta=0.0), dict(beta=1.5), dict(ts=0.0), dict(var_pos=0.0), dict(var_v=-1.0)]
)
def test_model_validation(kwargs):
    with pytest.raises(ValueError):
        VehicleModel(**kwargs)


def test_straight_line_prediction():
    s = predict(EkfState(np.array([0.0, 0.0, 0.0, 1.0, 0.0]), np.eye(5)), MODEL)
    assert s.x_hat == pytest.approx([0.04, 0.0, 0.0, 1.0, 0.0])
    s = predict(EkfState(np.array([0.0, 0.0, 0.0, 0.0, 1.0]), np.eye(5)), MODEL)
    assert s.x_hat[4] == pytest.approx(0.9)
    assert s.x_hat[2] == pytest.approx(0.04)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = _random_state(rng)
        f, fd = transition_jacobian(x, MODEL), _fd_jacobian(x)
        assert np.linalg.norm(f - fd) <= 1e-6 * np.linalg.norm(f)


def test_predict_covariance():
    rng = np.random.default_rng(1)
    x = _random_state(rng)
    a = rng.normal(size=(5, 5))
    p = a @ a.T
    s = predict(EkfState(x, p), MODEL)
    f = transition_jacobian(x, MODEL)
    assert s.p == pytest.approx(f @ p @ f.T + MODEL.q)
    assert np.array_equal(s.p, s.p.T)


def test_update_measurement_dominated():
    model = VehicleModel(var_pos=1e-6)
    s = update(EkfState(np.zeros(5), 1e6 * np.eye(5)), np.array([1.0, 2.0]), model)
    assert s.p[0, 0] == pytest.approx(1e-6, rel=1e-3)  # cancellation in (I - KH)P
    assert s.p[1, 1] == pytest.approx(1e-6, rel=1e-3)
    assert s.x_hat[:2] == pytest.approx([1.0, 2.0], rel=1e-9)


def test_update_zero_innovation():
    rng = np.random.default_rng(2)
    x = _random_state(rng)
    p = np.diag([0.5, 0.5, 1.0, 1.0, 1.0])
    s = update(EkfState(x, p), x[:2], MODEL)
    assert np.array_equal(s.x_hat, x)
    assert np.all(np.diag(s.p) <= np.diag(p))
    assert np.trace(s.p) < np.trace(p)


def test_update_posterior_psd():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        a = rng.normal(size=(5, 5)) * rng.uniform(0.01, 10)
        state = EkfState(_random_state(rng), a @ a.T + 1e-6 * np.eye(5))
        s = update(state, rng.normal(size=2) * 10, MODEL)
        assert np.array_equal(s.p, s.p.T)
        assert SymMatrix.from_dense(s.p).is_psd(1e-9)


def test_update_rejects_bad_measurement():
    with pytest.raises(ValueError):
        update(EkfState(np.zeros(5), np.eye(5)), np.array([np.nan, 0.0]), MODEL)
    with pytest.raises(ValueError):
        update(EkfState(np.zeros(5), np.eye(5)), np.zeros(3), MODEL)


def test_sequence_start_length_and_determinism():
    traj = synth_trajectories(1, 50, seed=4)[0]
    a = generate_sequence(traj, MODEL, noise_seed=9)
    b = generate_sequence(traj, MODEL, noise_seed=9)
    c = generate_sequence(traj, MODEL, noise_seed=10)
    assert len(a) == 50
    assert a[0] == SymMatrix.diag([0.1, 0.1, 1.0, 1.0, 1.0])
    assert all(x == y for x, y in zip(a, b))
    assert any(x != y for x, y in zip(a, c))
    assert all(m.is_psd(1e-9) for m in a)


def test_position_variance_converges_on_straight_line():
    pos = np.column_stack([np.arange(300) * 0.04 * 10.0, np.zeros(300)])
    seq = generate_sequence(TrajectoryRecord("line", pos), MODEL, noise_seed=0)
    assert all(m.get(0, 0) < 0.1 for m in seq[100:])


def test_synth_trajectories():
    a = synth_trajectories(5, 400, seed=1)
    b = synth_trajectories(5, 400, seed=1)
    assert len(a) == 5
    for t, u in zip(a, b):
        assert len(t) == 400
        assert np.array_equal(t.positions, u.positions)
        speed = np.linalg.norm(np.diff(t.positions, axis=0), axis=1) / MODEL.ts
        assert speed.max() <= 15.0 + 1e-9
    with pytest.raises(ValueError):
        synth_trajectories(1, 1, seed=0)
    seq = generate_sequence(a[0], MODEL, noise_seed=0)
    assert all(m.trace() > 0 for m in seq)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        TrajectoryRecord("a", np.zeros((1, 2)))
    with pytest.raises(ValueError):
        TrajectoryRecord("a", np.zeros((3, 3)))
    with pytest.raises(ValueError):
        TrajectoryRecord("a", np.array([[0.0, 0.0], [np.inf, 0.0]]))


def _write(tmp_path, text: str):
    path = tmp_path / "tracks.csv"
    path.write_text(text)
    return path


def test_ingest_csv(tmp_path):
    path = _write(tmp_path, "recordingId,trackId,frame,xCenter,yCenter\n0,7,0,1.0,2.0\n0,7,1,1.5,2.5\n0,8,0,0,0\n")
    tracks = ingest_csv(path)
    assert len(tracks) == 1  # one-row track dropped
    assert tracks[0].track_id == "7"
    assert np.array_equal(tracks[0].positions, [[1.0, 2.0], [1.5, 2.5]])


def test_ingest_csv_errors(tmp_path):
    with pytest.raises(CsvFormatError, match="xCenter"):
        ingest_csv(_write(tmp_path, "trackId,yCenter\n1,2\n"))
    with pytest.raises(CsvFormatError, match=":3:"):
        ingest_csv(_write(tmp_path, "trackId,xCenter,yCenter\n1,0,0\n1,abc,0\n"))


def test_ingest_length_cap(tmp_path):
    rows = ["trackId,xCenter,yCenter"]
    rows += [f"1,{k * 0.1},0" for k in range(3001)]
    rows += [f"2,{k * 0.1},0" for k in range(3000)]
    tracks = ingest_csv(_write(tmp_path, "\n".join(rows) + "\n"))
    assert [t.track_id for t in tracks] == ["2"]
    assert len(ingest_csv(tmp_path / "tracks.csv", max_length=4000)) == 2


@pytest.mark.parametrize("fmt, suffix", [("bin", ".cov"), ("txt", ".txt")])
def test_sequence_files_round_trip(tmp_path, fmt, suffix):
    seq = generate_sequence(synth_trajectories(1, 20, seed=2)[0], MODEL, 1)
    path = tmp_path / f"s{suffix}"
    ekfgen.write_sequence(path, seq, fmt)
    back = ekfgen.read_sequence(path)
    assert len(back) == 20 and all(a == b for a, b in zip(seq, back))
    if fmt == "bin":
        assert path.stat().st_size == 5 + 20 * 15 * 8


def test_truncated_sequence_file(tmp_path):
    seq = generate_sequence(synth_trajectories(1, 5, seed=2)[0], MODEL, 1)
    path = tmp_path / "s.cov"
    ekfgen.write_sequence(path, seq)
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(ValueError):
        ekfgen.read_sequence(path)


def test_dataset_round_trip(tmp_path):
    seqs = [generate_sequence(t, MODEL, i) for i, t in enumerate(synth_trajectories(3, 10, seed=5))]
    ekfgen.write_dataset(tmp_path / "ds", seqs)
    back = ekfgen.read_dataset(tmp_path / "ds")
    assert len(back) == 3
    assert all(a == b for s, t in zip(seqs, back) for a, b in zip(s, t))
    with pytest.raises(FileNotFoundError):
        ekfgen.read_dataset(tmp_path / "missing")
