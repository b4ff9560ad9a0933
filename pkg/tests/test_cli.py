from __future__ import annotations

import csv

import pytest

from covband import ekfgen
from covband.channel import decode, frame_size
from covband.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["generate", "--out", str(root / "ds"), "--count", "3", "--length", "120", "--seed", "4"]) == 0
    (root / "abs.yaml").write_text("kind: absolute\nthresholds: 9.0e-5\n")
    return root


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_generate_is_seeded(workspace, tmp_path):
    assert main(["generate", "--out", str(tmp_path / "again"), "--count", "3", "--length", "120", "--seed", "4"]) == 0
    a, b = ekfgen.read_dataset(workspace / "ds"), ekfgen.read_dataset(tmp_path / "again")
    assert all(x == y for s, t in zip(a, b) for x, y in zip(s, t))
    assert len(_rows(workspace / "ds" / "tracks.csv")) == 3


def test_generate_from_csv(tmp_path):
    rows = ["trackId,xCenter,yCenter"] + [f"5,{k * 0.2},{k * 0.1}" for k in range(40)]
    (tmp_path / "t.csv").write_text("\n".join(rows) + "\n")
    out = tmp_path / "ds"
    assert main(["generate", "--out", str(out), "--csv", str(tmp_path / "t.csv"), "--format", "txt"]) == 0
    (seq,) = ekfgen.read_dataset(out)
    assert len(seq) == 40


def test_transmit_frames_and_metrics(workspace, tmp_path):
    frames, metrics = tmp_path / "f.bin", tmp_path / "m.csv"
    seq = workspace / "ds" / "seq_00000.cov"
    args = ["transmit", "--sequence", str(seq), "--trigger", str(workspace / "abs.yaml")]
    assert main(args + ["--frames", str(frames), "--metrics", str(metrics), "--check-psd"]) == 0
    rows = _rows(metrics)
    assert len(rows) == 120
    raw = frames.read_bytes()
    assert len(raw) == sum(int(r["bytes"]) for r in rows)
    offset = 0
    for r in rows:
        size = frame_size(int(r["sent"]))
        ev = decode(raw[offset : offset + size])
        assert ev.timestep == int(r["k"]) and len(ev) == int(r["sent"])
        offset += size
    assert main(["report", str(metrics), "--out", str(tmp_path / "rep.csv")]) == 0
    assert [r["metric"] for r in _rows(tmp_path / "rep.csv")] == ["sent", "rc", "reduction"]


def test_run_outputs(workspace, tmp_path):
    args = ["run", "--dataset", str(workspace / "ds"), "--trigger", str(workspace / "abs.yaml")]
    paths = [tmp_path / n for n in ("sum.csv", "steps.csv", "long.csv")]
    assert main(args + ["--out", str(paths[0]), "--steps", str(paths[1]), "--long", str(paths[2])]) == 0
    assert len(_rows(paths[1])) == 360
    assert len(_rows(paths[2])) == 3 * 360
    summary = {r["metric"]: r for r in _rows(paths[0])}
    assert float(summary["rc"]["q1"]) >= 0.0


def test_learn(workspace, tmp_path, capsys):
    out = tmp_path / "curve.csv"
    args = ["learn", "--dataset", str(workspace / "ds"), "--lambdas", "1", "1000", "--per-decade", "2", "--out", str(out)]
    assert main(args) == 0
    printed = capsys.readouterr().out.strip().splitlines()
    assert printed[0] == "lambda,t_star" and len(printed) == 3
    assert len(_rows(out)) == 2 * 11


def test_input_errors_exit_2(workspace, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("kind: nope\n")
    ds = str(workspace / "ds")
    assert main(["run", "--dataset", ds, "--trigger", str(bad)]) == 2
    assert main(["run", "--dataset", str(tmp_path / "missing"), "--trigger", str(workspace / "abs.yaml")]) == 2
    (tmp_path / "x.csv").write_text("trackId,xCenter\n1,2\n")
    assert main(["generate", "--out", str(tmp_path / "o"), "--csv", str(tmp_path / "x.csv")]) == 2
    (tmp_path / "m.csv").write_text("k,sent\n1,2\n")
    assert main(["report", str(tmp_path / "m.csv")]) == 2


def test_invariant_violation_exit_3(workspace, monkeypatch):
    from covband import cli
    from covband.metrics import InvariantViolation

    def boom(*a, **k):
        raise InvariantViolation("forced")

    monkeypatch.setattr(cli, "run_experiment", boom)
    assert main(["run", "--dataset", str(workspace / "ds"), "--trigger", str(workspace / "abs.yaml")]) == 3


def test_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2
