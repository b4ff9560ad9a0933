"""Command line interface: ``covband generate|transmit|run|learn|report``.

Exit codes: 0 success, 2 input or parse error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import numpy as np

from . import ekfgen
from .channel import INIT_POLICIES, FrameError, encode, open_channel
from .learn import TRIGGER_KINDS, LearnConfig, log_grid, sweep
from .metrics import (
    PSD_TOL,
    RC_TOL,
    ExperimentError,
    InvariantViolation,
    data_reduction_ratio,
    relative_conservativeness,
    run_experiment,
    summarize,
)
from .specfile import load_spec
from .triggers import BoundError, SpecError, compile_spec

log = logging.getLogger("covband")

EXIT_INPUT = 2
EXIT_INVARIANT = 3


def _cmd_generate(args) -> int:
    model = ekfgen.VehicleModel()
    if args.csv:
        tracks = []
        for path in args.csv:
            tracks.extend(ekfgen.ingest_csv(path, max_length=args.max_length))
    else:
        tracks = ekfgen.synth_trajectories(args.count, args.length, args.seed)
    seqs = []
    for i, traj in enumerate(tracks):
        noise_seed = int(np.random.SeedSequence([args.seed, i]).generate_state(1)[0])
        seqs.append(ekfgen.generate_sequence(traj, model, noise_seed))
    ekfgen.write_dataset(args.out, seqs, args.format, [t.track_id for t in tracks])
    log.info("wrote %d sequences to %s", len(seqs), args.out)
    return 0


def _write_rows(path, header, rows) -> None:
    if str(path) == "-":
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerows(rows)
        return
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _cmd_transmit(args) -> int:
    seq = ekfgen.read_sequence(args.sequence)
    plan = compile_spec(load_spec(args.trigger), seq[0].n)
    tx, rx = open_channel(plan, args.init)
    out = sys.stdout.buffer if args.frames == "-" else open(args.frames, "wb")
    rows = []
    try:
        for p in seq:
            events = tx.step(p)
            frame = encode(events)
            out.write(frame)
            p_hat = rx.step(events)
            rc = relative_conservativeness(p_hat, p)
            if rc < -RC_TOL or (args.check_psd and not (p_hat - p).is_psd(PSD_TOL)):
                raise InvariantViolation(f"bound at step {events.timestep} is not conservative")
            rows.append((events.timestep, len(events), repr(rc), len(frame)))
    finally:
        if out is not sys.stdout.buffer:
            out.close()
    if args.metrics:
        _write_rows(args.metrics, ["k", "sent", "rc", "bytes"], rows)
    return 0


def _summary_rows(sent, rc, reduction) -> list:
    rows = []
    for name, values in (("sent", sent), ("rc", rc), ("reduction", reduction)):
        st = summarize(values)
        rows.append((name, repr(st.median), repr(st.q1), repr(st.q3), repr(st.whisker_low), repr(st.whisker_high), len(st.outliers)))
    return rows


_SUMMARY_HEADER = ["metric", "median", "q1", "q3", "whisker_low", "whisker_high", "outliers"]


def _cmd_run(args) -> int:
    dataset = ekfgen.read_dataset(args.dataset)
    n = dataset[0][0].n
    plan = compile_spec(load_spec(args.trigger), n)
    runs = run_experiment(dataset, plan, args.init, check_psd=args.check_psd, workers=args.workers)
    sent = [m.sent for run in runs for m in run]
    rc = [m.rc for run in runs for m in run]
    reduction = [data_reduction_ratio(sum(m.sent for m in run), len(run), n) for run in runs]
    _write_rows(args.out, _SUMMARY_HEADER, _summary_rows(sent, rc, reduction))
    if args.steps:
        _write_rows(
            args.steps,
            ["seq", "k", "sent", "rc", "bytes"],
            [(s, m.k, m.sent, repr(m.rc), m.bytes) for s, run in enumerate(runs) for m in run],
        )
    if args.long:
        rows = []
        for s, run in enumerate(runs):
            for m in run:
                rows += [(s, m.k, "sent", m.sent), (s, m.k, "rc", repr(m.rc)), (s, m.k, "bytes", m.bytes)]
        _write_rows(args.long, ["seq", "step", "metric", "value"], rows)
    return 0


def _cmd_learn(args) -> int:
    dataset = ekfgen.read_dataset(args.dataset)
    grid = log_grid(args.grid_min, args.grid_max, args.per_decade)
    cfg = LearnConfig(
        lam=args.lambdas[0],
        grid=grid,
        trigger_kind=args.kind,
        dataset=dataset,
        budget=args.budget,
        init=args.init,
        printed_rc_sum=args.printed_rc_sum,
    )
    results = sweep(cfg, args.lambdas, workers=args.workers)
    rows = [
        (lam, repr(t), repr(b.total), repr(b.data_term), repr(b.cons_term))
        for lam, (_, curve) in results.items()
        for t, b in curve
    ]
    _write_rows(args.out, ["lambda", "threshold", "total", "data_term", "cons_term"], rows)
    print("lambda,t_star")
    for lam, (t_star, _) in results.items():
        print(f"{lam!r},{t_star!r}")
    return 0


def _read_metrics(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"k", "sent", "rc"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        runs: dict = {}
        for row in reader:
            try:
                key = (str(path), row.get("seq", "0"))
                runs.setdefault(key, []).append((int(row["k"]), int(row["sent"]), float(row["rc"])))
            except ValueError:
                raise ValueError(f"{path}:{reader.line_num}: malformed row") from None
    return list(runs.values())


def _cmd_report(args) -> int:
    runs = []
    for path in args.metrics:
        runs.extend(_read_metrics(path))
    if not runs:
        raise ValueError("no metric rows found")
    sent = [r[1] for run in runs for r in run]
    rc = [r[2] for run in runs for r in run]
    reduction = [data_reduction_ratio(sum(r[1] for r in run), len(run), args.n) for run in runs]
    _write_rows(args.out, _SUMMARY_HEADER, _summary_rows(sent, rc, reduction))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="covband", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="EKF covariance sequences from synthetic or CSV tracks")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--csv", nargs="+", help="track CSV files (trackId, xCenter, yCenter)")
    p.add_argument("--count", type=int, default=100, help="synthetic track count")
    p.add_argument("--length", type=int, default=300, help="synthetic track length in steps")
    p.add_argument("--max-length", type=int, default=3000, help="drop CSV tracks longer than this")
    p.add_argument("--format", choices=("bin", "txt"), default="bin")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_generate)

    def add_common(p):
        p.add_argument("--trigger", required=True, help="trigger specification (YAML/JSON)")
        p.add_argument("--init", choices=INIT_POLICIES, default="zero", help="initial buffer policy")
        p.add_argument("--check-psd", action="store_true", help="verify P_hat - P is PSD at every step")

    p = sub.add_parser("transmit", help="run one sequence, emit frames and per-step metrics")
    p.add_argument("--sequence", required=True)
    p.add_argument("--frames", default="-", help="frame output file, '-' for stdout")
    p.add_argument("--metrics", help="per-step metrics CSV")
    add_common(p)
    p.set_defaults(func=_cmd_transmit)

    p = sub.add_parser("run", help="run a whole dataset and summarise")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default="-", help="summary CSV")
    p.add_argument("--steps", help="per-step metrics CSV")
    p.add_argument("--long", help="long-format (seq, step, metric, value) CSV")
    p.add_argument("--workers", type=int, default=1, help="worker processes, one sequence per task")
    add_common(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("learn", help="grid search for a shared threshold")
    p.add_argument("--dataset", required=True)
    p.add_argument("--kind", choices=TRIGGER_KINDS, default="absolute")
    p.add_argument("--lambdas", type=float, nargs="+", default=[1.0, 10.0, 100.0, 1000.0])
    p.add_argument("--grid-min", type=float, default=1e-6)
    p.add_argument("--grid-max", type=float, default=1e-1)
    p.add_argument("--per-decade", type=int, default=25)
    p.add_argument("--budget", type=int, default=7, help="N for --kind combined")
    p.add_argument("--init", choices=INIT_POLICIES, default="zero")
    p.add_argument("--printed-rc-sum", action="store_true", help="scale the conservativeness term by n(n+1)/2")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="curve.csv", help="objective curve CSV")
    p.set_defaults(func=_cmd_learn)

    p = sub.add_parser("report", help="summaries from per-step metric CSVs")
    p.add_argument("metrics", nargs="+")
    p.add_argument("--n", type=int, default=5, help="matrix dimension")
    p.add_argument("--out", default="-")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"covband: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (SpecError, FrameError, BoundError, ExperimentError, OSError, ValueError) as exc:
        print(f"covband: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
