"""Command-line front end.

Commands: build-dem, sample, decode, bench, sweep.  Exit codes: 0 success,
2 parameter/usage errors, 3 runtime budget exceeded (too many decode
failures, or threshold estimation impossible).
"""

from __future__ import annotations

import argparse
import configparser
import sys

import numpy as np

from .bench import (CSV_COLUMNS, ExperimentConfig, MetricsReport, ThresholdPoint,
                    estimate_threshold, reports_to_json, rows_to_csv, run_experiment,
                    evaluate_decoder, _build_pipeline)
from .bp import bp_init
from .dem import DetectorErrorModel, extract_dem
from .errors import BppdError, EstimationError, ParameterError
from .framesim import read_shots, sample_shots, write_shots
from .graph import decompose_to_graph
from .surface import build_memory_circuit

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BUDGET = 3


def _fail(msg: str, code: int = EXIT_USAGE) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _check_distance(d: int):
    if d < 3 or d % 2 == 0:
        raise ParameterError("distance must be odd and >= 3")


def cmd_build_dem(args) -> int:
    _check_distance(args.distance)
    rounds = args.rounds if args.rounds else args.distance
    circuit = build_memory_circuit(args.distance, rounds, args.p)
    dem = extract_dem(circuit)
    n_hyper = sum(1 for dets in dem.column_dets if len(dets) > 2)
    out = args.out or f"d{args.distance}_r{rounds}_p{args.p}.dem"
    with open(out, "w") as f:
        f.write(dem.to_text())
    print(f"detectors={dem.n_detectors} mechanisms={dem.n_mechanisms} "
          f"hyperedges={n_hyper} observables={dem.n_observables} -> {out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    _check_distance(args.distance)
    rounds = args.rounds if args.rounds else args.distance
    circuit = build_memory_circuit(args.distance, rounds, args.p)
    shots = sample_shots(circuit, args.shots, args.seed)
    out = args.out or "shots.bin"
    write_shots(out, shots)
    print(f"{args.shots} shots ({circuit.n_detectors} detectors, "
          f"{circuit.n_observables} observables) -> {out}")
    return EXIT_OK


def cmd_decode(args) -> int:
    with open(args.dem) as f:
        dem = DetectorErrorModel.from_text(f.read())
    shots = read_shots(args.shots)
    if shots.syndromes.shape[1] != dem.n_detectors:
        raise ParameterError("shot dump does not match the model's detector count")
    graph = decompose_to_graph(dem)
    tanner = bp_init(dem)
    cfg = ExperimentConfig(
        distance=0, p_phys=-1.0, decoder=args.decoder, rounds=1,
        m_iter=args.m_iter, t_bp=args.t_bp, shots=len(shots), seed=args.seed,
        threads=args.threads,
    )
    report = evaluate_decoder(cfg, dem, graph, tanner, shots)
    print(f"shots={report.shots} logical_error_rate={report.logical_error_rate!r} "
          f"ci=({report.ler_ci[0]!r}, {report.ler_ci[1]!r}) "
          f"decode_errors={report.decode_errors}")
    return EXIT_OK


def _configs_from_file(path: str, args) -> list[ExperimentConfig]:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ParameterError(f"cannot read config file {path}")
    cfgs = []
    for section in parser.sections():
        s = parser[section]
        cfgs.append(ExperimentConfig(
            distance=s.getint("distance"),
            p_phys=s.getfloat("p_phys"),
            decoder=s.get("decoder", "bp+mwpm"),
            rounds=s.getint("rounds", fallback=None),
            m_iter=s.getint("m_iter", fallback=30),
            t_bp=s.getfloat("t_bp", fallback=0.9),
            shots=s.getint("shots", fallback=None),
            seed=s.getint("seed", fallback=args.seed),
            timing_batch=s.getint("timing_batch", fallback=args.timing_batch),
            threads=args.threads,
        ))
    return cfgs


def _table1_grid(distance: int, args) -> list[ExperimentConfig]:
    """Hyperparameter sweep grid: m_iter in {d, 30, d^2} x t_bp in {0.5, 0.9}."""
    cfgs = []
    for m_iter in (distance, 30, distance * distance):
        for t_bp in (0.5, 0.9):
            cfgs.append(ExperimentConfig(
                distance=distance, p_phys=args.p, decoder="bp+mwpm",
                rounds=args.rounds if args.rounds else None,
                m_iter=m_iter, t_bp=t_bp, shots=args.shots, seed=args.seed,
                timing_batch=args.timing_batch, threads=args.threads,
            ))
    return cfgs


def cmd_bench(args) -> int:
    if args.replay:
        return _bench_replay(args)
    if args.config:
        cfgs = _configs_from_file(args.config, args)
    elif args.table1_grid:
        _check_distance(args.distance)
        cfgs = _table1_grid(args.distance, args)
    else:
        _check_distance(args.distance)
        cfgs = [ExperimentConfig(
            distance=args.distance, p_phys=args.p, decoder=args.decoder,
            rounds=args.rounds if args.rounds else None, m_iter=args.m_iter,
            t_bp=args.t_bp, shots=args.shots, seed=args.seed,
            timing_batch=args.timing_batch, threads=args.threads,
        )]
    reports = []
    failures = 0
    for cfg in cfgs:
        rep = run_experiment(cfg)
        failures += rep.decode_errors
        reports.append(rep)
    _emit(args, reports)
    if args.max_failures is not None and failures > args.max_failures:
        return _fail(f"{failures} decode errors exceed budget {args.max_failures}",
                     EXIT_BUDGET)
    return EXIT_OK


def _bench_replay(args) -> int:
    if not args.dem:
        raise ParameterError("--replay needs --dem")
    with open(args.dem) as f:
        dem = DetectorErrorModel.from_text(f.read())
    shots = read_shots(args.replay)
    graph = decompose_to_graph(dem)
    tanner = bp_init(dem)
    cfg = ExperimentConfig(
        distance=0, p_phys=-1.0, decoder=args.decoder, rounds=1,
        m_iter=args.m_iter, t_bp=args.t_bp, shots=len(shots), seed=args.seed,
        timing_batch=args.timing_batch, threads=args.threads,
    )
    rep = evaluate_decoder(cfg, dem, graph, tanner, shots)
    _emit(args, [rep])
    if args.max_failures is not None and rep.decode_errors > args.max_failures:
        return _fail(f"{rep.decode_errors} decode errors exceed budget", EXIT_BUDGET)
    return EXIT_OK


def _emit(args, reports: list[MetricsReport], fits: dict | None = None):
    rows = [row for rep in reports for row in rep.rows()]
    if args.format == "json":
        text = reports_to_json(reports, fits)
    else:
        text = rows_to_csv(rows)
    if args.out:
        mode = "a" if getattr(args, "append", False) else "w"
        with open(args.out, mode) as f:
            f.write(text)
        print(f"wrote {len(rows)} rows -> {args.out}")
    else:
        sys.stdout.write(text)


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def cmd_sweep(args) -> int:
    distances = _int_list(args.distances)
    ps = _float_list(args.ps)
    decoders = [tok.strip() for tok in args.decoders.split(",") if tok.strip()]
    if not distances or not ps or not decoders:
        raise ParameterError("sweep grid must be nonempty")
    for d in distances:
        _check_distance(d)
    reports = []
    points: dict[str, list[ThresholdPoint]] = {dec: [] for dec in decoders}
    for dec in decoders:
        for d in distances:
            for p in ps:
                cfg = ExperimentConfig(
                    distance=d, p_phys=p, decoder=dec, m_iter=args.m_iter,
                    t_bp=args.t_bp, seed=args.seed, threads=args.threads,
                    max_shots=args.shots_cap,
                )
                rep = run_experiment(cfg)
                reports.append(rep)
                points[dec].append(ThresholdPoint(d, p, rep.logical_error_rate,
                                                  rep.shots))
    fits = {}
    try:
        for dec in decoders:
            fits[dec] = estimate_threshold(points[dec], n_bootstrap=args.bootstrap,
                                           seed=args.seed)
    except EstimationError as ex:
        _emit(args, reports)
        return _fail(f"threshold estimation failed: {ex}", EXIT_BUDGET)
    args.format = "json" if args.format == "json" else args.format
    _emit(args, reports, fits)
    for dec, fit in fits.items():
        print(f"{dec}: p_th={fit.p_th:.5f} ci=({fit.ci[0]:.5f}, {fit.ci[1]:.5f}) "
              f"nu={fit.nu:.2f} window=({fit.window[0]:.5f}, {fit.window[1]:.5f})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="bppd",
        description="Two-stage surface-code decoding: BP partial decoder + matching.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=str, default=None)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--threads", type=int, default=0,
                        help="worker processes (0 = all cores; env BPPD_THREADS overrides)")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-dem", parents=[common],
                       help="build a detector error model file")
    b.add_argument("--distance", type=int, required=True)
    b.add_argument("--rounds", type=int, default=0)
    b.add_argument("--p", type=float, required=True)
    b.set_defaults(func=cmd_build_dem)

    s = sub.add_parser("sample", parents=[common],
                   help="sample shots into a binary dump")
    s.add_argument("--distance", type=int, required=True)
    s.add_argument("--rounds", type=int, default=0)
    s.add_argument("--p", type=float, required=True)
    s.add_argument("--shots", type=int, required=True)
    s.set_defaults(func=cmd_sample)

    d = sub.add_parser("decode", parents=[common],
                   help="decode a shot dump against a model file")
    d.add_argument("--dem", type=str, required=True)
    d.add_argument("--shots", type=str, required=True)
    d.add_argument("--decoder", choices=("mwpm", "bp+mwpm", "belief-matching"),
                   default="bp+mwpm")
    d.add_argument("--m-iter", type=int, default=30)
    d.add_argument("--t-bp", type=float, default=0.9)
    d.set_defaults(func=cmd_decode)

    be = sub.add_parser("bench", parents=[common],
                    help="run experiments and emit metrics")
    be.add_argument("--config", type=str, default=None)
    be.add_argument("--distance", type=int, default=0)
    be.add_argument("--rounds", type=int, default=0)
    be.add_argument("--p", type=float, default=0.001)
    be.add_argument("--decoder", choices=("mwpm", "bp+mwpm", "belief-matching"),
                    default="bp+mwpm")
    be.add_argument("--m-iter", type=int, default=30)
    be.add_argument("--t-bp", type=float, default=0.9)
    be.add_argument("--shots", type=int, default=None)
    be.add_argument("--timing-batch", type=int, default=0)
    be.add_argument("--max-failures", type=int, default=None)
    be.add_argument("--table1-grid", action="store_true",
                    help="run the m_iter x t_bp hyperparameter grid")
    be.add_argument("--replay", type=str, default=None,
                    help="decode a pre-sampled shot dump (needs --dem)")
    be.add_argument("--dem", type=str, default=None)
    be.add_argument("--append", action="store_true")
    be.set_defaults(func=cmd_bench)

    sw = sub.add_parser("sweep", parents=[common],
                    help="threshold sweep over a (d, p) grid")
    sw.add_argument("--distances", type=str, required=True)
    sw.add_argument("--ps", type=str, required=True)
    sw.add_argument("--decoders", type=str, default="mwpm,bp+mwpm,belief-matching")
    sw.add_argument("--m-iter", type=int, default=30)
    sw.add_argument("--t-bp", type=float, default=0.9)
    sw.add_argument("--shots-cap", type=int, default=200_000)
    sw.add_argument("--bootstrap", type=int, default=50)
    sw.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, FileNotFoundError) as ex:
        return _fail(str(ex))
    except EstimationError as ex:
        return _fail(str(ex), EXIT_BUDGET)
    except BppdError as ex:
        return _fail(str(ex), EXIT_BUDGET)


if __name__ == "__main__":
    sys.exit(main())
