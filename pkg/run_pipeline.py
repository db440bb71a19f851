#!/usr/bin/env python3
"""
Complete Pipeline Runner
Runs the vehicle mobility pipeline inside one work directory:
1. simulate  - synthetic world, transactions and ground truth
2. ingest    - validate transactions, write accepted records and rejects
3. speedmap  - crowd speed distributions per edge and slot
4. recover   - routes and speeds of the training window
5. train     - destination, route and speed predictors
6. predict   - real-time locations for the test window
7. evaluate  - component and location accuracy against ground truth
8. stats     - mobility statistics tables
"""

import argparse
import logging
import sys
from datetime import date
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from config import RunConfig, parse_overrides
from crowd_speed import assign_short_routes, estimate_slot_distributions, read_speed_map, write_speed_map
from errors import (ConfigError, DomainError, FeedbackRejected, IdentifierError, MobilityError, NotTrainedError,
                    PipelineError, SchemaError)
from etc_ingest import (ContextCalendar, Transaction, Trip, build_vehicle_history, format_transactions,
                        load_context_calendar, read_transactions, slot_of, trips_from_transactions, write_context_calendar,
                        write_rejects, write_transactions)
from highway_graph import HighwayGraph, load_graph, write_graph
from locator import evaluate_locations, predict_locations, write_evaluation_report, write_prediction_trace
from mobility_stats import (context_ndcg_table, coverage_table, entropy_histogram, route_count_histogram,
                            speed_correlation_table, speed_std_table, trip_length_histogram)
from predictors import EmpPredictor, PredictorBundle, load_bundle, save_bundle, train_bundle
from route_recovery import (StateSequence, read_recovered_trips, recover_routes_and_speeds, write_normality_reports,
                            write_recovered_trips)
from synth_sim import corrupt_records, generate_world, read_truth, save_world, simulate_days, write_traces, write_truth

logger = logging.getLogger("run_pipeline")

ACCEPTED = "accepted.csv"
REJECTS = "rejects.csv"
SPEED_MAP = "speedmap.csv"
RECOVERED = "recovered.csv"
NORMALITY = "normality.csv"
BUNDLE = "bundle"
TRUTH = "truth.csv"
TRACES = "traces.csv"
PREDICTIONS = "predictions.csv"
EVALUATION = "evaluation.csv"
EVALUATION_SLOTS = "evaluation_slots.csv"

ERROR_CODES = [
    (PipelineError, None),
    (ConfigError, "config"),
    (IdentifierError, "unknown-id"),
    (SchemaError, "schema"),
    (FeedbackRejected, "feedback-rejected"),
    (NotTrainedError, "not-trained"),
    (DomainError, "domain"),
    (MobilityError, "error"),
    (OSError, "io"),
]


def banner(title: str) -> None:
    print("=" * 80)
    print(title)
    print("=" * 80)


# ---------------------------------------------------------------- workspace

class Workspace:
    """Artifact paths and loaders of one work directory"""

    def __init__(self, workdir: Path, config: RunConfig):
        self.dir = Path(workdir)
        self.config = config
        self.dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.dir / name

    @property
    def header(self) -> List[str]:
        return [self.config.header()]

    def require(self, name: str, code: str, hint: str) -> Path:
        path = self.path(name)
        if not path.exists():
            raise PipelineError(code, f"{path} not found; {hint}")
        return path

    def graph(self) -> HighwayGraph:
        return load_graph(self.require(self.config.graph_file, "missing-graph", "run simulate or provide a graph"))

    def calendar(self) -> ContextCalendar:
        path = self.path(self.config.context_file)
        return load_context_calendar(path) if path.exists() else ContextCalendar()

    def transactions(self, graph: HighwayGraph) -> List[Transaction]:
        path = self.require(ACCEPTED, "missing-transactions", "run ingest first")
        accepted, rejects = read_transactions(path, graph)
        if rejects:
            raise PipelineError("schema", f"{path} has {len(rejects)} invalid records")
        return accepted

    def split(self, transactions: Sequence[Transaction], calendar: ContextCalendar) -> Tuple[Set[date], Set[date]]:
        """First train_days dates for training, the next test_days for testing"""
        days = sorted(set(calendar.dates) | {tx.entry_time.date() for tx in transactions})
        train = set(days[:self.config.train_days])
        test = set(days[self.config.train_days:self.config.days])
        return train, test

    def window_trips(self, transactions: Sequence[Transaction], days: Set[date]) -> List[Trip]:
        chosen = [tx for tx in transactions if tx.entry_time.date() in days]
        return trips_from_transactions(chosen, self.config.slot_width_min)


# ---------------------------------------------------------------- stages

def cmd_simulate(ws: Workspace, write_per_second: bool = False, corrupt_rate: float = 0.0) -> None:
    print("\n🌍 Simulating world and traffic")
    cfg = ws.config
    world = generate_world(cfg.world(), cfg.seed)
    result = simulate_days(world, seed=cfg.seed)
    write_graph(world.graph, ws.path(cfg.graph_file), ws.header)
    write_context_calendar(world.calendar, ws.path(cfg.context_file), ws.header)
    save_world(world, ws.dir, cfg.stamp())
    lines = format_transactions(result.transactions, ws.header)
    if corrupt_rate > 0:
        lines, reasons = corrupt_records(lines, cfg.seed, corrupt_rate)
        print(f"   ⚠️  Corrupted records: {dict(sorted(reasons.items()))}")
    with open(ws.path(cfg.transactions_file), "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    write_truth(result.traces, ws.path(TRUTH), ws.header)
    if write_per_second:
        write_traces(result.traces, ws.path(TRACES), ws.header)
    print(f"   ✅ {len(world.graph.station_ids)} stations, {len(world.graph.edge_ids)} edges, "
          f"{len(world.profiles)} vehicles, {len(result.transactions)} transactions")


def cmd_ingest(ws: Workspace) -> None:
    print("\n📥 Ingesting transactions")
    graph = ws.graph()
    source = ws.require(ws.config.transactions_file, "missing-transactions", "run simulate or provide transactions")
    accepted, rejects = read_transactions(source, graph)
    write_transactions(accepted, ws.path(ACCEPTED), ws.header)
    write_rejects(rejects, ws.path(REJECTS), ws.header)
    print(f"   ✅ Accepted {len(accepted)} records, rejected {len(rejects)}")


def cmd_speedmap(ws: Workspace) -> None:
    print("\n🚦 Estimating crowd speed map")
    graph, calendar = ws.graph(), ws.calendar()
    transactions = ws.transactions(graph)
    train, _ = ws.split(transactions, calendar)
    cfg = ws.config
    routed = assign_short_routes(ws.window_trips(transactions, train), graph, cfg.max_differencing_edges)
    speed_map = estimate_slot_distributions(routed, graph, cfg.crowd_speed())
    write_speed_map(speed_map, ws.path(SPEED_MAP), ws.header)
    print(f"   ✅ {len(speed_map.cells)} observed cells, {100 * speed_map.fallback_share():.1f}% at free flow")


def cmd_recover(ws: Workspace) -> None:
    print("\n🧭 Recovering routes and speeds")
    graph, calendar = ws.graph(), ws.calendar()
    transactions = ws.transactions(graph)
    train, _ = ws.split(transactions, calendar)
    cfg = ws.config
    result = recover_routes_and_speeds(ws.window_trips(transactions, train), graph, cfg.discretization(),
                                       cfg.alpha, cfg.node_budget)
    write_recovered_trips(result.sequences.values(), ws.path(RECOVERED), ws.header)
    write_normality_reports(result.reports, ws.path(NORMALITY), ws.header)
    print(f"   ✅ {len(result.sequences)} trips recovered, {len(result.unrecoverable)} unrecoverable, "
          f"objective {result.objective}{' (budget exhausted)' if result.bounded else ''}")


def cmd_train(ws: Workspace) -> PredictorBundle:
    print("\n🌲 Training predictors")
    recovered = ws.require(RECOVERED, "missing-recovered-trips", "run recover first")
    speed_path = ws.require(SPEED_MAP, "missing-speed-map", "run speedmap first")
    graph, calendar = ws.graph(), ws.calendar()
    transactions = ws.transactions(graph)
    train, _ = ws.split(transactions, calendar)
    bundle = train_bundle(ws.window_trips(transactions, train), read_recovered_trips(recovered), graph, calendar,
                          read_speed_map(speed_path, graph), ws.config.predictors())
    save_bundle(bundle, ws.path(BUNDLE), ws.config.config_hash(), ws.config.seed)
    print(f"   ✅ Updates: destination {bundle.d_forest.n_updates}, route {bundle.r_forest.n_updates}, "
          f"speed {bundle.s_forest.n_updates}")
    return bundle


def _load_bundle(ws: Workspace, graph: HighwayGraph, calendar: ContextCalendar) -> PredictorBundle:
    ws.require(str(Path(BUNDLE) / "manifest.json"), "missing-bundle", "run train first")
    return load_bundle(ws.path(BUNDLE), graph, calendar)


def cmd_predict(ws: Workspace, feedback: bool = False) -> None:
    print("\n📍 Predicting locations for the test window")
    graph, calendar = ws.graph(), ws.calendar()
    transactions = ws.transactions(graph)
    bundle = _load_bundle(ws, graph, calendar)
    _, test = ws.split(transactions, calendar)
    chosen = [tx for tx in transactions if tx.entry_time.date() in test]
    cfg = ws.config

    events = [(tx.entry_time, 1, i) for i, tx in enumerate(chosen)]
    if feedback:
        events += [(tx.exit_time, 0, i) for i, tx in enumerate(chosen)]
    predictions = {}
    for _, kind, i in sorted(events):
        tx = chosen[i]
        if kind == 0:
            bundle.feedback_update(tx)
            continue
        bundle.register_entry(tx.vehicle_id, tx.vehicle_type, tx.entry_station, tx.entry_time)
        predictions[tx.trip_id] = predict_locations(bundle, graph, tx.vehicle_id, tx.vehicle_type, tx.entry_station,
                                                    tx.entry_time, cfg.interval_s, cfg.speed_floor_kmh)
    by_vehicle: Dict[str, list] = {}
    for trip_id in sorted(predictions):
        by_vehicle.setdefault(trip_id.split("@")[0], []).extend(predictions[trip_id])
    write_prediction_trace(by_vehicle, ws.path(PREDICTIONS), ws.header)
    print(f"   ✅ {len(predictions)} trips predicted{' with feedback' if feedback else ''}")


def cmd_evaluate(ws: Workspace) -> None:
    cfg = ws.config
    if not ws.path(cfg.graph_file).exists() and not ws.path(cfg.transactions_file).exists():
        cmd_simulate(ws)
    for artifact, stage in ((ACCEPTED, cmd_ingest), (SPEED_MAP, cmd_speedmap), (RECOVERED, cmd_recover),
                            (str(Path(BUNDLE) / "manifest.json"), cmd_train)):
        if not ws.path(artifact).exists():
            stage(ws)

    print("\n📊 Evaluating against ground truth")
    graph, calendar = ws.graph(), ws.calendar()
    transactions = ws.transactions(graph)
    bundle = _load_bundle(ws, graph, calendar)
    _, test = ws.split(transactions, calendar)
    test_ids = {tx.trip_id for tx in transactions if tx.entry_time.date() in test}
    truth = read_truth(ws.require(TRUTH, "missing-ground-truth", "evaluation needs simulated ground truth"))
    traces = [tr for tr in truth if tr.trip_id in test_ids]
    if not traces:
        raise PipelineError("empty-test-window", "no ground-truth trips in the test window")

    kwargs = dict(threshold_m=cfg.threshold_m, interval_s=cfg.interval_s, speed_floor_kmh=cfg.speed_floor_kmh,
                  mode=cfg.mode)
    report = evaluate_locations(bundle, traces, graph, calendar, **kwargs)
    baseline = evaluate_locations(EmpPredictor(bundle.history, bundle.tables), traces, graph, calendar, **kwargs)
    write_evaluation_report(report, ws.path(EVALUATION), ws.path(EVALUATION_SLOTS), ws.header, baseline)

    print(f"   {'metric':<24}{'model':>10}{'emp':>10}")
    for name, ours, theirs in (
            ("destination accuracy", report.destination_accuracy, baseline.destination_accuracy),
            ("route accuracy", report.route_accuracy, baseline.route_accuracy),
            ("speed accuracy", report.speed_accuracy, baseline.speed_accuracy),
            ("location VeMo-a", report.location_accuracy, baseline.location_accuracy),
            ("location VeMo-r", report.location_accuracy_correct_route, baseline.location_accuracy_correct_route)):
        print(f"   {name:<24}{ours:>10.3f}{theirs:>10.3f}")
    print(f"   ✅ {report.trips} trips, {report.instants} instants at {cfg.threshold_m:g} m / {cfg.interval_s:g} s")


def cmd_stats(ws: Workspace) -> None:
    print("\n📈 Computing mobility statistics")
    graph, calendar = ws.graph(), ws.calendar()
    transactions = ws.transactions(graph)
    cfg = ws.config
    trips = trips_from_transactions(transactions, cfg.slot_width_min)
    sequences: Dict[str, StateSequence] = {}
    if ws.path(RECOVERED).exists():
        sequences = read_recovered_trips(ws.path(RECOVERED))
    routed = [t.with_route(sequences[t.trip_id].route) if t.trip_id in sequences else t for t in trips]
    with_routes = [t for t in routed if t.route is not None] or assign_short_routes(trips, graph, cfg.max_route_edges)

    trip_speeds: Dict[str, List[float]] = {}
    pairs = []
    speed_map = read_speed_map(ws.path(SPEED_MAP), graph) if ws.path(SPEED_MAP).exists() else None
    for trip in sorted(trips, key=lambda t: (t.entry_time, t.trip_id)):
        seq = sequences.get(trip.trip_id)
        if seq is None or not seq.states:
            continue
        speed = seq.mean_speed_kmh(graph)
        trip_speeds.setdefault(trip.vehicle_id, []).append(speed)
        if speed_map is not None:
            slot = slot_of(trip.entry_time, speed_map.width_min).index
            crowd = float(np.mean([speed_map.median(e, slot) for e in seq.route.edges]))
            pairs.append((trip.vehicle_type.value, speed, crowd))
    limit = float(np.median([graph.edge(e).speed_limit_kmh for e in graph.edge_ids]))

    tables = {
        "stats_trip_lengths.csv": trip_length_histogram(with_routes),
        "stats_route_counts.csv": route_count_histogram(graph, [(t.origin, t.destination) for t in trips],
                                                        cfg.max_route_edges),
        "stats_entropy.csv": entropy_histogram(build_vehicle_history(transactions, cfg.slot_width_min)),
        "stats_context_ndcg.csv": context_ndcg_table(trips, calendar, width_min=cfg.slot_width_min),
        "stats_coverage.csv": coverage_table(with_routes, graph, width_min=cfg.slot_width_min),
        "stats_speed_std.csv": speed_std_table(trip_speeds, limit),
        "stats_speed_correlation.csv": speed_correlation_table(pairs),
    }
    for name, frame in tables.items():
        with open(ws.path(name), "w", encoding="utf-8", newline="") as f:
            f.write(f"# {cfg.header()}\n")
            frame.to_csv(f, index=False, lineterminator="\n", float_format="%.6g")
    print(f"   ✅ Wrote {len(tables)} tables")


COMMANDS = {
    "simulate": "generate a synthetic world, its transactions and ground truth",
    "ingest": "validate transactions into accepted.csv and rejects.csv",
    "speedmap": "estimate the crowd speed map of the training window",
    "recover": "recover routes and speeds of the training window",
    "train": "train destination, route and speed predictors",
    "predict": "predict real-time locations for the test window",
    "evaluate": "run missing stages, then score the predictors against ground truth",
    "stats": "write mobility statistics tables",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Vehicle mobility pipeline over toll transactions")
    parser.add_argument("--workdir", default="work", help="directory holding every artifact (default: work)")
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config value")
    parser.add_argument("--seed", type=int, help="shorthand for --set seed=N")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in COMMANDS.items():
        cmd = sub.add_parser(name, help=text, description=text)
        if name == "simulate":
            cmd.add_argument("--traces", action="store_true", help="also write per-second traces.csv")
            cmd.add_argument("--corrupt", type=float, default=0.0, metavar="RATE",
                             help="share of transaction records to corrupt")
        if name == "predict":
            cmd.add_argument("--feedback", action="store_true", help="feed completed trips back to the predictors")
    return parser


def error_code(exc: BaseException) -> str:
    for kind, code in ERROR_CODES:
        if isinstance(exc, kind):
            return exc.code if code is None else code
    return "error"


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main function"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = parse_overrides(args.set)
        if args.seed is not None:
            overrides["seed"] = str(args.seed)
        config = RunConfig.load(args.config, overrides)
        ws = Workspace(Path(args.workdir), config)
        banner(f"🚀 MOBILITY PIPELINE: {args.command} (config {config.config_hash()}, seed {config.seed})")
        stages = {
            "simulate": lambda: cmd_simulate(ws, args.traces, args.corrupt),
            "ingest": lambda: cmd_ingest(ws),
            "speedmap": lambda: cmd_speedmap(ws),
            "recover": lambda: cmd_recover(ws),
            "train": lambda: cmd_train(ws),
            "predict": lambda: cmd_predict(ws, args.feedback),
            "evaluate": lambda: cmd_evaluate(ws),
            "stats": lambda: cmd_stats(ws),
        }
        stages[args.command]()
    except (MobilityError, OSError) as exc:
        reason = exc.reason if isinstance(exc, PipelineError) else str(exc)
        print(f"error: {error_code(exc)}: {reason}", file=sys.stderr)
        return 2
    banner("✅ PIPELINE COMPLETE")
    return 0


if __name__ == "__main__":
    sys.exit(main())
