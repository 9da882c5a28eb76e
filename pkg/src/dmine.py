"""Decision miner: discover decision rules in an event stream and watch them drift."""

from __future__ import annotations

import argparse
import logging
import sys
import threading
from datetime import datetime
from pathlib import Path
from typing import Optional, Sequence

from config import ADWIN_INPUTS, ConfigError, RunConfig, describe
from control_flow import mine_heuristics_net, write_dot
from monitor_engine import DecisionMiningEngine
from report import summary_lines, write_reports, write_trees
from stream_dfg import snapshot, write_snapshot_json
from stream_ingest import (
    EventQueue,
    EventQueueFull,
    SourceError,
    fill_queue,
    replay,
)
from synthgen import SCENARIOS, Scenario, generate, generate_file

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CONFIG = 2


def _parser() -> argparse.ArgumentParser:
    argparser = argparse.ArgumentParser(
        prog="dmine",
        description="Runtime decision mining with drift detection",
        usage="\n\tdmine run --log log.csv --out reports/"
              "\n\tdmine synth --scenario sd1 --out sd1.csv"
    )
    commands = argparser.add_subparsers(dest="command", required=True)

    run = commands.add_parser(
        "run", help="stream an event log through the decision miner."
    )
    run.add_argument(
        "--log", default="-", metavar="path",
        help="CSV event log; '-' (default) reads standard input."
    )
    run.add_argument(
        "--out", type=Path, default=Path("."), metavar="dir",
        help="directory for the report files."
    )
    run.add_argument(
        "--grace", type=int, default=200, metavar="integer",
        help="completed cases before the first rules are mined."
    )
    run.add_argument(
        "--epsilon", type=float, default=0.001, metavar="float",
        help="error bound of the lossy directly-follows counts."
    )
    run.add_argument(
        "--dep-threshold", type=float, default=0.9, metavar="float",
        help="minimum dependency for an edge of the heuristics net."
    )
    run.add_argument(
        "--net-stride", type=int, default=100, metavar="integer",
        help="events between heuristics net refreshes."
    )
    run.add_argument(
        "--delta", type=float, default=0.002, metavar="float",
        help="confidence parameter of the drift detectors."
    )
    run.add_argument(
        "--adwin-input", choices=ADWIN_INPUTS, default="average",
        help="feed detectors running averages or raw observations."
    )
    run.add_argument(
        "--min-mine", type=int, default=30, metavar="integer",
        help="minimum training instances for a (re)mine."
    )
    run.add_argument(
        "--no-banner", action="store_true",
        help="omit the timestamped header line in rules.txt."
    )
    run.add_argument(
        "--dfg-json", type=Path, metavar="path",
        help="also write the final directly-follows counts as JSON."
    )
    run.add_argument(
        "--net-dot", type=Path, metavar="path",
        help="also write the final heuristics net as Graphviz DOT."
    )
    run.add_argument(
        "--trees-json", type=Path, metavar="path",
        help="also write the current decision tree of every point as JSON."
    )

    synth = commands.add_parser(
        "synth", help="generate a synthetic log with a decision drift."
    )
    synth.add_argument(
        "--scenario", default="sd1", metavar="name",
        help=f"one of {', '.join(SCENARIOS)}."
    )
    synth.add_argument(
        "--seed", type=int, default=42, metavar="integer",
        help="random seed."
    )
    synth.add_argument(
        "--instances", type=int, default=5000, metavar="integer",
        help="number of cases."
    )
    synth.add_argument(
        "--drift-at", type=int, default=None, metavar="integer",
        help="first drifted case (default: half the cases)."
    )
    synth.add_argument(
        "--noise", type=float, default=0.0, metavar="float",
        help="probability of flipping a decision."
    )
    synth.add_argument(
        "--interleave", type=int, default=1, metavar="integer",
        help="number of cases emitting events round-robin."
    )
    synth.add_argument(
        "--out", type=Path, default=None, metavar="path",
        help="log file; the ground truth goes next to it. "
             "Without it the log goes to standard output."
    )
    return argparser


def _config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        grace=args.grace,
        epsilon=args.epsilon,
        dep_threshold=args.dep_threshold,
        net_stride=args.net_stride,
        delta=args.delta,
        adwin_input=args.adwin_input,
        min_mine=args.min_mine,
        out_dir=args.out,
    )


def cmd_run(args: argparse.Namespace) -> int:
    """Stream a log through the engine and write the reports."""
    config = _config(args)
    events = replay(args.log, delimiter=config.delimiter)
    events_queue = EventQueue(config.queue_capacity)
    failure: list[BaseException] = []

    def produce() -> None:
        try:
            fill_queue(events, events_queue)
        except BaseException as err:  # re-raised by the consumer
            LOGGER.error("reading %s failed: %s", args.log, err)
            failure.append(err)

    producer = threading.Thread(target=produce, name="log-reader",
                                daemon=True)
    engine = DecisionMiningEngine(config)
    producer.start()
    report = engine.process_all(events_queue)
    producer.join()
    if failure:
        raise failure[0]

    banner = None
    if not args.no_banner:
        banner = (f"dmine run {datetime.now().isoformat(timespec='seconds')} "
                  f"{describe(config)}")
    assert config.out_dir is not None
    write_reports(report, config.out_dir, banner)

    if args.dfg_json is not None:
        with open(args.dfg_json, "w", encoding="utf-8") as f:
            write_snapshot_json(snapshot(engine.dfg), f)
    if args.net_dot is not None:
        net = mine_heuristics_net(snapshot(engine.dfg), config.dep_threshold)
        with open(args.net_dot, "w", encoding="utf-8") as f:
            write_dot(net, f)
    if args.trees_json is not None:
        with open(args.trees_json, "w", encoding="utf-8") as f:
            write_trees(report, f)

    for line in summary_lines(report):
        print(line)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    """Write a synthetic scenario log and its ground truth."""
    drift_at = args.drift_at
    if drift_at is None:
        drift_at = args.instances // 2
    try:
        scenario = Scenario(args.scenario, n_cases=args.instances,
                            drift_at=drift_at, seed=args.seed,
                            noise=args.noise, interleave=args.interleave)
    except ValueError as err:
        raise ConfigError(str(err)) from err

    if args.out is None:
        generate(scenario, sys.stdout)
    else:
        n, sidecar = generate_file(scenario, args.out)
        print(f"wrote {n} events of {scenario.n_cases} cases to {args.out}; "
              f"ground truth in {sidecar}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run a command; returns the process exit code."""
    logging.basicConfig(
        stream=sys.stderr, level=logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s"
    )
    args = _parser().parse_args(argv)
    command = cmd_run if args.command == "run" else cmd_synth
    try:
        return command(args)
    except ConfigError as err:
        print(f"dmine: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (SourceError, EventQueueFull, OSError) as err:
        print(f"dmine: input error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == '__main__':
    sys.exit(main())
