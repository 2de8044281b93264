"""Command-line interface: every engine capability, plot-ready output.

Subcommands: envelope, allocate, curve, fair-sim, experiment.  All output is
data (CSV by default, JSON with --format json); plotting is left to any
external tool.  Exit codes: 0 success, 2 input error, 3 infeasible model,
4 internal invariant breach.  FAIR_ENGINE_THREADS caps the experiment
fan-out (0 or 1 = serial); output bytes do not depend on it.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import fileio
from .allocation import (
    InfeasibleDemandError,
    fair_price_curve,
    greedy_allocation,
    optimal_allocation,
    optimal_demand,
)
from .curves import lower_envelope
from .fair import FairStatus, LifecycleError, SellerLedger, open_fair
from .fileio import ParseError
from .geo import shipping_plan
from .money import frac_str
from .synth import run_experiment

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_INTERNAL = 4


def _add_common(parser: argparse.ArgumentParser, out_help: str) -> None:
    parser.add_argument("--out", help=out_help)
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument(
        "--seed", type=int, default=None, help="seed override (experiment only)"
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fair-engine",
        description="Double-side aggregation engine for fair-based e-commerce.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("envelope", help="lower envelope of seller curves")
    p.add_argument("curves", help="curve CSV file")
    p.add_argument("--q-max", type=int, default=200)
    _add_common(p, "output file (default: stdout)")

    p = sub.add_parser("allocate", help="split a demand across sellers")
    p.add_argument("curves", help="curve CSV file with availabilities")
    p.add_argument("q", type=int, help="demand to allocate")
    p.add_argument("--method", choices=("exact", "greedy"), default="exact")
    _add_common(p, "output file (default: stdout)")

    p = sub.add_parser("curve", help="per-seller price sweep or fair price curve")
    p.add_argument("curves", help="curve CSV file")
    p.add_argument("--q-max", type=int, default=200)
    p.add_argument(
        "--fair",
        action="store_true",
        help="emit the aggregated fair price curve instead of per-seller sweeps",
    )
    p.add_argument("--method", choices=("exact", "greedy"), default="exact")
    _add_common(p, "output file (default: stdout)")

    p = sub.add_parser("fair-sim", help="replay a fair lifecycle scenario")
    p.add_argument("scenario", help="scenario JSON file")
    _add_common(p, "output directory (default: current directory)")

    p = sub.add_parser("experiment", help="seeded availability-sweep experiment")
    p.add_argument("config", help="key = value config file")
    _add_common(p, "output directory (default: current directory)")
    return parser


def _open_out(args):
    if args.out:
        fh = open(args.out, "w", encoding="utf-8", newline="")
        return fh, True
    return sys.stdout, False


def _emit(args, header, rows, comments=()) -> None:
    fh, close = _open_out(args)
    try:
        fileio.write_rows(header, rows, fh, fmt=args.format, comments=comments)
    finally:
        if close:
            fh.close()


def cmd_envelope(args) -> int:
    sellers = fileio.read_sellers_csv(args.curves)
    envelope = lower_envelope([(s.id, s.curve) for s in sellers], args.q_max)
    header, rows = fileio.envelope_rows(envelope)
    _emit(args, header, rows)
    for seg in envelope.segments:
        print(f"segment q={seg.q_from}..{seg.q_to} best={seg.seller_id}")
    return EXIT_OK


def cmd_allocate(args) -> int:
    sellers = fileio.read_sellers_csv(args.curves)
    if args.method == "greedy":
        allocation = greedy_allocation(sellers, args.q)
    else:
        allocation = optimal_allocation(sellers, args.q)
    header, rows = fileio.allocation_rows(allocation)
    _emit(args, header, rows)
    return EXIT_OK


def cmd_curve(args) -> int:
    sellers = fileio.read_sellers_csv(args.curves)
    if args.fair:
        curve = fair_price_curve(sellers, args.q_max, method=args.method)
        header, rows = fileio.fair_curve_rows(curve)
        _emit(args, header, rows)
        best = optimal_demand(curve)
        print(f"optimal q*={best.q_star} z*={frac_str(best.z_star_cents)}")
    else:
        header, rows = fileio.curve_sweep_rows(sellers, args.q_max)
        _emit(args, header, rows)
    return EXIT_OK


def cmd_fair_sim(args) -> int:
    scenario = fileio.read_scenario(args.scenario)
    out_dir = Path(args.out) if args.out else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)

    ledger = SellerLedger(scenario.sellers)
    fair = open_fair(
        scenario.product_id,
        scenario.sellers,
        scenario.config,
        opened_at=scenario.opened_at,
        fair_id=f"fair-{scenario.product_id}",
        ledger=ledger,
    )
    records = [
        {
            "event": "open",
            "at": scenario.opened_at,
            "fair_id": fair.fair_id,
            "product_id": fair.product_id,
            "deadline": fair.deadline,
            "sellers": [s.id for s in fair.sellers],
        }
    ]

    for event in scenario.events:
        if fair.status is not FairStatus.RUNNING:
            break
        if event.action == "join":
            prediction = fair.join(event.order, ledger=ledger, what_if=scenario.what_if)
            records.append(
                {
                    "event": "join",
                    "at": event.at,
                    "fair_id": fair.fair_id,
                    "buyer_id": event.order.buyer_id,
                    "quantity": event.order.quantity,
                    "demand": prediction.demand,
                    "deadline": fair.deadline,
                    "current_price": (
                        frac_str(prediction.current_price_cents)
                        if prediction.current_price_cents is not None
                        else None
                    ),
                    "q_star": prediction.optimal.q_star,
                    "z_star": frac_str(prediction.optimal.z_star_cents),
                    "what_if": [
                        [q, frac_str(z) if z is not None else None]
                        for q, z in prediction.what_if
                    ],
                }
            )
        status = fair.check_end(event.at, ledger=ledger)
        if status is not FairStatus.RUNNING:
            records.append(
                {
                    "event": "end",
                    "at": event.at,
                    "fair_id": fair.fair_id,
                    "status": status.value,
                    "demand": fair.demand,
                }
            )

    if fair.status is FairStatus.RUNNING:
        fair.check_end(fair.deadline, ledger=ledger)
        records.append(
            {
                "event": "end",
                "at": fair.deadline,
                "fair_id": fair.fair_id,
                "status": fair.status.value,
                "demand": fair.demand,
            }
        )

    settlement = fair.settle(ledger=ledger)
    record = fileio.settlement_record(settlement)
    record.update({"event": "settle", "at": settlement.settled_at})
    records.append(record)

    with open(out_dir / "events.jsonl", "w", encoding="utf-8", newline="") as fh:
        fileio.write_event_log(records, fh)
    header, rows = fileio.settlement_buyer_rows(settlement)
    with open(out_dir / "settlement_buyers.csv", "w", encoding="utf-8", newline="") as fh:
        fileio.write_rows(header, rows, fh, fmt=args.format)
    header, rows = fileio.settlement_seller_rows(settlement)
    with open(out_dir / "settlement_sellers.csv", "w", encoding="utf-8", newline="") as fh:
        fileio.write_rows(header, rows, fh, fmt=args.format)

    # shipping plan only when every settled buyer shipped somewhere concrete
    if settlement.allocation is not None and all(
        o.destination is not None for o in fair.orders
    ):
        plan = shipping_plan(
            settlement.allocation,
            list(fair.sellers),
            [(o.buyer_id, o.quantity) for o in fair.orders],
            {o.buyer_id: o.destination for o in fair.orders},
        )
        with open(out_dir / "shipping_plan.csv", "w", encoding="utf-8", newline="") as fh:
            fileio.write_shipping_plan(plan, fh, fmt=args.format)

    print(f"fair {fair.fair_id}: {fair.status.value}, demand {fair.demand}")
    return EXIT_OK


def _thread_cap() -> int:
    raw = os.environ.get("FAIR_ENGINE_THREADS", "0")
    try:
        return max(0, int(raw))
    except ValueError:
        return 0


def cmd_experiment(args) -> int:
    config = fileio.read_experiment_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    out_dir = Path(args.out) if args.out else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)

    spec = config.population()
    threads = _thread_cap()

    def one(availability):
        # failures are per entry: the rest of the list still runs
        try:
            return run_experiment(spec, [availability], config.q_max, config.method)
        except (ValueError, InfeasibleDemandError) as exc:
            return exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(one, config.availabilities))
    else:
        partials = [one(a) for a in config.availabilities]

    keep = []
    for availability, partial in zip(config.availabilities, partials):
        if isinstance(partial, Exception):
            label = "unlimited" if availability is None else availability
            print(f"availability={label} failed: {partial}", file=sys.stderr)
        else:
            keep.append(partial)
    if not keep:
        print("error: every availability entry failed", file=sys.stderr)
        return EXIT_INPUT
    runs = tuple(run for partial in keep for run in partial.runs)
    result = replace(keep[0], runs=runs)

    for run in runs:
        for notice in run.notices:
            print(notice, file=sys.stderr)

    ext = "json" if args.format == "json" else "csv"
    comments = fileio.experiment_comments(config)
    for availability, partial in zip(config.availabilities, partials):
        if isinstance(partial, Exception):
            continue
        label = "unlimited" if availability is None else str(availability)
        header, rows = fileio.experiment_curve_rows(partial)
        name = out_dir / f"experiment_curves_{label}.{ext}"
        with open(name, "w", encoding="utf-8", newline="") as fh:
            fileio.write_rows(header, rows, fh, fmt=args.format, comments=comments)
    header, rows = fileio.experiment_summary_rows(result)
    with open(out_dir / f"experiment_summary.{ext}", "w", encoding="utf-8", newline="") as fh:
        fileio.write_rows(header, rows, fh, fmt=args.format, comments=comments)
    return EXIT_OK


_COMMANDS = {
    "envelope": cmd_envelope,
    "allocate": cmd_allocate,
    "curve": cmd_curve,
    "fair-sim": cmd_fair_sim,
    "experiment": cmd_experiment,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    command = _COMMANDS[args.command]
    try:
        return command(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleDemandError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, OSError, KeyError, TypeError, LifecycleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AssertionError as exc:
        print(f"internal invariant breach: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
