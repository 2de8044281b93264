"""File formats: curve CSV, result CSV/JSON writers, config and scenario files.

Curve input CSV, one seller per row, no header:

    id,linear,p1,rate,sat[,availability[,x,y]]
    id,tabular,thresholds,prices[,availability[,x,y]]

where thresholds/prices are `|`-separated band lists and availability is an
integer, `unlimited`, or empty.  All writers are byte-deterministic: fixed
column order, fixed decimal formatting, no wall-clock anywhere.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, TextIO

from .allocation import Allocation, FairPriceCurve, Seller
from .curves import Envelope, PriceCurve, linear_curve, tabular_curve
from .fair import BuyerOrder, FairConfig, PaymentTiming, Settlement
from .geo import COORDINATE_NOTE, Position, PositionHistory, ShippingPlan
from .money import cu_str, frac_str, ratio, ratio_str
from .synth import RNG_ALGORITHM, ExperimentResult, PopulationSpec

__all__ = [
    "ParseError",
    "read_sellers_csv",
    "parse_seller_rows",
    "read_positions_csv",
    "parse_position_rows",
    "envelope_rows",
    "allocation_rows",
    "fair_curve_rows",
    "curve_sweep_rows",
    "experiment_curve_rows",
    "experiment_summary_rows",
    "shipping_plan_rows",
    "write_shipping_plan",
    "settlement_buyer_rows",
    "settlement_seller_rows",
    "write_rows",
    "rows_to_text",
    "ExperimentConfig",
    "read_experiment_config",
    "Scenario",
    "ScenarioEvent",
    "read_scenario",
    "write_event_log",
]


class ParseError(Exception):
    """Malformed input file; carries the offending line number."""

    def __init__(self, source: str, line: int, message: str):
        self.source = source
        self.line = line
        super().__init__(f"{source}:{line}: {message}")


def _parse_availability(text: str, source: str, line: int) -> int | None:
    text = text.strip().lower()
    if text in ("", "unlimited", "inf"):
        return None
    try:
        value = int(text)
    except ValueError:
        raise ParseError(source, line, f"bad availability {text!r}") from None
    if value < 0:
        raise ParseError(source, line, "availability must be >= 0")
    return value


def parse_seller_rows(rows: Iterable[Sequence[str]], source: str = "<curves>") -> list[Seller]:
    sellers: list[Seller] = []
    seen: set[str] = set()
    n_lines = 0
    for line_no, row in enumerate(rows, start=1):
        n_lines = line_no
        cells = [c.strip() for c in row]
        if not cells or all(c == "" for c in cells):
            continue
        if cells[0].startswith("#"):
            continue
        if len(cells) < 2:
            raise ParseError(source, line_no, "expected at least `id,form`")
        seller_id, form = cells[0], cells[1].lower()
        if seller_id in seen:
            raise ParseError(source, line_no, f"duplicate seller id {seller_id!r}")
        seen.add(seller_id)
        try:
            if form == "linear":
                if len(cells) < 5:
                    raise ValueError("linear rows need p1, rate, sat")
                curve: PriceCurve = linear_curve(cells[2], cells[3], cells[4])
                rest = cells[5:]
            elif form == "tabular":
                if len(cells) < 4:
                    raise ValueError("tabular rows need thresholds and prices")
                thresholds = [int(t) for t in cells[2].split("|") if t != ""]
                prices = [p for p in cells[3].split("|") if p != ""]
                if len(thresholds) != len(prices):
                    raise ValueError("thresholds and prices differ in length")
                curve = tabular_curve(zip(thresholds, prices))
                rest = cells[4:]
            else:
                raise ValueError(f"unknown curve form {form!r}")
            availability = (
                _parse_availability(rest[0], source, line_no) if rest else None
            )
            position = Position(0.0, 0.0)
            if len(rest) >= 3 and rest[1] != "" and rest[2] != "":
                position = Position(float(rest[1]), float(rest[2]))
        except ParseError:
            raise
        except (ValueError, ArithmeticError) as exc:
            raise ParseError(source, line_no, str(exc)) from None
        sellers.append(
            Seller(id=seller_id, curve=curve, availability=availability, position=position)
        )
    if not sellers:
        raise ParseError(source, max(n_lines, 1), "no seller rows found")
    return sellers


def read_sellers_csv(path: str) -> list[Seller]:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_seller_rows(csv.reader(fh), source=path)


def parse_position_rows(
    rows: Iterable[Sequence[str]], source: str = "<positions>"
) -> list[PositionHistory]:
    """Parse `buyer_id,x,y,timestamp` visit rows into per-buyer histories."""
    visits: dict[str, list[tuple[Position, float]]] = {}
    for line_no, row in enumerate(rows, start=1):
        cells = [c.strip() for c in row]
        if not cells or all(c == "" for c in cells) or cells[0].startswith("#"):
            continue
        if len(cells) < 4:
            raise ParseError(source, line_no, "expected `buyer_id,x,y,timestamp`")
        try:
            position = Position(float(cells[1]), float(cells[2]))
            timestamp = float(cells[3])
        except ValueError as exc:
            raise ParseError(source, line_no, str(exc)) from None
        visits.setdefault(cells[0], []).append((position, timestamp))
    histories = []
    for buyer_id in sorted(visits):
        trail = sorted(visits[buyer_id], key=lambda pair: pair[1])
        histories.append(PositionHistory(buyer_id=buyer_id, visits=tuple(trail)))
    return histories


def read_positions_csv(path: str) -> list[PositionHistory]:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_position_rows(csv.reader(fh), source=path)


# ---------------------------------------------------------------- writers

Row = list


def envelope_rows(envelope: Envelope) -> tuple[list[str], list[Row]]:
    header = ["q", "seller_id", "price"]
    rows = [[p.q, p.seller_id, cu_str(p.price_cents)] for p in envelope.points]
    return header, rows


def allocation_rows(allocation: Allocation) -> tuple[list[str], list[Row]]:
    header = ["q", "seller_id", "q_sigma", "unit_price_sigma", "fair_unit_price"]
    fair_price = frac_str(allocation.fair_unit_price_cents)
    rows = [
        [allocation.total_quantity, e.seller_id, e.quantity, cu_str(e.unit_price_cents), fair_price]
        for e in allocation.entries
    ]
    return header, rows


def fair_curve_rows(curve: FairPriceCurve) -> tuple[list[str], list[Row]]:
    header = ["q", "z", "alloc_summary"]
    rows = [
        [p.q, frac_str(p.price_cents), p.allocation.summary()] for p in curve.points
    ]
    return header, rows


def curve_sweep_rows(
    sellers: Sequence[Seller], q_max: int
) -> tuple[list[str], list[Row]]:
    header = ["seller_id", "q", "price"]
    rows = []
    for seller in sorted(sellers, key=lambda s: s.id):
        for q in range(1, q_max + 1):
            rows.append([seller.id, q, cu_str(seller.curve.price_at(q))])
    return header, rows


def _availability_str(availability: int | None) -> str:
    return "unlimited" if availability is None else str(availability)


def experiment_curve_rows(result: ExperimentResult) -> tuple[list[str], list[Row]]:
    header = ["availability", "q", "z_exact", "z_greedy", "best_allocation"]
    rows = []
    for run in result.runs:
        avail = _availability_str(run.availability)
        for pe, pg in zip(run.curve_exact.points, run.curve_greedy.points):
            rows.append(
                [
                    avail,
                    pe.q,
                    frac_str(pe.price_cents),
                    frac_str(pg.price_cents),
                    pe.allocation.summary(),
                ]
            )
    return header, rows


def experiment_summary_rows(result: ExperimentResult) -> tuple[list[str], list[Row]]:
    header = ["availability", "q_star", "z_star", "nonmonotone", "max_greedy_gap"]
    rows = []
    for run in result.runs:
        rows.append(
            [
                _availability_str(run.availability),
                run.optimal.q_star,
                frac_str(run.optimal.z_star_cents),
                int(run.nonmonotone),
                ratio_str(run.max_greedy_gap),
            ]
        )
    return header, rows


def shipping_plan_rows(plan: ShippingPlan) -> tuple[list[str], list[Row]]:
    header = ["seller_id", "dest_x", "dest_y", "parcels", "km", "cost"]
    rows = [
        [
            r.seller_id,
            f"{r.destination.x:.3f}",
            f"{r.destination.y:.3f}",
            r.parcels,
            f"{r.distance_km:.3f}",
            cu_str(r.cost_cents),
        ]
        for r in plan.routes
    ]
    return header, rows


def write_shipping_plan(plan: ShippingPlan, fh: TextIO, fmt: str = "csv") -> None:
    header, rows = shipping_plan_rows(plan)
    comments = [COORDINATE_NOTE, f"total_cost={cu_str(plan.total_cost_cents)}"]
    write_rows(header, rows, fh, fmt=fmt, comments=comments)


def settlement_buyer_rows(settlement: Settlement) -> tuple[list[str], list[Row]]:
    header = ["buyer_id", "q", "unit_price", "total"]
    rows = [
        [c.buyer_id, c.quantity, frac_str(c.unit_price_cents), frac_str(c.total_cents)]
        for c in settlement.buyer_charges
    ]
    return header, rows


def settlement_seller_rows(settlement: Settlement) -> tuple[list[str], list[Row]]:
    header = ["seller_id", "q", "unit_price", "payment"]
    rows = [
        [p.seller_id, p.quantity, cu_str(p.unit_price_cents), cu_str(p.payment_cents)]
        for p in settlement.seller_payments
    ]
    return header, rows


def write_rows(
    header: list[str],
    rows: list[Row],
    fh: TextIO,
    fmt: str = "csv",
    comments: Sequence[str] = (),
) -> None:
    """Emit rows as CSV (with `#` comment lines) or as a JSON array."""
    if fmt == "csv":
        for comment in comments:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    elif fmt == "json":
        payload = {
            "comments": list(comments),
            "rows": [dict(zip(header, row)) for row in rows],
        }
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    else:
        raise ValueError(f"unknown output format {fmt!r}")


def rows_to_text(header, rows, fmt="csv", comments=()) -> str:
    buf = io.StringIO()
    write_rows(header, rows, buf, fmt=fmt, comments=comments)
    return buf.getvalue()


# ----------------------------------------------------- experiment config

@dataclass(frozen=True)
class ExperimentConfig:
    n_sellers: int = 20
    seed: int = 0
    availabilities: tuple[int | None, ...] = (None,)
    q_max: int = 200
    method: str = "exact"

    def population(self) -> PopulationSpec:
        return PopulationSpec(n_sellers=self.n_sellers, seed=self.seed)


def read_experiment_config(path: str) -> ExperimentConfig:
    """Parse a `key = value` config file (# comments allowed)."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(path, line_no, "expected `key = value`")
            key, _, value = line.partition("=")
            values[key.strip().lower()] = value.strip()

    known = {"n_sellers", "seed", "availabilities", "q_max", "method"}
    unknown = set(values) - known
    if unknown:
        raise ParseError(path, 1, f"unknown config keys: {sorted(unknown)}")
    try:
        availabilities: tuple[int | None, ...] = (None,)
        if "availabilities" in values:
            parsed: list[int | None] = []
            for chunk in values["availabilities"].split(","):
                chunk = chunk.strip().lower()
                parsed.append(None if chunk in ("unlimited", "inf") else int(chunk))
            availabilities = tuple(parsed)
        config = ExperimentConfig(
            n_sellers=int(values.get("n_sellers", 20)),
            seed=int(values.get("seed", 0)),
            availabilities=availabilities,
            q_max=int(values.get("q_max", 200)),
            method=values.get("method", "exact"),
        )
    except ValueError as exc:
        raise ParseError(path, 1, str(exc)) from None
    if config.method not in ("exact", "greedy"):
        raise ParseError(path, 1, f"method must be exact or greedy, got {config.method!r}")
    return config


def experiment_comments(config: ExperimentConfig) -> list[str]:
    return [
        f"rng={RNG_ALGORITHM} seed={config.seed} n_sellers={config.n_sellers} "
        f"q_max={config.q_max} method={config.method}"
    ]


# ------------------------------------------------------------- scenarios

@dataclass(frozen=True)
class ScenarioEvent:
    at: float
    action: str  # "join" or "advance"
    order: BuyerOrder | None = None
    destination: Position | None = None


@dataclass(frozen=True)
class Scenario:
    product_id: str
    sellers: tuple[Seller, ...]
    config: FairConfig
    opened_at: float
    events: tuple[ScenarioEvent, ...]
    what_if: tuple[int, ...] = ()


def _scenario_error(path: str, msg: str) -> ParseError:
    return ParseError(path, 1, msg)


def read_scenario(path: str) -> Scenario:
    """Parse a fair-simulation scenario (JSON).

    Schema: product_id, sellers (curve-row objects), optional config
    (max_duration, margin, fidelity_discount, curve_horizon), opened_at,
    events: list of {at, action} where action is `join` (buyer_id,
    quantity, max_wait, optional payment_timing/fidelity/history/
    destination) or `advance` (clock tick that re-checks end conditions).
    """
    from .fair import BuyerHistory, fidelity_score

    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(path, exc.lineno, f"invalid JSON: {exc.msg}") from None

    if not isinstance(data, dict):
        raise _scenario_error(path, "scenario must be a JSON object")
    try:
        product_id = data["product_id"]
        seller_rows = data["sellers"]
        raw_events = data.get("events", [])
    except KeyError as exc:
        raise _scenario_error(path, f"missing key {exc.args[0]!r}") from None

    sellers = []
    for i, row in enumerate(seller_rows):
        if isinstance(row, dict):
            cells = [str(row.get("id", ""))]
            form = str(row.get("form", "linear")).lower()
            cells.append(form)
            if form == "linear":
                cells += [str(row.get("p1", "")), str(row.get("rate", "")), str(row.get("sat", ""))]
            else:
                cells += [str(row.get("thresholds", "")), str(row.get("prices", ""))]
            avail = row.get("availability", "unlimited")
            cells.append(str(avail))
            cells += [str(row.get("x", 0.0)), str(row.get("y", 0.0))]
            sellers.extend(parse_seller_rows([cells], source=f"{path}#sellers[{i}]"))
        else:
            raise _scenario_error(path, f"sellers[{i}] must be an object")

    cfg_raw = data.get("config", {})
    if not isinstance(cfg_raw, dict):
        raise _scenario_error(path, "config must be an object")
    try:
        config = FairConfig(
            max_duration=float(cfg_raw.get("max_duration", FairConfig.max_duration)),
            margin=ratio(str(cfg_raw.get("margin", "0.05"))),
            fidelity_discount=ratio(str(cfg_raw.get("fidelity_discount", "0.04"))),
            curve_horizon=int(cfg_raw.get("curve_horizon", FairConfig.curve_horizon)),
        )
        opened_at = float(data.get("opened_at", 0.0))
    except (TypeError, ValueError) as exc:
        raise _scenario_error(path, str(exc)) from None

    events: list[ScenarioEvent] = []
    last_at = opened_at
    for i, raw in enumerate(raw_events):
        if not isinstance(raw, dict) or "at" not in raw or "action" not in raw:
            raise _scenario_error(path, f"events[{i}] needs `at` and `action`")
        try:
            at = float(raw["at"])
        except (TypeError, ValueError):
            raise _scenario_error(path, f"events[{i}]: bad timestamp") from None
        if at < last_at:
            raise _scenario_error(path, f"events[{i}]: timestamps must not decrease")
        last_at = at
        action = raw["action"]
        if action == "advance":
            events.append(ScenarioEvent(at=at, action="advance"))
        elif action == "join":
            try:
                timing = PaymentTiming(str(raw.get("payment_timing", "after")))
                if "history" in raw:
                    hist = raw["history"]
                    fidelity = fidelity_score(
                        BuyerHistory(
                            purchases=int(hist.get("purchases", 0)),
                            payment_timing=PaymentTiming(
                                str(hist.get("payment_timing", "after"))
                            ),
                            social_actions=int(hist.get("social_actions", 0)),
                            join_earliness=float(hist.get("join_earliness", 0.0)),
                        )
                    )
                else:
                    fidelity = ratio(str(raw.get("fidelity", 0)))
                dest = None
                if "destination" in raw:
                    dx, dy = raw["destination"]
                    dest = Position(float(dx), float(dy))
                order = BuyerOrder(
                    buyer_id=str(raw["buyer_id"]),
                    quantity=int(raw["quantity"]),
                    max_wait=float(raw["max_wait"]),
                    join_time=at,
                    payment_timing=timing,
                    destination=dest,
                    fidelity=fidelity,
                )
            except KeyError as exc:
                raise _scenario_error(
                    path, f"events[{i}]: missing key {exc.args[0]!r}"
                ) from None
            except (TypeError, ValueError) as exc:
                raise _scenario_error(path, f"events[{i}]: {exc}") from None
            events.append(ScenarioEvent(at=at, action="join", order=order))
        else:
            raise _scenario_error(path, f"events[{i}]: unknown action {action!r}")

    what_if = tuple(int(q) for q in data.get("what_if", []))
    return Scenario(
        product_id=str(product_id),
        sellers=tuple(sellers),
        config=config,
        opened_at=opened_at,
        events=tuple(events),
        what_if=what_if,
    )


# ------------------------------------------------------------ event log

def _json_safe(value):
    if isinstance(value, Fraction):
        return frac_str(value)
    if isinstance(value, Position):
        return [value.x, value.y]
    return value


def write_event_log(records: Iterable[dict], fh: TextIO) -> None:
    """One JSON object per line, keys sorted, values render deterministically."""
    for record in records:
        fh.write(json.dumps(record, sort_keys=True, default=_json_safe))
        fh.write("\n")


def settlement_record(settlement: Settlement) -> dict:
    return {
        "fair_id": settlement.fair_id,
        "allocation": settlement.allocation.summary() if settlement.allocation else "",
        "buyers": [
            {
                "buyer_id": c.buyer_id,
                "q": c.quantity,
                "unit_price": frac_str(c.unit_price_cents),
                "total": frac_str(c.total_cents),
            }
            for c in settlement.buyer_charges
        ],
        "sellers": [
            {
                "seller_id": p.seller_id,
                "q": p.quantity,
                "unit_price": cu_str(p.unit_price_cents),
                "payment": cu_str(p.payment_cents),
            }
            for p in settlement.seller_payments
        ],
        "buyers_total": frac_str(settlement.buyers_total_cents),
        "sellers_total": cu_str(settlement.sellers_total_cents),
        "manager_revenue": frac_str(settlement.manager_revenue_cents),
        "settled_at": settlement.settled_at,
    }
