"""Fair lifecycle: opening, buyer joins, price prediction, ending, settlement.

A fair gathers buyer demand for one product against a fixed seller set.  It
runs until either its deadline passes or the aggregated demand reaches the
optimal point of the fair price curve, then settles: the exact allocator
decides what each seller supplies, sellers are paid their own curve price on
their own volume, and buyers share the (margin-inflated) cost with a
fidelity discount that is renormalized so the grand total is preserved
exactly.  Time is injected logical time (plain numbers), never the wall
clock, so every run is reproducible.

Cross-fair stock safety lives in the SellerLedger: committing a settlement
is an atomic check-and-commit, so concurrent fairs can never oversell a
seller.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence

from .allocation import (
    Allocation,
    InfeasibleDemandError,
    OptimalPoint,
    Seller,
    fair_price_curve,
    optimal_allocation,
    optimal_demand,
)
from .geo import Position
from .money import Cents, ratio

__all__ = [
    "PaymentTiming",
    "BuyerHistory",
    "BuyerOrder",
    "FairConfig",
    "FairStatus",
    "Fair",
    "PricePrediction",
    "BuyerCharge",
    "SellerPayment",
    "Settlement",
    "SellerLedger",
    "LifecycleError",
    "LedgerCapacityError",
    "open_fair",
    "fidelity_score",
    "join_earliness",
]

_fair_counter = itertools.count(1)


class LifecycleError(Exception):
    """An operation was applied to a fair in the wrong state."""


class LedgerCapacityError(InfeasibleDemandError):
    """A settlement tried to commit more stock than a seller has left."""

    def __init__(self, seller_id: str, requested: int, available: int):
        super().__init__(requested, available)
        self.seller_id = seller_id
        self.args = (
            f"seller {seller_id}: requested {requested} exceeds remaining "
            f"availability {available} (short by {requested - available})",
        )


class PaymentTiming(Enum):
    BEFORE = "before"
    ON_DELIVERY = "on_delivery"
    AFTER = "after"

    @property
    def earliness(self) -> Fraction:
        """Paying earlier scores higher: before 1, on delivery 1/2, after 0."""
        return _PAYMENT_EARLINESS[self]


_PAYMENT_EARLINESS = {
    PaymentTiming.BEFORE: Fraction(1),
    PaymentTiming.ON_DELIVERY: Fraction(1, 2),
    PaymentTiming.AFTER: Fraction(0),
}


@dataclass(frozen=True)
class BuyerHistory:
    """Past behaviour feeding the fidelity score."""

    purchases: int = 0
    payment_timing: PaymentTiming = PaymentTiming.AFTER
    social_actions: int = 0
    join_earliness: float = 0.0

    def __post_init__(self) -> None:
        if self.purchases < 0 or self.social_actions < 0:
            raise ValueError("history counts must be non-negative")
        if not 0 <= self.join_earliness <= 1:
            raise ValueError("join earliness must be in [0, 1]")


def fidelity_score(history: BuyerHistory | None) -> Fraction:
    """Buyer fidelity in [0, 1] from purchases, payment/join earliness, social actions.

    0.4 * min(purchases, 20)/20 + 0.2 * payment earliness
    + 0.2 * min(social actions, 50)/50 + 0.2 * join earliness.
    Missing history scores 0.
    """
    if history is None:
        return Fraction(0)
    purchases = Fraction(min(history.purchases, 20), 20)
    social = Fraction(min(history.social_actions, 50), 50)
    join = ratio(history.join_earliness)
    return (
        Fraction(2, 5) * purchases
        + Fraction(1, 5) * history.payment_timing.earliness
        + Fraction(1, 5) * social
        + Fraction(1, 5) * join
    )


def join_earliness(join_time: float, opened_at: float, deadline: float) -> float:
    """1 at opening, 0 at the deadline, linear in between, clamped to [0, 1]."""
    if deadline <= opened_at:
        return 0.0
    frac = 1.0 - (join_time - opened_at) / (deadline - opened_at)
    return min(1.0, max(0.0, frac))


@dataclass(frozen=True)
class BuyerOrder:
    """One buyer's stake in a fair."""

    buyer_id: str
    quantity: int
    max_wait: float  # longest the buyer will wait past join_time, seconds
    join_time: float
    payment_timing: PaymentTiming = PaymentTiming.AFTER
    destination: Position | None = None
    pickup_ref: str | None = None
    fidelity: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        if self.quantity < 1:
            raise ValueError("order quantity must be at least 1")
        if self.max_wait <= 0:
            raise ValueError("max wait must be positive")
        fid = ratio(self.fidelity)
        if not 0 <= fid <= 1:
            raise ValueError("fidelity must be in [0, 1]")
        object.__setattr__(self, "fidelity", fid)


@dataclass(frozen=True)
class FairConfig:
    max_duration: float = 7 * 24 * 3600.0
    margin: Fraction = Fraction(1, 20)  # 0.05
    fidelity_discount: Fraction = Fraction(1, 25)  # 0.04
    curve_horizon: int = 200

    def __post_init__(self) -> None:
        if self.max_duration <= 0:
            raise ValueError("max duration must be positive")
        margin = ratio(self.margin)
        discount = ratio(self.fidelity_discount)
        if margin < 0:
            raise ValueError("margin must be non-negative")
        if not 0 <= discount < 1:
            raise ValueError("fidelity discount must be in [0, 1)")
        if self.curve_horizon < 1:
            raise ValueError("curve horizon must be at least 1")
        object.__setattr__(self, "margin", margin)
        object.__setattr__(self, "fidelity_discount", discount)


class FairStatus(Enum):
    RUNNING = "running"
    ENDED_BY_TIME = "ended_by_time"
    ENDED_BY_OPTIMAL_PRICE = "ended_by_optimal_price"
    SETTLED = "settled"


_ENDED = (FairStatus.ENDED_BY_TIME, FairStatus.ENDED_BY_OPTIMAL_PRICE)


@dataclass(frozen=True)
class PricePrediction:
    """What the fair price looks like now and where it is headed."""

    demand: int
    current_price_cents: Fraction | None
    optimal: OptimalPoint
    what_if: tuple[tuple[int, Fraction | None], ...] = ()


@dataclass(frozen=True)
class BuyerCharge:
    buyer_id: str
    quantity: int
    unit_price_cents: Fraction
    total_cents: Fraction


@dataclass(frozen=True)
class SellerPayment:
    seller_id: str
    quantity: int
    unit_price_cents: Cents
    payment_cents: Cents


@dataclass(frozen=True)
class Settlement:
    """Final money flows of one fair; buyer totals cover seller payments.

    buyers_total == (1 + margin) * sellers_total exactly, so the manager
    revenue (the difference) is margin * cost and never negative.
    """

    fair_id: str
    allocation: Allocation | None
    buyer_charges: tuple[BuyerCharge, ...]
    seller_payments: tuple[SellerPayment, ...]
    buyers_total_cents: Fraction
    sellers_total_cents: Cents
    manager_revenue_cents: Fraction
    settled_at: float


class SellerLedger:
    """Cross-fair stock accounting: committed never exceeds availability.

    `commit` is an atomic check-and-commit under one lock; a failed commit
    leaves the ledger untouched.
    """

    def __init__(self, sellers: Iterable[Seller] = ()):
        self._lock = threading.Lock()
        self._capacity: dict[str, int | None] = {}
        self._committed: dict[str, int] = {}
        for seller in sellers:
            self.register(seller)

    def register(self, seller: Seller) -> None:
        with self._lock:
            if seller.id in self._capacity:
                if self._capacity[seller.id] != seller.availability:
                    raise ValueError(
                        f"seller {seller.id} already registered with different stock"
                    )
                return
            self._capacity[seller.id] = seller.availability
            self._committed[seller.id] = 0

    def committed(self, seller_id: str) -> int:
        return self._committed.get(seller_id, 0)

    def available(self, seller_id: str) -> int | None:
        cap = self._capacity.get(seller_id)
        if cap is None:
            return None
        return cap - self._committed.get(seller_id, 0)

    def effective_sellers(self, sellers: Sequence[Seller]) -> list[Seller]:
        """The seller set with availabilities reduced by prior commitments."""
        out = []
        for seller in sellers:
            if seller.id not in self._capacity:
                self.register(seller)
            remaining = self.available(seller.id)
            out.append(replace(seller, availability=remaining))
        return out

    def commit(self, allocation: Allocation) -> None:
        with self._lock:
            for entry in allocation.entries:
                cap = self._capacity.get(entry.seller_id)
                if cap is None and entry.seller_id not in self._capacity:
                    raise ValueError(f"seller {entry.seller_id} not in ledger")
                if cap is not None:
                    remaining = cap - self._committed[entry.seller_id]
                    if entry.quantity > remaining:
                        raise LedgerCapacityError(
                            entry.seller_id, entry.quantity, remaining
                        )
            for entry in allocation.entries:
                self._committed[entry.seller_id] += entry.quantity


@dataclass
class Fair:
    """Mutable lifecycle state for one product's demand aggregation.

    Single-writer: callers serialize mutations per fair.  Status only moves
    forward (running -> ended -> settled).
    """

    fair_id: str
    product_id: str
    sellers: tuple[Seller, ...]
    config: FairConfig
    opened_at: float
    deadline: float
    orders: list[BuyerOrder] = field(default_factory=list)
    status: FairStatus = FairStatus.RUNNING
    settlement: Settlement | None = None

    @property
    def demand(self) -> int:
        return sum(order.quantity for order in self.orders)

    def _effective_sellers(self, ledger: SellerLedger | None) -> list[Seller]:
        if ledger is None:
            return list(self.sellers)
        return ledger.effective_sellers(self.sellers)

    def _curve(self, ledger: SellerLedger | None, at_least: int = 0):
        horizon = max(self.config.curve_horizon, at_least)
        return fair_price_curve(self._effective_sellers(ledger), horizon)

    def predict(
        self,
        what_if: Sequence[int] = (),
        ledger: SellerLedger | None = None,
    ) -> PricePrediction:
        """Current fair price, the optimal point, and what-if demand prices."""
        if self.status is not FairStatus.RUNNING:
            raise LifecycleError(f"fair {self.fair_id} is not running")
        demand = self.demand
        curve = self._curve(ledger, at_least=demand)
        if not curve.points:
            raise InfeasibleDemandError(max(demand, 1), 0)
        optimal = optimal_demand(curve)
        current = curve.price_at(demand) if 1 <= demand <= len(curve.points) else None
        probes = tuple(
            (q, curve.price_at(q) if 1 <= q <= len(curve.points) else None)
            for q in what_if
        )
        return PricePrediction(
            demand=demand, current_price_cents=current, optimal=optimal, what_if=probes
        )

    def join(
        self,
        order: BuyerOrder,
        ledger: SellerLedger | None = None,
        what_if: Sequence[int] = (),
    ) -> PricePrediction:
        """Add a buyer order; the deadline can only move earlier.

        The join is rejected when the fair is past its deadline or the new
        aggregate demand exceeds what the sellers can still supply.
        """
        if self.status is not FairStatus.RUNNING:
            raise LifecycleError(f"fair {self.fair_id} is not running")
        if order.join_time >= self.deadline:
            raise LifecycleError(
                f"fair {self.fair_id} closes at {self.deadline}; "
                f"join at {order.join_time} is too late"
            )
        if any(o.buyer_id == order.buyer_id for o in self.orders):
            raise ValueError(f"buyer {order.buyer_id} already joined {self.fair_id}")

        new_demand = self.demand + order.quantity
        supply = _supply_limit(self._effective_sellers(ledger))
        if supply is not None and new_demand > supply:
            raise InfeasibleDemandError(new_demand, supply)

        self.orders.append(order)
        self.deadline = min(self.deadline, order.join_time + order.max_wait)
        return self.predict(what_if=what_if, ledger=ledger)

    def check_end(
        self, now: float, ledger: SellerLedger | None = None
    ) -> FairStatus:
        """Advance the status when an end condition holds; never backward.

        Ends by time when `now` reaches the deadline (inclusive); ends by
        optimal price when the aggregated demand has reached the optimal
        point and the current price equals the optimal price exactly.
        """
        if self.status is not FairStatus.RUNNING:
            return self.status
        if now >= self.deadline:
            self.status = FairStatus.ENDED_BY_TIME
            return self.status
        demand = self.demand
        if demand >= 1:
            curve = self._curve(ledger, at_least=demand)
            if curve.points and demand <= len(curve.points):
                optimal = optimal_demand(curve)
                if demand >= optimal.q_star and (
                    curve.price_at(demand) == optimal.z_star_cents
                ):
                    self.status = FairStatus.ENDED_BY_OPTIMAL_PRICE
        return self.status

    def settle(
        self, ledger: SellerLedger | None = None, settled_at: float | None = None
    ) -> Settlement:
        """Allocate, pay sellers, and share the cost among buyers.

        Buyer unit prices start from (1 + margin) * cost / demand and are
        tilted by each buyer's fidelity, then renormalized so the grand
        total is exactly (1 + margin) * cost: higher fidelity pays less,
        the manager revenue stays margin * cost.
        """
        if self.status is FairStatus.SETTLED:
            raise LifecycleError(f"fair {self.fair_id} is already settled")
        if self.status not in _ENDED:
            raise LifecycleError(
                f"fair {self.fair_id} must end before settlement "
                f"(status {self.status.value})"
            )
        when = self.deadline if settled_at is None else settled_at
        demand = self.demand
        if demand == 0:
            settlement = Settlement(
                fair_id=self.fair_id,
                allocation=None,
                buyer_charges=(),
                seller_payments=(),
                buyers_total_cents=Fraction(0),
                sellers_total_cents=0,
                manager_revenue_cents=Fraction(0),
                settled_at=when,
            )
            self.status = FairStatus.SETTLED
            self.settlement = settlement
            return settlement

        effective = self._effective_sellers(ledger)
        allocation = optimal_allocation(effective, demand)
        if ledger is not None:
            ledger.commit(allocation)

        cost = allocation.total_cost_cents
        margin = self.config.margin
        discount = self.config.fidelity_discount
        base = (1 + margin) * Fraction(cost, demand)
        weights = [(order, 1 - discount * order.fidelity) for order in self.orders]
        norm = Fraction(
            sum(order.quantity * w for order, w in weights), demand
        )
        charges = []
        for order, w in weights:
            unit = base * w / norm
            charges.append(
                BuyerCharge(
                    buyer_id=order.buyer_id,
                    quantity=order.quantity,
                    unit_price_cents=unit,
                    total_cents=unit * order.quantity,
                )
            )
        payments = tuple(
            SellerPayment(
                seller_id=entry.seller_id,
                quantity=entry.quantity,
                unit_price_cents=entry.unit_price_cents,
                payment_cents=entry.cost_cents,
            )
            for entry in allocation.entries
        )
        buyers_total = sum((c.total_cents for c in charges), Fraction(0))
        settlement = Settlement(
            fair_id=self.fair_id,
            allocation=allocation,
            buyer_charges=tuple(charges),
            seller_payments=payments,
            buyers_total_cents=buyers_total,
            sellers_total_cents=cost,
            manager_revenue_cents=buyers_total - cost,
            settled_at=when,
        )
        self.status = FairStatus.SETTLED
        self.settlement = settlement
        return settlement


def _supply_limit(sellers: Sequence[Seller]) -> int | None:
    total = 0
    for seller in sellers:
        if seller.availability is None:
            return None
        total += seller.availability
    return total


def open_fair(
    product_id: str,
    sellers: Sequence[Seller],
    config: FairConfig | None = None,
    opened_at: float = 0.0,
    fair_id: str | None = None,
    ledger: SellerLedger | None = None,
) -> Fair:
    """Open a running fair with an empty order book.

    Rejected when no seller can supply the product (empty seller set, or
    every unit of stock already committed elsewhere).
    """
    cfg = config or FairConfig()
    if not sellers:
        raise ValueError(f"no sellers can supply product {product_id}")
    effective = sellers if ledger is None else ledger.effective_sellers(sellers)
    supply = _supply_limit(effective)
    if supply is not None and supply < 1:
        raise ValueError(f"no remaining stock for product {product_id}")
    return Fair(
        fair_id=fair_id or f"fair-{next(_fair_counter):04d}",
        product_id=product_id,
        sellers=tuple(sellers),
        config=cfg,
        opened_at=opened_at,
        deadline=opened_at + cfg.max_duration,
    )
