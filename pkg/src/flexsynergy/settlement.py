"""Reserve settlement: persistence baseline, capacity bid, delivery and profit.

Profit of a (sub)coalition over one day is

    reservation  = sum_h mfrr[h] * bid[h]
    activation   = sum_h balancing[h] * delivered[h]
    penalty      = sum_h penalty_price * shortfall[h]
    total        = reservation + activation - penalty

where an hour only delivers (or falls short) when the reserve is activated
in it. Settlement starts on day 2; day 1 only provides the first baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from ._exact import exact_dot, exact_dot_rows, exact_sum
from .asset_model import AssetPopulation, hourly_counts, realize_hours
from .market_data import HOURS, ActivationMask, DayPrices, PriceSeries


class NegativeQuantity(ValueError):
    pass


class VectorLengthMismatch(ValueError):
    pass


class HorizonTooShort(ValueError):
    pass


@dataclass(frozen=True)
class ProfitBreakdown:
    reservation: float = 0.0
    activation: float = 0.0
    penalty: float = 0.0
    shortfall: float = 0.0  # undelivered kWh, kept for re-pricing the penalty

    @property
    def total(self) -> float:
        return self.reservation + self.activation - self.penalty

    def __add__(self, other: "ProfitBreakdown") -> "ProfitBreakdown":
        return ProfitBreakdown(
            self.reservation + other.reservation,
            self.activation + other.activation,
            self.penalty + other.penalty,
            self.shortfall + other.shortfall,
        )

    def repriced(self, penalty_price: float) -> "ProfitBreakdown":
        """Same run settled at another penalty price."""
        check_penalty(penalty_price)
        return ProfitBreakdown(
            self.reservation, self.activation, penalty_price * self.shortfall, self.shortfall
        )


@dataclass(frozen=True)
class DailyPosition:
    day: int
    baseline: np.ndarray
    bid: np.ndarray
    actual: np.ndarray
    delivered: np.ndarray
    shortfall: np.ndarray


def check_penalty(penalty: float) -> float:
    penalty = float(penalty)
    if not penalty >= 0.0:
        raise ValueError(f"penalty price must be >= 0, got {penalty}")
    return penalty


def _vector(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (HOURS,):
        raise VectorLengthMismatch(f"{name} must have {HOURS} entries, got shape {v.shape}")
    if np.any(v < 0):
        raise NegativeQuantity(f"{name} has negative entries")
    return v


def persistence_baseline(yesterday) -> np.ndarray:
    """Tomorrow's baseline is today's realized pattern."""
    return _vector(yesterday, "yesterday").copy()


def form_bid(baseline) -> np.ndarray:
    """Bid the full baseline as reserve capacity."""
    return _vector(baseline, "baseline").copy()


def _deliver(bid, actual, failing, active):
    # Failing load is part of actual consumption but cannot be curtailed.
    delivered = np.where(active, np.minimum(bid, actual - failing), 0.0)
    shortfall = np.where(active, bid - delivered, 0.0)
    return delivered, shortfall


def settle_day(
    bid,
    actual,
    failing_kw,
    prices: DayPrices,
    mask: ActivationMask,
    penalty: float,
    baseline=None,
) -> tuple[DailyPosition, ProfitBreakdown]:
    bid = _vector(bid, "bid")
    actual = _vector(actual, "actual")
    failing = _vector(failing_kw, "failing_kw")
    if np.any(failing > actual):
        raise ValueError("failing load exceeds actual consumption")
    penalty = check_penalty(penalty)
    active = np.asarray(mask.active, dtype=bool)
    delivered, shortfall = _deliver(bid, actual, failing, active)
    position = DailyPosition(
        day=mask.day,
        baseline=bid.copy() if baseline is None else _vector(baseline, "baseline"),
        bid=bid,
        actual=actual,
        delivered=delivered,
        shortfall=shortfall,
    )
    breakdown = ProfitBreakdown(
        reservation=exact_dot(prices.mfrr, bid),
        activation=exact_dot(prices.balancing, delivered),
        penalty=exact_dot(np.full(HOURS, penalty), shortfall),
        shortfall=exact_sum(shortfall),
    )
    return position, breakdown


class HorizonLoads:
    """Realized hourly loads per demand over a price horizon.

    Built once per ``(population, horizon, seed)`` and shared by every subset
    settled against it, which is what makes the characteristic function
    well defined.
    """

    def __init__(self, population: AssetPopulation, days: int, seed: int):
        self.population = population
        self.days = days
        self.seed = seed
        self.hours = realize_hours(population.n_assets, np.arange(1, days + 1), seed)
        counts = np.zeros((population.n_demands + 1, days, HOURS), dtype=np.float64)
        for d in population.demands:
            counts[d] = hourly_counts(self.hours, population.owner == d)
        self.counts = counts

    def subset_loads(self, subset: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
        """``(actual, failing)`` kW, each of shape ``(days, 24)``."""
        members = sorted(self.population.check_subset(subset))
        failing = [d for d in members if d in self.population.always_fail]
        actual = self.counts[members].sum(axis=0) if members else np.zeros((self.days, HOURS))
        fail = self.counts[failing].sum(axis=0) if failing else np.zeros((self.days, HOURS))
        return actual, fail


def _horizon_arrays(actual_all, failing_all, prices: PriceSeries):
    if prices.horizon < 2:
        raise HorizonTooShort(f"need at least 2 days of prices, got {prices.horizon}")
    if actual_all.shape != (prices.horizon, HOURS):
        raise ValueError("loads and prices cover different horizons")
    bid = actual_all[:-1]
    actual = actual_all[1:]
    failing = failing_all[1:]
    active = prices.activation_matrix()[1:]
    delivered, shortfall = _deliver(bid, actual, failing, active)
    return bid, delivered, shortfall


def settle_loads(actual_all, failing_all, prices: PriceSeries, penalty: float) -> ProfitBreakdown:
    """Settle days 2..D given ``(D, 24)`` realized and non-curtailable loads."""
    penalty = check_penalty(penalty)
    bid, delivered, shortfall = _horizon_arrays(actual_all, failing_all, prices)
    return ProfitBreakdown(
        reservation=exact_dot(prices.mfrr[1:], bid),
        activation=exact_dot(prices.balancing[1:], delivered),
        penalty=exact_dot(np.full(shortfall.shape, penalty), shortfall),
        shortfall=exact_sum(shortfall),
    )


def settle_horizon(
    population: AssetPopulation,
    subset: Iterable[int],
    prices: PriceSeries,
    penalty: float,
    seed: int,
    loads: Optional[HorizonLoads] = None,
) -> ProfitBreakdown:
    """Profit of ``subset`` summed over days 2..D."""
    if prices.horizon < 2:
        raise HorizonTooShort(f"need at least 2 days of prices, got {prices.horizon}")
    if loads is None:
        loads = HorizonLoads(population, prices.horizon, seed)
    return settle_loads(*loads.subset_loads(subset), prices, penalty)


def horizon_trace(
    population: AssetPopulation,
    subset: Iterable[int],
    prices: PriceSeries,
    penalty: float,
    seed: int,
    loads: Optional[HorizonLoads] = None,
) -> list[tuple[int, ProfitBreakdown]]:
    """Per-day breakdowns for days 2..D."""
    penalty = check_penalty(penalty)
    if prices.horizon < 2:
        raise HorizonTooShort(f"need at least 2 days of prices, got {prices.horizon}")
    if loads is None:
        loads = HorizonLoads(population, prices.horizon, seed)
    bid, delivered, shortfall = _horizon_arrays(*loads.subset_loads(subset), prices)
    res = exact_dot_rows(prices.mfrr[1:], bid)
    act = exact_dot_rows(prices.balancing[1:], delivered)
    pen = exact_dot_rows(np.full(shortfall.shape, penalty), shortfall)
    short = shortfall.sum(axis=1)
    return [
        (day, ProfitBreakdown(r, a, p, float(s)))
        for day, r, a, p, s in zip(range(2, prices.horizon + 1), res, act, pen, short)
    ]


@dataclass(frozen=True)
class IndividualTerms:
    """Per-asset, per-day settlement terms, each of shape ``(n_assets, D - 1)``.

    Every asset bids 1 kW, so each term is a bare price (or zero) and sums
    over any set of assets are exact.
    """

    reservation: np.ndarray
    activation: np.ndarray
    shortfall: np.ndarray

    def breakdown(self, penalty: float, assets=slice(None)) -> ProfitBreakdown:
        """Exact sum of the stand-alone breakdowns of ``assets``."""
        penalty = check_penalty(penalty)
        short = self.shortfall[assets]
        return ProfitBreakdown(
            reservation=exact_sum(self.reservation[assets]),
            activation=exact_sum(self.activation[assets]),
            penalty=exact_dot(np.full(short.shape, penalty), short),
            shortfall=exact_sum(short),
        )


def individual_terms(
    population: AssetPopulation,
    prices: PriceSeries,
    seed: int,
    loads: Optional[HorizonLoads] = None,
) -> IndividualTerms:
    if prices.horizon < 2:
        raise HorizonTooShort(f"need at least 2 days of prices, got {prices.horizon}")
    if loads is None:
        loads = HorizonLoads(population, prices.horizon, seed)
    prev = loads.hours[:-1] - 1
    cur = loads.hours[1:] - 1
    t = np.arange(1, prices.horizon)[:, None]
    active = prices.activation_matrix()[t, prev]
    delivers = active & (prev == cur) & ~population.failing_mask()[None, :]
    return IndividualTerms(
        reservation=np.ascontiguousarray(prices.mfrr[t, prev].T),
        activation=np.ascontiguousarray(np.where(delivers, prices.balancing[t, prev], 0.0).T),
        shortfall=np.ascontiguousarray((active & ~delivers).T.astype(np.float64)),
    )


def settle_individual(
    population: AssetPopulation,
    prices: PriceSeries,
    penalty: float,
    seed: int,
    loads: Optional[HorizonLoads] = None,
) -> dict[int, ProfitBreakdown]:
    """Each asset settled on its own, bidding yesterday's 1-kW hour."""
    terms = individual_terms(population, prices, seed, loads)
    return {i: terms.breakdown(penalty, i) for i in range(population.n_assets)}
