"""Synergy of aggregation: coalition profit over the sum of stand-alone asset profits."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .asset_model import build_population, hourly_counts
from .market_data import PriceSeries
from .settlement import HorizonLoads, individual_terms, settle_loads

DEFAULT_WINDOW = 40


@dataclass(frozen=True)
class SynergyPoint:
    n_assets: int
    coalition_profit: float
    sum_individual_profit: float
    ratio: float  # nan when the denominator is zero

    @property
    def defined(self) -> bool:
        return self.sum_individual_profit != 0.0


@dataclass(frozen=True)
class SynergyCurve:
    points: tuple[SynergyPoint, ...]
    rolling_mean: tuple[float, ...]
    window: int

    @property
    def n_assets(self) -> list[int]:
        return [p.n_assets for p in self.points]

    @property
    def ratios(self) -> list[float]:
        return [p.ratio for p in self.points]

    @property
    def undefined(self) -> list[int]:
        """Grid sizes whose stand-alone profits sum to zero."""
        return [p.n_assets for p in self.points if not p.defined]


def _point(n: int, coalition: float, individual: float) -> SynergyPoint:
    ratio = coalition / individual if individual != 0.0 else math.nan
    return SynergyPoint(n, coalition, individual, ratio)


def synergy_at(n_assets: int, prices: PriceSeries, penalty: float, seed: int) -> SynergyPoint:
    if n_assets < 1:
        raise ValueError("n_assets must be >= 1")
    population = build_population(n_assets, 1)
    loads = HorizonLoads(population, prices.horizon, seed)
    coalition = settle_loads(*loads.subset_loads({1}), prices, penalty)
    individual = individual_terms(population, prices, seed, loads).breakdown(penalty)
    return _point(n_assets, coalition.total, individual.total)


def rolling_mean(values: Sequence[float], window: int) -> list[float]:
    """Trailing mean over the last ``min(k, window)`` values, skipping NaNs."""
    if window < 1:
        raise ValueError("window must be >= 1")
    out = []
    for k in range(len(values)):
        tail = np.asarray(values[max(0, k + 1 - window): k + 1], dtype=np.float64)
        tail = tail[~np.isnan(tail)]
        out.append(float(tail.mean()) if tail.size else math.nan)
    return out


def synergy_curve(
    n_grid: Sequence[int],
    prices: PriceSeries,
    penalty: float,
    seed: int,
    window: int = DEFAULT_WINDOW,
    jobs: Optional[int] = None,
) -> SynergyCurve:
    """Synergy ratio at each portfolio size in ``n_grid``.

    Populations are nested: the n-asset portfolio is the first n assets of the
    largest one, so neighbouring points share draws.
    """
    grid = [int(n) for n in n_grid]
    if not grid:
        raise ValueError("n_grid is empty")
    if grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("n_grid must be strictly increasing positive counts")
    population = build_population(grid[-1], 1)
    loads = HorizonLoads(population, prices.horizon, seed)
    terms = individual_terms(population, prices, seed, loads)
    no_failing = np.zeros((prices.horizon, 24))

    def evaluate(n: int) -> SynergyPoint:
        actual = hourly_counts(loads.hours[:, :n]).astype(np.float64)
        coalition = settle_loads(actual, no_failing, prices, penalty)
        individual = terms.breakdown(penalty, slice(0, n))
        return _point(n, coalition.total, individual.total)

    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            points = list(pool.map(evaluate, grid))
    else:
        points = [evaluate(n) for n in grid]
    return SynergyCurve(tuple(points), tuple(rolling_mean([p.ratio for p in points], window)), window)
