"""Homogeneous 1-kW, 1-hour assets owned by flexible demands.

Asset ids are 0-based array indices; demand ids are 1-based. Each day an
asset draws its single consumption hour uniformly from 1..24, independently
of every other asset and day.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .market_data import HOURS
from .rng import uniform_hour


class SplitMismatch(ValueError):
    pass


class UnknownDemand(ValueError):
    pass


@dataclass(frozen=True)
class AssetPopulation:
    n_assets: int
    n_demands: int
    owner: np.ndarray  # demand id of each asset
    always_fail: frozenset = field(default_factory=frozenset)

    @property
    def demands(self) -> tuple[int, ...]:
        return tuple(range(1, self.n_demands + 1))

    def sizes(self) -> dict[int, int]:
        counts = np.bincount(self.owner, minlength=self.n_demands + 1)
        return {d: int(counts[d]) for d in self.demands}

    def check_subset(self, subset: Iterable[int]) -> frozenset:
        subset = frozenset(int(d) for d in subset)
        unknown = sorted(d for d in subset if not 1 <= d <= self.n_demands)
        if unknown:
            raise UnknownDemand(f"unknown demand ids {unknown}; population has 1..{self.n_demands}")
        return subset

    def member_mask(self, subset: Iterable[int]) -> np.ndarray:
        """Boolean mask over assets owned by ``subset``."""
        subset = self.check_subset(subset)
        return np.isin(self.owner, sorted(subset))

    def failing_mask(self) -> np.ndarray:
        return np.isin(self.owner, sorted(self.always_fail))

    def prefix(self, n: int) -> "AssetPopulation":
        """The first ``n`` assets, keeping their ids (and hence their draws)."""
        owner = self.owner[:n]
        return AssetPopulation(n, self.n_demands, owner, self.always_fail)


def build_population(
    n_assets: int,
    n_demands: int,
    split: Optional[Sequence[int]] = None,
    always_fail: Iterable[int] = (),
) -> AssetPopulation:
    """Assign assets to demands in id order.

    With ``split=None`` each demand gets ``n_assets // n_demands`` assets and
    the remainder goes one each to the lowest demand ids.
    """
    if n_demands < 1:
        raise ValueError("n_demands must be >= 1")
    if n_assets < 0:
        raise ValueError("n_assets must be >= 0")
    if split is None or split == "uniform":
        base, rem = divmod(n_assets, n_demands)
        split = [base + (1 if d < rem else 0) for d in range(n_demands)]
    split = [int(s) for s in split]
    if len(split) != n_demands or any(s < 0 for s in split) or sum(split) != n_assets:
        raise SplitMismatch(f"split {split} does not partition {n_assets} assets over {n_demands} demands")
    owner = np.repeat(np.arange(1, n_demands + 1), split).astype(np.int64)
    owner.setflags(write=False)
    failing = frozenset(int(d) for d in always_fail)
    bad = sorted(d for d in failing if not 1 <= d <= n_demands)
    if bad:
        raise UnknownDemand(f"always_fail names unknown demands {bad}")
    return AssetPopulation(n_assets, n_demands, owner, failing)


@dataclass(frozen=True)
class ConsumptionDay:
    day: int
    hour_of: np.ndarray  # consumption hour (1..24) per asset id
    population: AssetPopulation

    def load(self) -> np.ndarray:
        """``(n_assets, 24)`` 0/1 load matrix, one row per asset."""
        m = np.zeros((len(self.hour_of), HOURS), dtype=np.int64)
        m[np.arange(len(self.hour_of)), self.hour_of - 1] = 1
        return m


def realize_hours(n_assets: int, days: Sequence[int], seed: int) -> np.ndarray:
    """Consumption hours, shape ``(len(days), n_assets)``."""
    days = np.asarray(days, dtype=np.int64)[:, None]
    assets = np.arange(n_assets, dtype=np.int64)[None, :]
    return uniform_hour(seed, days, assets, HOURS)


def realize_day(population: AssetPopulation, day: int, seed: int) -> ConsumptionDay:
    if day < 1:
        raise ValueError("day must be >= 1")
    hours = realize_hours(population.n_assets, [day], seed)[0]
    hours.setflags(write=False)
    return ConsumptionDay(day, hours, population)


def hourly_counts(hours: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-hour asset counts for each row of an hours matrix.

    ``hours`` has shape ``(days, n_assets)``; returns ``(days, 24)``.
    """
    hours = np.atleast_2d(hours)
    if mask is not None:
        hours = hours[:, mask]
    rows = hours.shape[0]
    flat = (hours - 1) + HOURS * np.arange(rows)[:, None]
    return np.bincount(flat.ravel(), minlength=rows * HOURS).reshape(rows, HOURS)


def aggregate_consumption(cd: ConsumptionDay, subset: Iterable[int]) -> np.ndarray:
    """Total kW drawn by ``subset``'s assets in each hour of the day."""
    mask = cd.population.member_mask(subset)
    return hourly_counts(cd.hour_of[None, :], mask)[0].astype(np.float64)


def export_consumption(cd: ConsumptionDay, dest: Union[str, os.PathLike]) -> None:
    with open(dest, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["asset", "demand", "day", "hour"])
        for asset, (owner, hour) in enumerate(zip(cd.population.owner, cd.hour_of)):
            writer.writerow([asset, int(owner), cd.day, int(hour)])
