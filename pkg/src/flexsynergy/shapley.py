"""Shapley payments for a coalition of flexible demands.

Subsets of demands are encoded as bitmasks: demand ``d`` (1-based) is bit
``d - 1``. The characteristic function of a subset is its settled horizon
profit with every demand's assets behaving identically in every subset.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .asset_model import AssetPopulation, UnknownDemand
from .market_data import PriceSeries
from .settlement import HorizonLoads, ProfitBreakdown, check_penalty, settle_loads

MAX_EXACT_DEMANDS = 20


class TooManyDemands(ValueError):
    pass


class IncompleteTable(ValueError):
    pass


def to_mask(subset: Iterable[int]) -> int:
    mask = 0
    for d in subset:
        mask |= 1 << (int(d) - 1)
    return mask


def from_mask(mask: int) -> frozenset:
    return frozenset(i + 1 for i in range(mask.bit_length()) if mask >> i & 1)


def _popcounts(n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    sizes = np.zeros(1 << n, dtype=np.int64)
    for b in range(n):
        sizes += (idx >> b) & 1
    return sizes


class CharacteristicTable:
    """Value of every demand subset, ``values[mask]``; ``values[0] == 0``."""

    def __init__(self, n_demands: int, values: Sequence, breakdowns: Optional[Sequence[ProfitBreakdown]] = None):
        if n_demands < 1:
            raise ValueError("need at least one demand")
        values = list(values)
        if len(values) != 1 << n_demands:
            raise IncompleteTable(f"expected {1 << n_demands} subset values, got {len(values)}")
        if any(v is None or (isinstance(v, float) and math.isnan(v)) for v in values):
            raise IncompleteTable("table has missing subset values")
        if values[0] != 0:
            raise ValueError("the empty coalition must be worth 0")
        self.n_demands = n_demands
        self.values = tuple(values)
        self.breakdowns = tuple(breakdowns) if breakdowns is not None else None

    @classmethod
    def from_mapping(cls, n_demands: int, mapping: Mapping) -> "CharacteristicTable":
        """Build from ``{subset: value}`` with subsets as bitmasks or iterables of ids."""
        values: list = [None] * (1 << n_demands)
        values[0] = 0.0
        for key, value in mapping.items():
            mask = key if isinstance(key, int) else to_mask(key)
            if not 0 <= mask < 1 << n_demands:
                raise UnknownDemand(f"subset {key!r} names demands beyond {n_demands}")
            values[mask] = value
        missing = [sorted(from_mask(m)) for m, v in enumerate(values) if v is None]
        if missing:
            raise IncompleteTable(f"missing values for subsets {missing[:5]}{'...' if len(missing) > 5 else ''}")
        return cls(n_demands, values)

    @classmethod
    def from_breakdowns(cls, n_demands: int, breakdowns: Sequence[ProfitBreakdown]) -> "CharacteristicTable":
        return cls(n_demands, [b.total for b in breakdowns], breakdowns)

    @property
    def demands(self) -> tuple[int, ...]:
        return tuple(range(1, self.n_demands + 1))

    @property
    def grand_value(self):
        return self.values[-1]

    def value(self, subset: Iterable[int]):
        mask = to_mask(subset)
        if mask >= len(self.values):
            raise UnknownDemand(f"subset {sorted(subset)} names demands beyond {self.n_demands}")
        return self.values[mask]

    def items(self):
        for mask, v in enumerate(self.values):
            yield from_mask(mask), v

    def repriced(self, penalty: float) -> "CharacteristicTable":
        """Re-settle the penalty term at another price without re-simulating."""
        if self.breakdowns is None:
            raise ValueError("table was built without settlement breakdowns")
        return CharacteristicTable.from_breakdowns(self.n_demands, [b.repriced(penalty) for b in self.breakdowns])

    def restrict(self, demands: Sequence[int]) -> "CharacteristicTable":
        """Sub-game on ``demands``; its demand k is ``demands[k - 1]``."""
        demands = list(demands)
        for d in demands:
            if not 1 <= d <= self.n_demands:
                raise UnknownDemand(f"unknown demand {d}")
        values = []
        for sub in range(1 << len(demands)):
            values.append(self.values[to_mask(demands[i] for i in range(len(demands)) if sub >> i & 1)])
        return CharacteristicTable(len(demands), values)

    def __add__(self, other: "CharacteristicTable") -> "CharacteristicTable":
        if other.n_demands != self.n_demands:
            raise ValueError("tables cover different demand sets")
        return CharacteristicTable(self.n_demands, [a + b for a, b in zip(self.values, other.values)])


@dataclass(frozen=True)
class Allocation:
    payments: dict
    grand_value: float
    mode: str = "exact"
    subsets_evaluated: int = 0
    n_samples: Optional[int] = None
    sample_seed: Optional[int] = None
    stderr: Optional[dict] = field(default=None)

    @property
    def efficiency_gap(self) -> float:
        return float(sum(self.payments.values()) - self.grand_value)

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "grand_value": float(self.grand_value),
            "payments": {str(d): float(v) for d, v in self.payments.items()},
            "subsets_evaluated": self.subsets_evaluated,
        }
        if self.mode == "sampled":
            out["n_samples"] = self.n_samples
            out["sample_seed"] = self.sample_seed
            out["stderr"] = {str(d): float(v) for d, v in self.stderr.items()}
        return out


def characteristic_breakdowns(
    population: AssetPopulation,
    prices: PriceSeries,
    penalty: float,
    seed: int,
    jobs: Optional[int] = None,
    loads: Optional[HorizonLoads] = None,
) -> list[ProfitBreakdown]:
    """Settled breakdown of every subset, indexed by bitmask."""
    n = population.n_demands
    if n > MAX_EXACT_DEMANDS:
        raise TooManyDemands(f"{n} demands exceed the exact-mode limit of {MAX_EXACT_DEMANDS}")
    penalty = check_penalty(penalty)
    if loads is None:
        loads = HorizonLoads(population, prices.horizon, seed)

    def settle(mask: int) -> ProfitBreakdown:
        if mask == 0:
            return ProfitBreakdown()
        return settle_loads(*loads.subset_loads(from_mask(mask)), prices, penalty)

    masks = range(1 << n)
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(settle, masks))
    return [settle(m) for m in masks]


def characteristic_table(
    population: AssetPopulation,
    prices: PriceSeries,
    penalty: float,
    seed: int,
    jobs: Optional[int] = None,
    loads: Optional[HorizonLoads] = None,
) -> CharacteristicTable:
    breakdowns = characteristic_breakdowns(population, prices, penalty, seed, jobs, loads)
    return CharacteristicTable.from_breakdowns(population.n_demands, breakdowns)


def _shapley_rational(table: CharacteristicTable) -> list:
    n = table.n_demands
    v = table.values
    phi = [Fraction(0)] * n
    for mask in range(1, 1 << n):
        size = bin(mask).count("1")
        weight = Fraction(1, n * math.comb(n - 1, size - 1))
        for i in range(n):
            if mask >> i & 1:
                phi[i] += weight * (v[mask] - v[mask ^ (1 << i)])
    return phi


def exact_shapley(table: CharacteristicTable) -> Allocation:
    """Weighted sum of marginal contributions over all subsets.

    Tables holding :class:`fractions.Fraction` values are computed in exact
    rational arithmetic; anything else in float64.
    """
    n = table.n_demands
    if len(table.values) != 1 << n:
        raise IncompleteTable("table does not cover every subset")
    if any(isinstance(x, Fraction) for x in table.values):
        phi = _shapley_rational(table)
    else:
        v = np.asarray(table.values, dtype=np.float64)
        idx = np.arange(1 << n)
        sizes = _popcounts(n)
        weights = np.array([0.0] + [1.0 / (n * math.comb(n - 1, s - 1)) for s in range(1, n + 1)])
        phi = []
        for i in range(n):
            with_i = idx[(idx >> i) & 1 == 1]
            phi.append(float(np.dot(weights[sizes[with_i]], v[with_i] - v[with_i ^ (1 << i)])))
    return Allocation(
        payments={d: phi[d - 1] for d in table.demands},
        grand_value=table.grand_value,
        mode="exact",
        subsets_evaluated=(1 << n) - 1,
    )


def _unrank_permutation(rank: int, n: int) -> list[int]:
    items = list(range(n))
    perm = []
    for k in range(n, 0, -1):
        f = math.factorial(k - 1)
        q, rank = divmod(rank, f)
        perm.append(items.pop(q))
    return perm


def sampled_shapley(
    value_fn: Callable[[frozenset], float],
    n_demands: int,
    m_samples: int,
    sample_seed: int,
    replace: bool = True,
) -> Allocation:
    """Average marginal contribution over random join orders.

    With ``replace=False`` the orders are distinct, so ``m_samples`` equal to
    ``n_demands!`` enumerates every order. Efficiency is reported through
    :attr:`Allocation.efficiency_gap`, never enforced.
    """
    if m_samples < 1:
        raise ValueError("m_samples must be >= 1")
    rng = np.random.default_rng(sample_seed)
    cache: dict[int, float] = {}

    def v(mask: int) -> float:
        if mask not in cache:
            cache[mask] = float(value_fn(from_mask(mask)))
        return cache[mask]

    if replace:
        orders = [rng.permutation(n_demands).tolist() for _ in range(m_samples)]
    else:
        total = math.factorial(n_demands)
        if m_samples > total:
            raise ValueError(f"only {total} distinct orders exist for {n_demands} demands")
        ranks = rng.choice(total, size=m_samples, replace=False)
        orders = [_unrank_permutation(int(r), n_demands) for r in ranks]

    marginals = np.zeros((m_samples, n_demands))
    for k, order in enumerate(orders):
        mask = 0
        prev = v(0)
        for i in order:
            mask |= 1 << i
            cur = v(mask)
            marginals[k, i] = cur - prev
            prev = cur

    phi = marginals.mean(axis=0)
    if m_samples > 1:
        se = marginals.std(axis=0, ddof=1) / math.sqrt(m_samples)
    else:
        se = np.full(n_demands, math.nan)
    return Allocation(
        payments={d: float(phi[d - 1]) for d in range(1, n_demands + 1)},
        grand_value=v((1 << n_demands) - 1),
        mode="sampled",
        subsets_evaluated=sum(1 for m in cache if m),
        n_samples=m_samples,
        sample_seed=sample_seed,
        stderr={d: float(se[d - 1]) for d in range(1, n_demands + 1)},
    )


def leave_one_out(table: CharacteristicTable, excluded: int) -> Allocation:
    """Exact Shapley payments of the coalition formed without ``excluded``."""
    if not 1 <= excluded <= table.n_demands:
        raise UnknownDemand(f"unknown demand {excluded}")
    if table.n_demands == 1:
        return Allocation(payments={}, grand_value=0.0, mode="exact", subsets_evaluated=0)
    remaining = [d for d in table.demands if d != excluded]
    sub = exact_shapley(table.restrict(remaining))
    return Allocation(
        payments={remaining[k - 1]: phi for k, phi in sub.payments.items()},
        grand_value=sub.grand_value,
        mode="exact",
        subsets_evaluated=sub.subsets_evaluated,
    )


def individual_rationality_violations(allocation: Allocation, table: CharacteristicTable, tol: float = 1e-9) -> dict:
    """Demands paid less than they would earn alone, with the shortfall."""
    out = {}
    for d, phi in allocation.payments.items():
        alone = table.value({d})
        if phi < alone - tol * max(1.0, abs(alone)):
            out[d] = float(alone - phi)
    return out
