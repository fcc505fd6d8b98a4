"""Acceptance suite. One test (or group) per criterion, tagged with ``criterion``.

A summary line per criterion is printed at the end of the pytest run.
Criterion 6 needs the 2022 DK1 price file; point ``FLEXSYNERGY_DK1_PRICES``
at it (or drop it at ``tests/data/dk1_2022.csv``), otherwise it is skipped.
"""

import math
import os
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexsynergy.asset_model import build_population, realize_day
from flexsynergy.cli import main, penalty_sweep
from flexsynergy.config import RunConfig
from flexsynergy.market_data import ActivationMask, generate_synthetic_prices, load_prices, save_prices
from flexsynergy.settlement import settle_day, settle_horizon
from flexsynergy.shapley import CharacteristicTable, characteristic_table, exact_shapley
from flexsynergy.synergy import synergy_curve

from oracles import brute_force_horizon, permutation_shapley

pytestmark = pytest.mark.acceptance


def criterion(n, title):
    return pytest.mark.criterion(str(n), title)


# -- 1 --------------------------------------------------------------------


@criterion(1, "settlement matches brute-force loops (|d| <= 1e-9, < 1 s)")
def test_settlement_oracle_equivalence():
    prices = generate_synthetic_prices(seed=17, days=5, activation_rate=0.4)
    subsets = [{1}, {2}, {3}, {1, 2}, {1, 3}, {2, 3}, {1, 2, 3}]
    worst = 0.0
    elapsed = 0.0
    for always_fail in ((), (3,)):
        pop = build_population(12, 3, always_fail=always_fail)
        for seed in range(4):
            for subset in subsets:
                t0 = time.perf_counter()
                got = settle_horizon(pop, subset, prices, 0.1, seed)
                elapsed += time.perf_counter() - t0
                want = brute_force_horizon(pop, subset, prices, 0.1, seed)
                got = (got.reservation, got.activation, got.penalty, got.total)
                worst = max(worst, max(abs(a - b) for a, b in zip(got, want)))
    print(f"criterion 1: max |delta| = {worst:.3g}, settle time = {elapsed:.3f} s")
    assert worst <= 1e-9
    assert elapsed < 1.0


# -- 2 --------------------------------------------------------------------


def _with_symmetry(values, n, i, j):
    # make i and j interchangeable: v(S + j) = v(S + i) for S without both
    out = list(values)
    bi, bj = 1 << (i - 1), 1 << (j - 1)
    for m in range(1 << n):
        if not m & (bi | bj):
            out[m | bj] = out[m | bi]
    return out


def _with_dummy(values, n, k, c):
    # k adds exactly c to every coalition
    out = list(values)
    bk = 1 << (k - 1)
    for m in range(1 << n):
        if not m & bk:
            out[m | bk] = out[m] + c
    return out


def _as_fractions(values):
    return [Fraction(v) for v in values]


@criterion(2, "Shapley axioms and permutation agreement on 200 tables (< 10 s)")
def test_shapley_axioms():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_float = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 7))
        base = [0.0] + list(rng.normal(0, 100, (1 << n) - 1))
        other = [0.0] + list(rng.normal(0, 100, (1 << n) - 1))
        table = CharacteristicTable(n, base)
        alloc = exact_shapley(table)
        scale = max(1.0, max(abs(v) for v in base))

        # efficiency
        assert abs(math.fsum(alloc.payments.values()) - table.grand_value) <= 1e-9 * n

        # agreement with the n! enumerator: exact on the rational image of the
        # table, and the float path within rounding of it
        rational = CharacteristicTable(n, _as_fractions(base))
        exact = exact_shapley(rational).payments
        assert exact == permutation_shapley(n, rational.value)
        assert sum(exact.values()) == rational.grand_value
        for d in table.demands:
            worst_float = max(worst_float, abs(alloc.payments[d] - float(exact[d])) / scale)

        # symmetry
        i, j = (int(x) for x in rng.choice(np.arange(1, n + 1), 2, replace=False))
        sym = _with_symmetry(base, n, i, j)
        p = exact_shapley(CharacteristicTable(n, sym)).payments
        assert abs(p[i] - p[j]) <= 1e-9 * scale
        q = exact_shapley(CharacteristicTable(n, _as_fractions(sym))).payments
        assert q[i] == q[j]

        # dummy
        k = int(rng.integers(1, n + 1))
        c = float(rng.normal(0, 10))
        dummy = _with_dummy(base, n, k, c)
        assert abs(exact_shapley(CharacteristicTable(n, dummy)).payments[k] - c) <= 1e-9 * scale
        exact_dummy = _with_dummy(_as_fractions(base), n, k, Fraction(c))
        assert exact_shapley(CharacteristicTable(n, exact_dummy)).payments[k] == Fraction(c)

        # linearity
        a, b = float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2))
        mixed = [a * x + b * y for x, y in zip(base, other)]
        pa = alloc.payments
        pb = exact_shapley(CharacteristicTable(n, other)).payments
        pm = exact_shapley(CharacteristicTable(n, mixed)).payments
        for d in table.demands:
            assert abs(pm[d] - (a * pa[d] + b * pb[d])) <= 1e-9 * scale
        fa, fb = Fraction(a), Fraction(b)
        pq = exact_shapley(CharacteristicTable(n, [fa * Fraction(x) + fb * Fraction(y) for x, y in zip(base, other)])).payments
        ea = exact
        eb = exact_shapley(CharacteristicTable(n, _as_fractions(other))).payments
        assert all(pq[d] == fa * ea[d] + fb * eb[d] for d in table.demands)
    elapsed = time.perf_counter() - t0
    print(f"criterion 2: float vs exact max relative gap = {worst_float:.3g}, {elapsed:.2f} s")
    assert worst_float <= 1e-12
    assert elapsed < 10.0


# -- 3 --------------------------------------------------------------------


@criterion(3, "hand example gives (1.5, 1.5) exactly")
def test_hand_example():
    table = CharacteristicTable.from_mapping(2, {(1,): 1.0, (2,): 1.0, (1, 2): 3.0})
    assert exact_shapley(table).payments == {1: 1.5, 2: 1.5}
    rational = CharacteristicTable.from_mapping(2, {(1,): Fraction(1), (2,): Fraction(1), (1, 2): Fraction(3)})
    assert exact_shapley(rational).payments == {1: Fraction(3, 2), 2: Fraction(3, 2)}


# -- 4 --------------------------------------------------------------------

SYNERGY_GRID = [1, 2, 3, 5, 10, 25, 60, 150, 400]


@criterion(4, "synergy ratio >= 1 - 1e-9, and == 1 without activation (< 30 s)")
def test_synergy_lower_bound():
    rng = np.random.default_rng(99)
    t0 = time.perf_counter()
    accepted = rejected = loss_making = 0
    lowest = math.inf
    while accepted < 50:
        seed = int(rng.integers(0, 2**31))
        penalty = float(rng.uniform(0, 3))
        rate = float(rng.uniform(0.05, 0.95))
        days = int(rng.integers(3, 16))
        prices = generate_synthetic_prices(seed, days, rate)
        if (prices.balancing[prices.activation_matrix()] < 0).any():
            rejected += 1
            continue
        accepted += 1
        curve = synergy_curve(SYNERGY_GRID, prices, penalty, seed)
        assert not curve.undefined
        for p in curve.points:
            # pooling never loses money; the ratio reads that as >= 1 only
            # while stand-alone operation is profitable
            assert p.coalition_profit >= p.sum_individual_profit - 1e-9, (seed, penalty, rate, days, p)
            if p.sum_individual_profit > 0:
                lowest = min(lowest, p.ratio)
                assert p.ratio >= 1 - 1e-9, (seed, penalty, rate, days, p)
            else:
                loss_making += 1

        flat = generate_synthetic_prices(seed, days, 0.0)
        assert curve_ratios_all_one(synergy_curve(SYNERGY_GRID, flat, penalty, seed))
    elapsed = time.perf_counter() - t0
    print(f"criterion 4: 50 configs ({rejected} rejected), min ratio {lowest:.6f} over profitable points, "
          f"{loss_making} points with negative stand-alone profit, {elapsed:.2f} s")
    assert elapsed < 30.0


def curve_ratios_all_one(curve):
    return all(r == 1.0 for r in curve.ratios)


# -- 5 --------------------------------------------------------------------


@criterion(5, "coalition shortfall <= sum of individual shortfalls per hour")
@settings(max_examples=150, deadline=None)
@given(
    n_assets=st.integers(1, 60),
    n_demands=st.integers(1, 4),
    seed=st.integers(0, 2**32 - 1),
    day=st.integers(2, 400),
    active_bits=st.integers(0, 2**24 - 1),
    fail_first=st.booleans(),
)
def test_shortfall_subadditive(n_assets, n_demands, seed, day, active_bits, fail_first):
    n_demands = min(n_demands, n_assets)
    pop = build_population(n_assets, n_demands, always_fail={1} if fail_first else ())
    yesterday = realize_day(pop, day - 1, seed).hour_of
    today = realize_day(pop, day, seed).hour_of
    active = np.array([(active_bits >> h) & 1 for h in range(24)], dtype=bool)
    mask = ActivationMask(day, active)
    prices = generate_synthetic_prices(seed % 1000, 1, 0.5).day(1)
    failing = pop.failing_mask()

    def one_hot(hours, keep):
        return np.bincount(np.asarray(hours)[keep] - 1, minlength=24).astype(float)

    everyone = np.ones(n_assets, dtype=bool)
    pos, _ = settle_day(one_hot(yesterday, everyone), one_hot(today, everyone), one_hot(today, failing), prices, mask, 0.1)
    total = np.zeros(24)
    for i in range(n_assets):
        me = np.zeros(n_assets, dtype=bool)
        me[i] = True
        p, _ = settle_day(one_hot(yesterday, me), one_hot(today, me), one_hot(today, me & failing), prices, mask, 0.1)
        total += p.shortfall
    assert np.all(pos.shortfall <= total)


# -- 6 --------------------------------------------------------------------


def _dk1_path():
    env = os.environ.get("FLEXSYNERGY_DK1_PRICES")
    if env:
        return Path(env)
    default = Path(__file__).parent / "data" / "dk1_2022.csv"
    return default if default.exists() else None


@pytest.fixture(scope="module")
def dk1_prices():
    path = _dk1_path()
    if path is None:
        pytest.skip("DK1 2022 price file not supplied (set FLEXSYNERGY_DK1_PRICES)")
    prices = load_prices(path, scale=float(os.environ.get("FLEXSYNERGY_DK1_SCALE", "1")))
    if prices.horizon < 233:
        pytest.fail(f"DK1 file has {prices.horizon} days, need 233")
    return prices.head(233)


@criterion(6, "DK1 reproduction: plateau, sign change, membership ordering (< 60 s)")
def test_dk1_reproduction(dk1_prices, tmp_path):
    seed = int(os.environ.get("FLEXSYNERGY_DK1_SEED", "0"))
    t0 = time.perf_counter()
    grid = list(range(10, 1001, 10))
    curve = synergy_curve(grid, dk1_prices, 0.1, seed, window=40, jobs=4)
    plateau = [m for n, m in zip(curve.n_assets, curve.rolling_mean) if n >= 400]
    print(f"criterion 6: plateau range [{min(plateau):.3f}, {max(plateau):.3f}]")
    assert all(1.7 <= m <= 2.1 for m in plateau)

    prices_file = tmp_path / "dk1.csv"
    save_prices(dk1_prices, prices_file)
    config = RunConfig(prices_path=str(prices_file), n_assets=1000, n_demands=5, always_fail=(1,),
                       penalty=0.1, seed=seed, jobs=4).validate()
    lam = [0.25 * k for k in range(13)]
    sweep = penalty_sweep(config, lam, focus=1)
    elapsed = time.perf_counter() - t0
    phi = sweep.phi_focus_in
    crossings = [
        lam[k] + (lam[k + 1] - lam[k]) * phi[k] / (phi[k] - phi[k + 1])
        for k in range(len(lam) - 1)
        if phi[k] >= 0 > phi[k + 1]
    ]
    print(f"criterion 6: phi_d1 crossings {crossings}, {elapsed:.1f} s")
    assert crossings and all(1.0 <= x <= 2.0 for x in crossings)
    for row in sweep.rows():
        _, focus_in, rest_in, focus_out, rest_out = row
        assert focus_in >= focus_out
        assert rest_in >= rest_out
    assert elapsed < 60.0


@criterion("6-runtime", "full-scale 31-subset, 233-day run at 4 jobs < 60 s (synthetic prices)")
def test_full_scale_runtime(tmp_path):
    t0 = time.perf_counter()
    assert main(["shapley", "--synthetic-seed", "7", "--days", "233", "--n-assets", "1000",
                 "--n-demands", "5", "--jobs", "4", "--out", str(tmp_path / "s")]) == 0
    assert main(["synergy", "--synthetic-seed", "7", "--days", "233", "--grid", "10:1000:10",
                 "--jobs", "4", "--out", str(tmp_path / "g")]) == 0
    assert main(["penalty-sweep", "--synthetic-seed", "7", "--days", "233", "--always-fail", "1",
                 "--jobs", "4", "--out", str(tmp_path / "p")]) == 0
    elapsed = time.perf_counter() - t0
    print(f"criterion 6 runtime stand-in: {elapsed:.1f} s")
    assert elapsed < 60.0


# -- 7 --------------------------------------------------------------------

SMALL = ["--synthetic-seed", "5", "--days", "20", "--activation-rate", "0.3", "--n-assets", "150"]
COMMANDS = {
    "gen-prices": ["gen-prices", *SMALL],
    "simulate": ["simulate", *SMALL, "--always-fail", "2"],
    "simulate-json": ["simulate", *SMALL, "--format", "json", "--subset", "1,4"],
    "synergy": ["synergy", *SMALL, "--grid", "1:150:7"],
    "synergy-json": ["synergy", *SMALL, "--grid", "1:150:7", "--format", "json"],
    "shapley": ["shapley", *SMALL],
    "shapley-csv": ["shapley", *SMALL, "--format", "csv"],
    "shapley-sampled": ["shapley", *SMALL, "--samples", "40", "--sample-seed", "8"],
    "penalty-sweep": ["penalty-sweep", *SMALL, "--always-fail", "1"],
    "penalty-sweep-json": ["penalty-sweep", *SMALL, "--always-fail", "1", "--format", "json", "--reprice-fast"],
}


def _snapshot(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


@criterion(7, "identical config gives byte-identical output files")
@pytest.mark.parametrize("name", sorted(COMMANDS))
def test_determinism(name, tmp_path):
    args = COMMANDS[name]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    assert main([*args, "--jobs", "4", "--out", str(tmp_path / "c")]) == 0
    a = _snapshot(tmp_path / "a")
    assert a
    assert a == _snapshot(tmp_path / "b")
    assert a == _snapshot(tmp_path / "c")


# -- 8 --------------------------------------------------------------------


@criterion(8, "penalty sweep with and without fast reprice agree to 1e-9")
def test_fast_reprice_agreement(tmp_path):
    config = RunConfig(synthetic_seed=12, synthetic_days=60, activation_rate=0.3, n_assets=400,
                       always_fail=(1,), seed=3).validate()
    grid = [0.25 * k for k in range(13)]
    slow = penalty_sweep(config, grid, focus=1)
    fast = penalty_sweep(config, grid, focus=1, reprice_fast=True)
    worst = 0.0
    for key in ("phi_focus_in", "phi_rest_in", "phi_focus_out", "phi_rest_out"):
        for x, y in zip(getattr(slow, key), getattr(fast, key)):
            worst = max(worst, abs(x - y))
    print(f"criterion 8: max |delta| = {worst:.3g}")
    assert worst <= 1e-9

    base = ["penalty-sweep", "--synthetic-seed", "12", "--days", "60", "--activation-rate", "0.3",
            "--n-assets", "400", "--always-fail", "1", "--seed", "3"]
    assert main([*base, "--out", str(tmp_path / "slow")]) == 0
    assert main([*base, "--reprice-fast", "--out", str(tmp_path / "fast")]) == 0
    assert (tmp_path / "slow" / "penalty_sweep.csv").read_bytes() == (tmp_path / "fast" / "penalty_sweep.csv").read_bytes()
