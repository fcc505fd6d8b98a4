"""Hourly spot, balancing and mFRR capacity prices.

Prices are stored as ``(days, 24)`` arrays. Days and hours are 1-based in
every public signature; the arrays themselves are 0-based.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import IO, Iterator, Mapping, Optional, Union

import numpy as np

HOURS = 24
CANONICAL_COLUMNS = ("day", "hour", "spot", "balancing", "mfrr")
DEFAULT_SCHEMA = {name: name for name in CANONICAL_COLUMNS}


class PriceDataError(ValueError):
    """Base class for invalid price input."""

    def __init__(self, message: str, day: Optional[int] = None, hour: Optional[int] = None):
        self.day = day
        self.hour = hour
        where = []
        if day is not None:
            where.append(f"day={day}")
        if hour is not None:
            where.append(f"hour={hour}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class MissingHour(PriceDataError):
    pass


class NonNumericPrice(PriceDataError):
    pass


class DuplicateRecord(PriceDataError):
    pass


class EmptySource(PriceDataError):
    pass


class BadIndex(PriceDataError):
    pass


class DayOutOfRange(PriceDataError):
    pass


@dataclass(frozen=True)
class PriceRecord:
    day: int
    hour: int
    spot: float
    balancing: float
    mfrr: float


@dataclass(frozen=True)
class DayPrices:
    """The 24 hourly prices of one day."""

    day: int
    spot: np.ndarray
    balancing: np.ndarray
    mfrr: np.ndarray


@dataclass(frozen=True)
class ActivationMask:
    day: int
    active: np.ndarray  # bool, shape (24,)

    def hours(self) -> list[int]:
        return [int(h) + 1 for h in np.flatnonzero(self.active)]


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


class PriceSeries:
    """Validated price matrix covering ``horizon`` consecutive days."""

    def __init__(self, spot, balancing, mfrr):
        self.spot = _frozen(spot)
        self.balancing = _frozen(balancing)
        self.mfrr = _frozen(mfrr)
        shape = self.spot.shape
        if len(shape) != 2 or shape[1] != HOURS or shape[0] < 1:
            raise ValueError(f"price arrays must have shape (days, {HOURS}), got {shape}")
        if self.balancing.shape != shape or self.mfrr.shape != shape:
            raise ValueError("spot, balancing and mfrr arrays differ in shape")
        for name in ("spot", "balancing", "mfrr"):
            bad = np.argwhere(~np.isfinite(getattr(self, name)))
            if len(bad):
                d, h = bad[0]
                raise NonNumericPrice(f"non-finite {name} price", day=int(d) + 1, hour=int(h) + 1)

    @property
    def horizon(self) -> int:
        return self.spot.shape[0]

    def __len__(self) -> int:
        return self.spot.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, PriceSeries):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("spot", "balancing", "mfrr")
        )

    def __repr__(self) -> str:
        return f"PriceSeries(horizon={self.horizon})"

    def _check_day(self, day: int) -> None:
        if not 1 <= day <= self.horizon:
            raise DayOutOfRange(f"day outside 1..{self.horizon}", day=day)

    def record(self, day: int, hour: int) -> PriceRecord:
        self._check_day(day)
        if not 1 <= hour <= HOURS:
            raise BadIndex("hour outside 1..24", day=day, hour=hour)
        d, h = day - 1, hour - 1
        return PriceRecord(
            day, hour, float(self.spot[d, h]), float(self.balancing[d, h]), float(self.mfrr[d, h])
        )

    def records(self) -> Iterator[PriceRecord]:
        for day in range(1, self.horizon + 1):
            for hour in range(1, HOURS + 1):
                yield self.record(day, hour)

    def day(self, day: int) -> DayPrices:
        self._check_day(day)
        d = day - 1
        return DayPrices(day, self.spot[d], self.balancing[d], self.mfrr[d])

    def head(self, days: int) -> "PriceSeries":
        """The first ``days`` days of the series."""
        if not 1 <= days <= self.horizon:
            raise DayOutOfRange(f"requested horizon outside 1..{self.horizon}", day=days)
        return PriceSeries(self.spot[:days], self.balancing[:days], self.mfrr[:days])

    def activation_matrix(self) -> np.ndarray:
        """Boolean ``(days, 24)`` matrix, true where balancing strictly exceeds spot."""
        return self.balancing > self.spot


def activation_mask(prices: PriceSeries, day: int) -> ActivationMask:
    """Hours of ``day`` in which the reserve is called: balancing > spot, ties excluded."""
    dp = prices.day(day)
    active = dp.balancing > dp.spot
    active.setflags(write=False)
    return ActivationMask(day, active)


Source = Union[str, bytes, os.PathLike, IO]


def _read_text(source: Source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8", newline="") as fh:
            return fh.read()
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _parse_int(value: str, what: str, day=None, hour=None) -> int:
    try:
        return int(value.strip())
    except (ValueError, AttributeError):
        raise BadIndex(f"{what} is not an integer: {value!r}", day=day, hour=hour) from None


def load_prices(
    source: Source,
    schema: Optional[Mapping[str, str]] = None,
    scale: float = 1.0,
) -> PriceSeries:
    """Read a delimited price file into a :class:`PriceSeries`.

    :param source: path, raw bytes, or an open text/binary stream (UTF-8, header row).
    :param schema: maps the canonical names ``day, hour, spot, balancing, mfrr``
        to the column names used in the file. Missing keys fall back to the
        canonical name.
    :param scale: multiplier applied to every price on ingestion, e.g. ``1e-3``
        to turn DKK/MWh into DKK/kWh.
    """
    text = _read_text(source)
    cols = dict(DEFAULT_SCHEMA)
    if schema:
        cols.update(schema)
    try:
        dialect = csv.Sniffer().sniff(text.split("\n", 1)[0], delimiters=",;\t")
    except csv.Error:
        dialect = csv.excel
    reader = csv.DictReader(io.StringIO(text), dialect=dialect)
    if reader.fieldnames is None:
        raise EmptySource("price source has no header")
    missing = [c for c in cols.values() if c not in reader.fieldnames]
    if missing:
        raise PriceDataError(f"missing columns {missing}; header is {reader.fieldnames}")

    rows: dict[tuple[int, int], tuple[float, float, float]] = {}
    for raw in reader:
        if None in raw:
            raise BadIndex(f"row has more fields than the header: {raw[None]!r}")
        if not any((v or "").strip() for v in raw.values()):
            continue
        day = _parse_int(raw[cols["day"]], "day")
        hour = _parse_int(raw[cols["hour"]], "hour", day=day)
        if day < 1:
            raise BadIndex("day must be >= 1", day=day, hour=hour)
        if not 1 <= hour <= HOURS:
            raise BadIndex("hour outside 1..24", day=day, hour=hour)
        if (day, hour) in rows:
            raise DuplicateRecord("duplicate price record", day=day, hour=hour)
        values = []
        for name in ("spot", "balancing", "mfrr"):
            cell = raw[cols[name]]
            try:
                x = float(cell)
            except (TypeError, ValueError):
                raise NonNumericPrice(f"{name} is not a number: {cell!r}", day=day, hour=hour) from None
            if not math.isfinite(x):
                raise NonNumericPrice(f"{name} is not finite: {cell!r}", day=day, hour=hour)
            values.append(x * scale)
        rows[(day, hour)] = tuple(values)

    if not rows:
        raise EmptySource("price source has no records")
    horizon = max(day for day, _ in rows)
    per_day = np.zeros(horizon + 1, dtype=int)
    for day, _ in rows:
        per_day[day] += 1
    for day in range(1, horizon + 1):
        if per_day[day] != HOURS:
            first_gap = next(h for h in range(1, HOURS + 1) if (day, h) not in rows)
            raise MissingHour(f"day has {per_day[day]} of {HOURS} hours", day=day, hour=first_gap)

    data = np.empty((3, horizon, HOURS))
    for (day, hour), values in rows.items():
        data[:, day - 1, hour - 1] = values
    return PriceSeries(data[0], data[1], data[2])


def save_prices(prices: PriceSeries, dest: Union[str, os.PathLike, IO]) -> None:
    """Write the canonical CSV. ``repr`` keeps floats bit-exact on reload."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            save_prices(prices, fh)
        return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(CANONICAL_COLUMNS)
    for r in prices.records():
        writer.writerow([r.day, r.hour, repr(r.spot), repr(r.balancing), repr(r.mfrr)])


def generate_synthetic_prices(seed: int, days: int, activation_rate: float = 0.25) -> PriceSeries:
    """Deterministic DK1-flavoured price series for tests and demos.

    Spot follows a daily shape plus noise (and may go negative). Each hour is
    independently activated with probability ``activation_rate``; activated
    hours get ``balancing > spot``, all others ``balancing <= spot``. mFRR
    capacity prices are nonnegative.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    if not 0.0 <= activation_rate <= 1.0:
        raise ValueError("activation_rate must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    hours = np.arange(HOURS)
    shape = 1.4 + 0.5 * np.sin((hours - 6) * np.pi / 12) + 0.3 * np.exp(-((hours - 18) ** 2) / 8)
    day_level = 1.0 + 0.25 * rng.standard_normal(size=(days, 1))
    spot = shape * day_level + 0.35 * rng.standard_normal(size=(days, HOURS))
    activated = rng.random(size=(days, HOURS)) < activation_rate
    up = 0.05 + rng.exponential(0.6, size=(days, HOURS))
    down = rng.exponential(0.3, size=(days, HOURS))
    balancing = np.where(activated, spot + up, spot - down)
    mfrr = np.abs(0.45 + 0.2 * rng.standard_normal(size=(days, HOURS)))
    return PriceSeries(spot, balancing, mfrr)
