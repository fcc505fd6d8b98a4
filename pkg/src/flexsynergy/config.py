"""Run configuration: a TOML file, overridden by command-line flags."""

from __future__ import annotations

import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .asset_model import build_population
from .market_data import PriceSeries, generate_synthetic_prices, load_prices


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    prices_path: Optional[str] = None
    price_scale: float = 1.0
    synthetic_seed: Optional[int] = None
    synthetic_days: Optional[int] = None
    activation_rate: Optional[float] = None
    n_assets: int = 1000
    n_demands: int = 5
    split: Optional[tuple[int, ...]] = None
    always_fail: tuple[int, ...] = ()
    penalty: float = 0.1
    seed: int = 0
    horizon_days: Optional[int] = None
    output_dir: str = "out"
    format: Optional[str] = None
    jobs: int = 1

    def validate(self) -> "RunConfig":
        synthetic = any(v is not None for v in (self.synthetic_seed, self.synthetic_days, self.activation_rate))
        if self.prices_path is not None and synthetic:
            raise ConfigError("give either a price file or synthetic price settings, not both")
        if self.penalty < 0:
            raise ConfigError(f"penalty must be >= 0, got {self.penalty}")
        if self.n_assets < 1 or self.n_demands < 1:
            raise ConfigError("n_assets and n_demands must be >= 1")
        if self.format not in (None, "csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if self.horizon_days is not None and self.horizon_days < 2:
            raise ConfigError("horizon_days must be >= 2")
        if self.activation_rate is not None and not 0 <= self.activation_rate <= 1:
            raise ConfigError("activation_rate must lie in [0, 1]")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        return self

    def load_prices(self) -> PriceSeries:
        """Price series truncated to ``horizon_days``. File errors propagate."""
        if self.prices_path is not None:
            prices = load_prices(Path(self.prices_path), scale=self.price_scale)
        else:
            days = self.synthetic_days if self.synthetic_days is not None else (self.horizon_days or 233)
            prices = generate_synthetic_prices(
                self.synthetic_seed if self.synthetic_seed is not None else 7,
                days,
                self.activation_rate if self.activation_rate is not None else 0.25,
            )
        if self.horizon_days is not None:
            if self.horizon_days > prices.horizon:
                raise ConfigError(f"horizon_days={self.horizon_days} exceeds the {prices.horizon} days of prices")
            prices = prices.head(self.horizon_days)
        return prices

    def population(self):
        try:
            return build_population(self.n_assets, self.n_demands, self.split, self.always_fail)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


_FLAT_KEYS = {f.name for f in fields(RunConfig)}
_SECTION_KEYS = {
    ("prices", "path"): "prices_path",
    ("prices", "scale"): "price_scale",
    ("synthetic", "seed"): "synthetic_seed",
    ("synthetic", "days"): "synthetic_days",
    ("synthetic", "activation_rate"): "activation_rate",
}


def _coerce(values: dict) -> dict:
    for key in ("split", "always_fail"):
        if values.get(key) is not None:
            values[key] = tuple(int(x) for x in values[key])
    return values


def read_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    values = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            for sub, v in value.items():
                if (key, sub) not in _SECTION_KEYS:
                    raise ConfigError(f"unknown config key [{key}].{sub}")
                values[_SECTION_KEYS[(key, sub)]] = v
        elif key in _FLAT_KEYS:
            values[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if values.get("prices_path") is not None:
        values["prices_path"] = str((Path(path).parent / values["prices_path"]))
    try:
        return RunConfig(**_coerce(values))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def with_overrides(config: RunConfig, **overrides) -> RunConfig:
    """Apply non-None overrides; a price file override clears synthetic settings and vice versa."""
    overrides = _coerce({k: v for k, v in overrides.items() if v is not None})
    if "prices_path" in overrides:
        config = replace(config, synthetic_seed=None, synthetic_days=None, activation_rate=None)
    elif any(k in overrides for k in ("synthetic_seed", "synthetic_days", "activation_rate")):
        config = replace(config, prices_path=None)
    return replace(config, **overrides)
