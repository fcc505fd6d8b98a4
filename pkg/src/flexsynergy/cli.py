"""Command-line entry point: ``flexsynergy <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, RunConfig, read_config, with_overrides
from .market_data import PriceDataError, save_prices
from .settlement import HorizonLoads, horizon_trace, settle_loads
from .shapley import (
    CharacteristicTable,
    characteristic_breakdowns,
    characteristic_table,
    exact_shapley,
    individual_rationality_violations,
    leave_one_out,
    sampled_shapley,
    to_mask,
)
from .synergy import DEFAULT_WINDOW, synergy_curve

log = logging.getLogger("flexsynergy")

DEFAULT_LAMBDA_GRID = "0:3:0.25"
SWEEP_COLUMNS = ("penalty", "phi_focus_in", "phi_rest_in", "phi_focus_out", "phi_rest_out")


def fmt(x) -> str:
    """12 significant digits, stable across runs."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".12g")


def _json_num(x):
    x = float(x)
    return None if math.isnan(x) else float(fmt(x))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def parse_grid(text: str, kind=float) -> list:
    """``"a:b:step"`` (inclusive) or a comma list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid range must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError("grid step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = [round(start + k * step, 12) for k in range(max(n, 0))]
    else:
        values = [float(p) for p in text.split(",") if p.strip()]
    if not values:
        raise ConfigError(f"empty grid {text!r}")
    return [kind(v) for v in values]


def _int_list(text: Optional[str]):
    if text is None:
        return None
    return [int(p) for p in text.split(",") if p.strip()]


# -- commands ---------------------------------------------------------------


def cmd_gen_prices(config: RunConfig, args) -> list[Path]:
    out = Path(config.output_dir)
    path = out / "prices.csv"
    save_prices(config.load_prices(), path)
    return [path]


def cmd_simulate(config: RunConfig, args) -> list[Path]:
    prices = config.load_prices()
    population = config.population()
    subset = frozenset(_int_list(args.subset) or population.demands)
    population.check_subset(subset)
    loads = HorizonLoads(population, prices.horizon, config.seed)
    trace = horizon_trace(population, subset, prices, config.penalty, config.seed, loads)
    total = settle_loads(*loads.subset_loads(subset), prices, config.penalty)
    subset_id = to_mask(subset)

    out = Path(config.output_dir)
    trace_path = out / "trace.csv"
    _write_csv(
        trace_path,
        ["day", "subset_id", "reservation", "activation", "penalty", "total"],
        [[day, subset_id, fmt(b.reservation), fmt(b.activation), fmt(b.penalty), fmt(b.total)] for day, b in trace],
    )
    summary = {
        "subset_id": subset_id,
        "demands": sorted(subset),
        "days_settled": len(trace),
        "reservation": total.reservation,
        "activation": total.activation,
        "penalty": total.penalty,
        "shortfall_kwh": total.shortfall,
        "total": total.total,
    }
    if (config.format or "csv") == "json":
        summary_path = out / "summary.json"
        _write_json(summary_path, {k: _json_num(v) if isinstance(v, float) else v for k, v in summary.items()})
    else:
        summary_path = out / "summary.csv"
        keys = ["subset_id", "days_settled", "reservation", "activation", "penalty", "shortfall_kwh", "total"]
        _write_csv(summary_path, keys, [[fmt(summary[k]) if isinstance(summary[k], float) else summary[k] for k in keys]])
    return [trace_path, summary_path]


def cmd_synergy(config: RunConfig, args) -> list[Path]:
    prices = config.load_prices()
    grid = parse_grid(args.grid, int) if args.grid else list(range(10, config.n_assets + 1, 10)) or [config.n_assets]
    curve = synergy_curve(grid, prices, config.penalty, config.seed, args.window, jobs=config.jobs)
    for n in curve.undefined:
        log.warning("stand-alone profits sum to zero at n_assets=%d; ratio undefined", n)
    out = Path(config.output_dir)
    if (config.format or "csv") == "json":
        path = out / "synergy.json"
        _write_json(path, {
            "window": curve.window,
            "points": [
                {
                    "n_assets": p.n_assets,
                    "coalition_profit": _json_num(p.coalition_profit),
                    "sum_individual": _json_num(p.sum_individual_profit),
                    "ratio": _json_num(p.ratio),
                    "rolling_mean": _json_num(r),
                }
                for p, r in zip(curve.points, curve.rolling_mean)
            ],
        })
    else:
        path = out / "synergy.csv"
        _write_csv(
            path,
            ["n_assets", "coalition_profit", "sum_individual", "ratio", "rolling_mean"],
            [
                [p.n_assets, fmt(p.coalition_profit), fmt(p.sum_individual_profit), fmt(p.ratio), fmt(r)]
                for p, r in zip(curve.points, curve.rolling_mean)
            ],
        )
    return [path]


def cmd_shapley(config: RunConfig, args) -> list[Path]:
    prices = config.load_prices()
    population = config.population()
    if args.samples:
        loads = HorizonLoads(population, prices.horizon, config.seed)

        def value(subset) -> float:
            return settle_loads(*loads.subset_loads(subset), prices, config.penalty).total if subset else 0.0

        allocation = sampled_shapley(value, population.n_demands, args.samples, args.sample_seed)
        violations = {}
    else:
        table = characteristic_table(population, prices, config.penalty, config.seed, jobs=config.jobs)
        allocation = exact_shapley(table)
        violations = individual_rationality_violations(allocation, table)
        for d, gap in violations.items():
            log.warning("demand %d is paid %s less than its stand-alone profit", d, fmt(gap))

    out = Path(config.output_dir)
    if (config.format or "json") == "json":
        path = out / "allocation.json"
        obj = allocation.to_dict()
        obj["grand_value"] = _json_num(obj["grand_value"])
        obj["payments"] = {k: _json_num(v) for k, v in obj["payments"].items()}
        if "stderr" in obj:
            obj["stderr"] = {k: _json_num(v) for k, v in obj["stderr"].items()}
        obj["individual_rationality_violations"] = {str(k): _json_num(v) for k, v in violations.items()}
        _write_json(path, obj)
    else:
        path = out / "allocation.csv"
        header = ["demand", "payment"] + (["stderr"] if allocation.stderr else [])
        rows = []
        for d, phi in allocation.payments.items():
            row = [d, fmt(phi)]
            if allocation.stderr:
                row.append(fmt(allocation.stderr[d]))
            rows.append(row)
        _write_csv(path, header, rows)
    return [path]


@dataclass(frozen=True)
class PenaltySweepResult:
    """Payments to a focus demand and to the rest, with and without the focus demand."""

    focus: int
    grid: tuple[float, ...]
    phi_focus_in: tuple[float, ...]
    phi_rest_in: tuple[float, ...]
    phi_focus_out: tuple[float, ...]
    phi_rest_out: tuple[float, ...]

    def rows(self):
        return zip(self.grid, self.phi_focus_in, self.phi_rest_in, self.phi_focus_out, self.phi_rest_out)


def penalty_sweep(config: RunConfig, lambda_grid: Sequence[float], focus: int = 1, reprice_fast: bool = False) -> PenaltySweepResult:
    prices = config.load_prices()
    population = config.population()
    population.check_subset({focus})
    loads = HorizonLoads(population, prices.horizon, config.seed)
    base = None
    if reprice_fast:
        base = CharacteristicTable.from_breakdowns(
            population.n_demands,
            characteristic_breakdowns(population, prices, 0.0, config.seed, config.jobs, loads),
        )
    series = {k: [] for k in SWEEP_COLUMNS[1:]}
    for lam in lambda_grid:
        if base is not None:
            table = base.repriced(lam)
        else:
            table = characteristic_table(population, prices, lam, config.seed, config.jobs, loads)
        inside = exact_shapley(table)
        series["phi_focus_in"].append(inside.payments[focus])
        series["phi_rest_in"].append(math.fsum(v for d, v in inside.payments.items() if d != focus))
        series["phi_focus_out"].append(table.value({focus}))
        series["phi_rest_out"].append(leave_one_out(table, focus).grand_value if population.n_demands > 1 else 0.0)
    return PenaltySweepResult(focus, tuple(float(x) for x in lambda_grid), *(tuple(series[k]) for k in SWEEP_COLUMNS[1:]))


def cmd_penalty_sweep(config: RunConfig, args) -> list[Path]:
    grid = parse_grid(args.lambda_grid, float)
    if any(x < 0 for x in grid):
        raise ConfigError("penalty grid values must be >= 0")
    if set(config.always_fail) != {args.focus}:
        log.warning("penalty sweep expects always_fail = {%d}; config has %s", args.focus, sorted(config.always_fail))
    result = penalty_sweep(config, grid, args.focus, args.reprice_fast)
    out = Path(config.output_dir)
    if (config.format or "csv") == "json":
        path = out / "penalty_sweep.json"
        _write_json(path, {
            "focus": result.focus,
            **{k: [_json_num(x) for x in getattr(result, k if k != "penalty" else "grid")] for k in SWEEP_COLUMNS},
        })
    else:
        path = out / "penalty_sweep.csv"
        _write_csv(path, SWEEP_COLUMNS, [[fmt(x) for x in row] for row in result.rows()])
    return [path]


COMMANDS = {
    "simulate": cmd_simulate,
    "synergy": cmd_synergy,
    "shapley": cmd_shapley,
    "penalty-sweep": cmd_penalty_sweep,
    "gen-prices": cmd_gen_prices,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--seed", type=int, help="asset realization seed")
    common.add_argument("--penalty", type=float, help="penalty price per undelivered kWh")
    common.add_argument("--jobs", type=int, help="parallel workers")
    common.add_argument("--out", dest="output_dir", help="output directory")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--prices", dest="prices_path", help="price CSV (day,hour,spot,balancing,mfrr)")
    common.add_argument("--price-scale", type=float, help="multiplier applied to file prices, e.g. 0.001 for per-MWh data")
    common.add_argument("--synthetic-seed", type=int)
    common.add_argument("--days", dest="synthetic_days", type=int, help="synthetic price days")
    common.add_argument("--activation-rate", type=float)
    common.add_argument("--horizon", dest="horizon_days", type=int, help="days of prices to use")
    common.add_argument("--n-assets", type=int)
    common.add_argument("--n-demands", type=int)
    common.add_argument("--split", help="comma-separated asset counts per demand")
    common.add_argument("--always-fail", help="comma-separated demand ids whose assets never curtail")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="flexsynergy", description="Reserve-market coalition simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sim = sub.add_parser("simulate", parents=[common], help="settle one coalition over the horizon")
    sim.add_argument("--subset", help="comma-separated demand ids (default: all)")
    syn = sub.add_parser("synergy", parents=[common], help="synergy ratio versus portfolio size")
    syn.add_argument("--grid", help="asset counts, start:stop:step or a comma list")
    syn.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    shp = sub.add_parser("shapley", parents=[common], help="Shapley payments to each demand")
    shp.add_argument("--samples", type=int, help="use permutation sampling with this many orders")
    shp.add_argument("--sample-seed", type=int, default=0)
    sweep = sub.add_parser("penalty-sweep", parents=[common], help="payments across penalty prices")
    sweep.add_argument("--lambda-grid", default=DEFAULT_LAMBDA_GRID)
    sweep.add_argument("--focus", type=int, default=1, help="demand compared in and out of the coalition")
    sweep.add_argument("--reprice-fast", action="store_true", help="settle once and re-price the penalty term")
    sub.add_parser("gen-prices", parents=[common], help="write a synthetic price file")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = with_overrides(
            read_config(args.config),
            seed=args.seed,
            penalty=args.penalty,
            jobs=args.jobs,
            output_dir=args.output_dir,
            format=args.format,
            prices_path=args.prices_path,
            price_scale=args.price_scale,
            synthetic_seed=args.synthetic_seed,
            synthetic_days=args.synthetic_days,
            activation_rate=args.activation_rate,
            horizon_days=args.horizon_days,
            n_assets=args.n_assets,
            n_demands=args.n_demands,
            split=_int_list(args.split),
            always_fail=_int_list(args.always_fail),
        ).validate()
        Path(config.output_dir).mkdir(parents=True, exist_ok=True)
        paths = COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(f"flexsynergy: config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"flexsynergy: data error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except PriceDataError as exc:
        print(f"flexsynergy: data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"flexsynergy: config error: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        log.info("wrote %s", p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
