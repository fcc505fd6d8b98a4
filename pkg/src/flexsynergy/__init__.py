"""Simulate a coalition of flexible demands selling mFRR reserve capacity.

Quantifies the synergy of aggregating uncertain 1-kW assets and splits the
coalition's profit between demands with Shapley values.
"""

from .asset_model import (
    AssetPopulation,
    ConsumptionDay,
    SplitMismatch,
    UnknownDemand,
    aggregate_consumption,
    build_population,
    realize_day,
)
from .market_data import (
    ActivationMask,
    PriceRecord,
    PriceSeries,
    activation_mask,
    generate_synthetic_prices,
    load_prices,
    save_prices,
)
from .settlement import (
    DailyPosition,
    HorizonTooShort,
    ProfitBreakdown,
    form_bid,
    persistence_baseline,
    settle_day,
    settle_horizon,
    settle_individual,
)
from .shapley import (
    Allocation,
    CharacteristicTable,
    characteristic_table,
    exact_shapley,
    leave_one_out,
    sampled_shapley,
)
from .synergy import SynergyCurve, SynergyPoint, synergy_at, synergy_curve

__version__ = "0.1.0"
