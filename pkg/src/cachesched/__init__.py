"""Cache-assisted wireless multicast scheduling with approximate MDP value tables."""

from .kernels import BACKEND
from .scenario import (ConfigError, Geometry, HotZone, ScenarioConfig, load_scenario, parse_scenario,
                       place_caches)
from .txopt import CostModel, lambert_w0, segment_min_cost
from .valuefn import (ReducedState, ValueTable, approx_value, build_value_table, exact_value_iteration,
                      poisson_mixture_cost, poisson_penalty, poisson_truncation, value_bounds)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConfigError", "CostModel", "Geometry", "HotZone", "ReducedState", "ScenarioConfig",
    "ValueTable", "approx_value", "build_value_table", "exact_value_iteration", "lambert_w0",
    "load_scenario", "parse_scenario", "place_caches", "poisson_mixture_cost", "poisson_penalty",
    "poisson_truncation", "segment_min_cost", "value_bounds",
]
