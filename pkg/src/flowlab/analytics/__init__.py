"""Return decomposition, return chasing, Ponzi flows, portfolio sorts and run-up/bubble events."""

from .bubbles import BubbleResult, runup_and_bubble
from .chasing import ChasingResult, chasing_by_sample, chasing_regression
from .decompose import (
    DecomposedReturns,
    cumulative_impact,
    decompose,
    exp_weights,
    variance_share_cells,
    variance_shares,
)
from .ponzi import PonziSeries, ponzi_flows, ponzi_returns, ponzi_series, ponzi_volume_ratio, wealth_reallocation
from .sorts import SortResult, flow_decile_sort

__all__ = [
    "BubbleResult",
    "ChasingResult",
    "DecomposedReturns",
    "PonziSeries",
    "SortResult",
    "chasing_by_sample",
    "chasing_regression",
    "cumulative_impact",
    "decompose",
    "exp_weights",
    "flow_decile_sort",
    "ponzi_flows",
    "ponzi_returns",
    "ponzi_series",
    "ponzi_volume_ratio",
    "runup_and_bubble",
    "variance_share_cells",
    "variance_shares",
    "wealth_reallocation",
]
