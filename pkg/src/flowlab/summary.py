from __future__ import annotations

import numpy as np
import pandas as pd

from .errors import InputValidationError
from .illiquidity import LiquidityMeasures, liquidity_measures
from .model import MarketPanel, market_return_array

SUMMARY_COLUMNS = ("variable", "count", "mean", "std", "median", "p5", "p95")

def describe(values: np.ndarray) -> dict[str, float]:
    data = np.asarray(values, dtype=float)
    data = data[np.isfinite(data)]
    if data.size == 0:
        return {"count": 0, "mean": np.nan, "std": np.nan, "median": np.nan, "p5": np.nan, "p95": np.nan}
    return {
        "count": int(data.size),
        "mean": float(data.mean()),
        "std": float(data.std(ddof=1)) if data.size > 1 else float("nan"),
        "median": float(np.median(data)),
        "p5": float(np.percentile(data, 5)),
        "p95": float(np.percentile(data, 95)),
    }

def summarize(panel: MarketPanel, measures: LiquidityMeasures | None = None) -> pd.DataFrame:
    """Fund-day distribution of AUM, holdings count, flow, I, C, S and market-adjusted return."""
    view = panel.dense
    if not view.present.any():
        raise InputValidationError("cannot summarize an empty panel")
    measures = measures or liquidity_measures(panel)
    held = view.held
    adjusted = view.fund_return - market_return_array(view)[:, None]
    columns = {
        "aum": np.where(view.present, view.aum, np.nan),
        "n_holdings": np.where(held, (view.weights > 0).sum(axis=2), np.nan),
        "flow_rel": view.flow_rel,
        "fund_illiq": measures.fund_illiq,
        "fund_conc": measures.fund_conc,
        "fund_size": measures.fund_size,
        "market_adj_return": np.where(view.present, adjusted, np.nan),
    }
    rows = [{"variable": name, **describe(values)} for name, values in columns.items()]
    return pd.DataFrame.from_records(rows, columns=list(SUMMARY_COLUMNS))
