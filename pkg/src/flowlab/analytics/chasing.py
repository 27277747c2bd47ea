from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
import pandas as pd

from ..config import SAMPLES
from ..econometrics import PanelDesign, RegressionFit, add_lags, lag_name, ols_clustered, wald_equal
from ..errors import InputValidationError
from ..utils.log import setup_logger
from .decompose import DecomposedReturns

SCHEMA_VERSION = 1

@dataclass(frozen=True, eq=False)
class ChasingResult:
    sample: str
    benchmark: RegressionFit
    decomposed: RegressionFit
    beta1: float
    beta2: float
    wald_stat: float
    wald_pvalue: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "sample": self.sample,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "wald_stat": self.wald_stat,
            "wald_pvalue": self.wald_pvalue,
            "benchmark": self.benchmark.to_dict(),
            "decomposed": self.decomposed.to_dict(),
        }

def chasing_frame(decomposed: DecomposedReturns, flow_lags: int) -> pd.DataFrame:
    view = decomposed.view
    lead = np.full_like(view.flow_rel, np.nan)
    lead[:-1] = view.flow_rel[1:]
    frame = view.fund_frame(
        {
            "flow_lead": lead,
            "flow": view.flow_rel,
            "ret_w": decomposed.ret_w,
            "impact_w": decomposed.impact_w,
            "fund_w": decomposed.fund_w,
        }
    )
    frame["is_active"] = view.is_active[pd.Index(view.fund_ids).get_indexer(frame["fund_id"])]
    if flow_lags:
        frame = add_lags(frame, "flow", range(flow_lags), view.dates)
    return frame

def chasing_regression(
    decomposed: DecomposedReturns,
    *,
    flow_lags: int = 200,
    sample: str = "all",
    fe: Sequence[str] = ("date",),
    cluster: Sequence[str] = ("date", "fund_id"),
    logger_name: str = "flowlab.analytics",
) -> ChasingResult:
    """Next-day flows on weighted self-inflated (beta1) and fundamental (beta2) returns, plus the undecomposed benchmark."""
    if sample not in SAMPLES:
        raise InputValidationError(f"sample must be one of {SAMPLES}, got {sample!r}")
    logger = setup_logger(logger_name)
    frame = chasing_frame(decomposed, flow_lags)
    if sample != "all":
        frame = frame.loc[frame["is_active"] == (sample == "active")]
    controls = [lag_name("flow", lag) for lag in range(flow_lags)]
    frame = frame.dropna(subset=["flow_lead", "ret_w", "impact_w", "fund_w", *controls])

    benchmark = ols_clustered(PanelDesign.from_frame(frame, "flow_lead", ["ret_w", *controls], fe=fe, cluster=cluster))
    degenerate = bool(np.all(frame["impact_w"].to_numpy() == 0.0))
    if degenerate:
        logger.warning("chasing_degenerate", extra={"reason": "self_inflated_returns_identically_zero", "sample": sample})
        decomposed_fit = ols_clustered(PanelDesign.from_frame(frame, "flow_lead", ["fund_w", *controls], fe=fe, cluster=cluster))
        beta1, stat, pvalue = float("nan"), float("nan"), float("nan")
    else:
        decomposed_fit = ols_clustered(
            PanelDesign.from_frame(frame, "flow_lead", ["impact_w", "fund_w", *controls], fe=fe, cluster=cluster)
        )
        beta1 = decomposed_fit.coefficient("impact_w")
        stat, pvalue = wald_equal(decomposed_fit, "impact_w", "fund_w")
    result = ChasingResult(
        sample=sample,
        benchmark=benchmark,
        decomposed=decomposed_fit,
        beta1=beta1,
        beta2=decomposed_fit.coefficient("fund_w"),
        wald_stat=stat,
        wald_pvalue=pvalue,
    )
    logger.info(
        "chasing_end",
        extra={"sample": sample, "beta1": result.beta1, "beta2": result.beta2, "wald_pvalue": pvalue, "n_obs": benchmark.n_obs},
    )
    return result

def chasing_by_sample(decomposed: DecomposedReturns, **kwargs: Any) -> dict[str, ChasingResult]:
    """Pooled, active-only and passive-only fits; a split with no funds is skipped."""
    results = {}
    tags = decomposed.view.is_active
    for sample in SAMPLES:
        if sample == "active" and not tags.any():
            continue
        if sample == "passive" and tags.all():
            continue
        results[sample] = chasing_regression(decomposed, sample=sample, **kwargs)
    return results
