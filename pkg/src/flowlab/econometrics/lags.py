from __future__ import annotations

from typing import Sequence

import numpy as np
import pandas as pd

from ..errors import EstimationError, InputValidationError
from ..utils.log import setup_logger
from .design import PanelDesign
from .ols import RegressionFit, ols_clustered

MIN_EXTRA_DAYS = 30

def lag_name(column: str, lag: int) -> str:
    return f"{column}_lag{lag}"

def add_lags(
    frame: pd.DataFrame,
    column: str,
    lags: Sequence[int],
    calendar: pd.DatetimeIndex,
    *,
    entity: str = "fund_id",
    time: str = "date",
    prefix: str | None = None,
) -> pd.DataFrame:
    """Append calendar-aligned lags of `column` per entity; lag 0 is the column itself.

    A lag is NaN when the lagged day is absent, so incomplete windows drop listwise.
    """
    prefix = prefix or column
    t_pos = calendar.get_indexer(frame[time])
    if (t_pos < 0).any():
        raise InputValidationError(f"{time} values outside the calendar")
    codes, uniques = pd.factorize(frame[entity], sort=True)
    grid = np.full((len(calendar), len(uniques)), np.nan)
    grid[t_pos, codes] = frame[column].to_numpy(dtype=float)
    out = {}
    for lag in lags:
        source = t_pos - lag
        values = np.full(len(frame), np.nan)
        ok = (source >= 0) & (source < len(calendar))
        values[ok] = grid[source[ok], codes[ok]]
        out[lag_name(prefix, lag)] = values
    return pd.concat([frame.reset_index(drop=True), pd.DataFrame(out)], axis=1)

def distributed_lag(
    frame: pd.DataFrame,
    response: str,
    regressor: str,
    max_lag: int,
    calendar: pd.DatetimeIndex,
    *,
    controls: Sequence[str] = (),
    fe: Sequence[str] = ("fund_id", "date"),
    cluster: Sequence[str] = ("date", "fund_id"),
    entity: str = "fund_id",
    start_lag: int = 0,
    logger_name: str = "flowlab.econometrics",
) -> tuple[RegressionFit, PanelDesign]:
    """Regress `response` on lags start_lag..max_lag of `regressor` plus controls.

    Entities observed on fewer than max_lag + 30 days are dropped.
    """
    if max_lag < start_lag or start_lag < 0:
        raise InputValidationError(f"need 0 <= start_lag <= max_lag, got ({start_lag}, {max_lag})")
    logger = setup_logger(logger_name)
    coverage = frame.groupby(entity)[response].count()
    short = coverage.index[coverage < max_lag + MIN_EXTRA_DAYS]
    if len(short):
        logger.warning(
            "entities_dropped",
            extra={"reason": "short_history", "n_entities": int(len(short)), "min_days": max_lag + MIN_EXTRA_DAYS},
        )
    data = frame.loc[~frame[entity].isin(short)]
    lags = list(range(start_lag, max_lag + 1))
    data = add_lags(data, regressor, lags, calendar, entity=entity)
    lag_cols = [lag_name(regressor, lag) for lag in lags]
    design = PanelDesign.from_frame(data, response, [*lag_cols, *controls], fe=fe, cluster=cluster, entity=entity)
    if design.n_obs == 0:
        raise EstimationError("distributed lag: every observation dropped by incomplete lag windows")
    logger.info("fit_start", extra={"model": "distributed_lag", "max_lag": max_lag, "n_obs": design.n_obs})
    fit = ols_clustered(design, lag_columns=lag_cols)
    logger.info("fit_end", extra={"model": "distributed_lag", "n_obs": fit.n_obs, "fe_iterations": fit.fe_iterations})
    return fit, design

def cumulative_coefficients(fit: RegressionFit, lag_order: Sequence[str] | None = None) -> pd.DataFrame:
    """Partial sums of the lag block with se_t = sqrt(1' Omega_t 1)."""
    names = list(lag_order) if lag_order is not None else list(fit.lag_columns)
    if not names:
        raise InputValidationError("fit has no lag block")
    idx = [fit.index(name) for name in names]
    coef = fit.coef[idx]
    cov = fit.cov[np.ix_(idx, idx)]
    cum = np.cumsum(coef)
    # 1' Omega_t 1 for the leading t x t block
    variance = np.array([cov[: t + 1, : t + 1].sum() for t in range(len(idx))])
    se = np.sqrt(np.clip(variance, 0.0, None))
    return pd.DataFrame(
        {
            "lag": [_lag_number(name, position) for position, name in enumerate(names)],
            "name": names,
            "coef": coef,
            "se": np.sqrt(np.clip(np.diag(cov), 0.0, None)),
            "cum_coef": cum,
            "cum_se": se,
            "lower": cum - 1.96 * se,
            "upper": cum + 1.96 * se,
        }
    )

def _lag_number(name: str, position: int) -> int:
    head, sep, tail = name.rpartition("_lag")
    return int(tail) if sep and tail.isdigit() else position
