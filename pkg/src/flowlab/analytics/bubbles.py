from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..config import RANKING_WINDOWS
from ..errors import InputValidationError
from ..model import MarketPanel, market_return_array
from ..utils.log import setup_logger

@dataclass(frozen=True, eq=False)
class BubbleResult:
    events: pd.DataFrame
    window: pd.DataFrame

    @property
    def post_event(self) -> dict[str, float]:
        """Mean cumulative excess return at the last offset with observations, per set."""
        out = {}
        for name in ("runup", "bubble"):
            column = self.window.loc[self.window[f"{name}_n"] > 0, f"{name}_mean"]
            out[name] = float(column.iloc[-1]) if len(column) else float("nan")
        return out

def rolling_excess(fund_return: np.ndarray, market: np.ndarray, window: int) -> np.ndarray:
    """Compounded fund return minus compounded market return over the trailing `window` days."""
    def compound(values: np.ndarray) -> np.ndarray:
        logs = np.log1p(values)
        finite = np.isfinite(logs)
        csum = np.concatenate([np.zeros((1,) + logs.shape[1:]), np.cumsum(np.where(finite, logs, 0.0), axis=0)])
        count = np.concatenate([np.zeros((1,) + logs.shape[1:]), np.cumsum(finite, axis=0)])
        out = np.full(values.shape, np.nan)
        if values.shape[0] >= window:
            total = csum[window:] - csum[:-window]
            full = (count[window:] - count[:-window]) == window
            out[window - 1 :] = np.where(full, np.expm1(total), np.nan)
        return out

    return compound(fund_return) - compound(market)[:, None]

def detect_runups(excess: np.ndarray, threshold: float, window: int) -> list[tuple[int, int]]:
    """Upward threshold crossings per fund, with a cool-off of one window after each event."""
    events = []
    for i in range(excess.shape[1]):
        last = -window
        above_before = False
        for t in range(excess.shape[0]):
            value = excess[t, i]
            above = bool(np.isfinite(value) and value > threshold)
            if above and not above_before and t - last >= window:
                events.append((t, i))
                last = t
            above_before = above
    return events

def runup_and_bubble(
    panel: MarketPanel,
    ponzi_flow: np.ndarray,
    runup_threshold: float = 0.5,
    window: int = 504,
    top_pct: float = 0.10,
    *,
    post: int | None = None,
    balanced: bool = False,
    ranking_window: str = "runup",
    logger_name: str = "flowlab.analytics",
) -> BubbleResult:
    """Run-up events, their top-Ponzi-flow bubble subset and event-window mean cumulative excess returns."""
    if window < 1 or not 0.0 < top_pct <= 1.0:
        raise InputValidationError("need window >= 1 and 0 < top_pct <= 1")
    if ranking_window not in RANKING_WINDOWS:
        raise InputValidationError(f"ranking_window must be one of {RANKING_WINDOWS}")
    post = window if post is None else post
    logger = setup_logger(logger_name)
    view = panel.dense
    market = market_return_array(view)
    excess = rolling_excess(view.fund_return, market, window)
    events = detect_runups(excess, runup_threshold, window)

    offsets = np.arange(-window, post + 1)
    columns = ["offset", "runup_mean", "runup_n", "bubble_mean", "bubble_n"]
    if not events:
        logger.info("bubbles_end", extra={"n_events": 0})
        empty_events = pd.DataFrame(columns=["fund_id", "date", "excess", "cum_ponzi", "is_bubble"])
        window_frame = pd.DataFrame({"offset": offsets, "runup_mean": np.nan, "runup_n": 0, "bubble_mean": np.nan, "bubble_n": 0})
        return BubbleResult(empty_events, window_frame[columns])

    pflow = np.where(np.isfinite(ponzi_flow), ponzi_flow, 0.0)
    cum_ponzi = []
    for t, i in events:
        start = max(0, t - window + 1) if ranking_window == "runup" else 0
        cum_ponzi.append(float(pflow[start : t + 1, i].sum()))
    frame = pd.DataFrame(
        {
            "fund_id": [view.fund_ids[i] for _, i in events],
            "date": [view.dates[t] for t, _ in events],
            "excess": [float(excess[t, i]) for t, i in events],
            "cum_ponzi": cum_ponzi,
            "t": [t for t, _ in events],
            "i": [i for _, i in events],
        }
    )
    n_bubble = max(1, int(np.ceil(top_pct * len(frame))))
    ranked = frame.sort_values(["cum_ponzi", "fund_id", "date"], ascending=[False, True, True], kind="mergesort")
    frame["is_bubble"] = frame.index.isin(ranked.index[:n_bubble])

    daily_excess = view.fund_return - market[:, None]
    finite = np.isfinite(daily_excess)
    csum = np.concatenate([np.zeros((1, daily_excess.shape[1])), np.cumsum(np.where(finite, daily_excess, 0.0), axis=0)])
    bad = np.concatenate([np.zeros((1, daily_excess.shape[1])), np.cumsum(~finite, axis=0)])
    n_dates = view.dates.size
    paths = np.full((len(frame), offsets.size), np.nan)
    for row, (t, i) in enumerate(zip(frame["t"], frame["i"])):
        targets = t + offsets
        ok = (targets >= 0) & (targets < n_dates)
        lo = np.minimum(targets, t)[ok]
        hi = np.maximum(targets, t)[ok]
        # sum of excess over (lo, hi]
        value = csum[hi + 1, i] - csum[lo + 1, i]
        clean = bad[hi + 1, i] - bad[lo + 1, i] == 0
        path = np.where(clean, np.where(targets[ok] >= t, value, -value), np.nan)
        paths[row, ok] = path
    if balanced:
        complete = np.isfinite(paths).all(axis=1)
        paths[~complete] = np.nan

    def summarize(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        subset = paths[rows]
        counts = np.isfinite(subset).sum(axis=0)
        sums = np.where(np.isfinite(subset), subset, 0.0).sum(axis=0)
        means = np.full(offsets.size, np.nan)
        np.divide(sums, counts, out=means, where=counts > 0)
        return means, counts

    runup_mean, runup_n = summarize(np.ones(len(frame), dtype=bool))
    bubble_mean, bubble_n = summarize(frame["is_bubble"].to_numpy())
    window_frame = pd.DataFrame(
        {"offset": offsets, "runup_mean": runup_mean, "runup_n": runup_n, "bubble_mean": bubble_mean, "bubble_n": bubble_n}
    )
    logger.info("bubbles_end", extra={"n_events": int(len(frame)), "n_bubbles": int(frame["is_bubble"].sum())})
    events_frame = frame.drop(columns=["t", "i"]).sort_values(["date", "fund_id"], kind="mergesort").reset_index(drop=True)
    return BubbleResult(events_frame, window_frame)
