from __future__ import annotations

import numpy as np

MIN_PAIRS = 30

def variance_share(r_impact: np.ndarray, r: np.ndarray, min_pairs: int = MIN_PAIRS) -> float:
    """cov(R^I, R) / var(R) over paired finite observations; NaN when undefined."""
    r_impact = np.asarray(r_impact, dtype=float)
    r = np.asarray(r, dtype=float)
    paired = np.isfinite(r_impact) & np.isfinite(r)
    if paired.sum() < min_pairs:
        return float("nan")
    x, y = r_impact[paired], r[paired]
    var = float(np.var(y, ddof=1))
    if var <= 0:
        return float("nan")
    return float(np.cov(x, y, ddof=1)[0, 1] / var)
