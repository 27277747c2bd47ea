from __future__ import annotations

from dataclasses import replace

import numpy as np
from scipy import sparse

from ..errors import EstimationError
from .design import PanelDesign

FE_TOL = 1e-8
FE_MAX_ITER = 100

def group_sums(codes: np.ndarray, values: np.ndarray) -> np.ndarray:
    """(G, K) sums of the rows of `values` by integer group code."""
    n_groups = int(codes.max()) + 1 if codes.size else 0
    indicator = sparse.csr_matrix(
        (np.ones(codes.size), (codes, np.arange(codes.size))),
        shape=(n_groups, codes.size),
    )
    return np.asarray(indicator @ values)

def group_means(codes: np.ndarray, values: np.ndarray) -> np.ndarray:
    sums = group_sums(codes, values)
    counts = np.bincount(codes, minlength=sums.shape[0]).astype(float)
    return sums / counts[:, None]

def demean(codes: np.ndarray, values: np.ndarray) -> np.ndarray:
    return values - group_means(codes, values)[codes]

def absorb_fixed_effects(design: PanelDesign, tol: float = FE_TOL, max_iter: int = FE_MAX_ITER) -> PanelDesign:
    """Within transformation: exact for one dimension, alternating projections for two."""
    if not design.fe or design.absorbed:
        return design
    stacked = np.column_stack([design.y, design.X])
    means = {name: group_means(codes, stacked) for name, codes in zip(design.fe_names, design.fe)}

    if len(design.fe) == 1:
        out = demean(design.fe[0], stacked)
        iterations, gap = 1, 0.0
    else:
        first, second = design.fe
        out = stacked
        gap = float("inf")
        iterations = 0
        for iterations in range(1, max_iter + 1):
            updated = demean(second, demean(first, out))
            gap = float(np.max(np.abs(updated - out))) if updated.size else 0.0
            out = updated
            if gap < tol:
                break
        else:
            raise EstimationError(
                f"two-way fixed effects did not converge in {max_iter} iterations (last gap {gap:.3g})",
                diagnostics={"iterations": max_iter, "gap": gap, "tol": tol},
            )
    return replace(
        design,
        y=out[:, 0].copy(),
        X=out[:, 1:].copy(),
        absorbed=True,
        fe_iterations=iterations,
        fe_gap=gap,
        fe_group_means=means,
    )
