from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from ..errors import InputValidationError

CANONICAL_ORDER = ("fund_id", "date", "security_id")

@dataclass(frozen=True, eq=False)
class PanelDesign:
    """Response, named regressors, fixed-effect and cluster codes for one estimation sample."""

    y: np.ndarray
    X: np.ndarray
    columns: tuple[str, ...]
    fe: tuple[np.ndarray, ...] = ()
    fe_names: tuple[str, ...] = ()
    clusters: tuple[np.ndarray, ...] = ()
    cluster_names: tuple[str, ...] = ()
    entity: np.ndarray | None = None
    time: np.ndarray | None = None
    response: str = "y"
    absorbed: bool = False
    fe_iterations: int = 0
    fe_gap: float = 0.0
    fe_group_means: dict[str, np.ndarray] = field(default_factory=dict)
    raw_tss: float = float("nan")

    def __post_init__(self) -> None:
        if len(set(self.columns)) != len(self.columns):
            raise InputValidationError(f"regressor names must be unique: {self.columns}")
        if self.X.shape != (self.y.size, len(self.columns)):
            raise InputValidationError("regressor matrix does not match response and column names")
        if not (np.isfinite(self.y).all() and np.isfinite(self.X).all()):
            raise InputValidationError("design contains missing values after assembly")
        if len(self.fe) > 2 or len(self.clusters) > 2:
            raise InputValidationError("at most two fixed-effect and two cluster dimensions are supported")

    @property
    def n_obs(self) -> int:
        return int(self.y.size)

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.columns.index(name)]

    @staticmethod
    def from_frame(
        frame: pd.DataFrame,
        response: str,
        regressors: Sequence[str],
        *,
        fe: Sequence[str] = (),
        cluster: Sequence[str] = (),
        entity: str | None = "fund_id",
        time: str | None = "date",
        constant: bool | None = None,
    ) -> "PanelDesign":
        """Canonically sort, drop incomplete rows listwise and factorize FE/cluster keys.

        A constant is added when no fixed effect is absorbed unless `constant` says otherwise.
        """
        order = [c for c in CANONICAL_ORDER if c in frame.columns]
        needed = list(dict.fromkeys([response, *regressors, *fe, *cluster, *order]))
        missing = [c for c in needed if c not in frame.columns]
        if missing:
            raise InputValidationError(f"design columns missing from frame: {', '.join(missing)}")
        data = frame.loc[:, needed]
        if order:
            data = data.sort_values(order, kind="mergesort")
        numeric = [response, *regressors]
        complete = np.isfinite(data[numeric].to_numpy(dtype=float)).all(axis=1) & data[[*fe, *cluster]].notna().all(axis=1).to_numpy()
        data = data.loc[complete]
        y = data[response].to_numpy(dtype=float)
        X = data[list(regressors)].to_numpy(dtype=float)
        columns = tuple(regressors)
        if constant is None:
            constant = len(fe) == 0
        if constant:
            X = np.column_stack([np.ones(len(data)), X])
            columns = ("const", *columns)
        fe_codes = tuple(pd.factorize(data[name], sort=True)[0] for name in fe)
        cluster_codes = tuple(pd.factorize(data[name], sort=True)[0] for name in cluster)
        return PanelDesign(
            y=y,
            X=X.reshape(len(data), len(columns)),
            columns=columns,
            fe=fe_codes,
            fe_names=tuple(fe),
            clusters=cluster_codes,
            cluster_names=tuple(cluster),
            entity=data[entity].to_numpy() if entity and entity in data.columns else None,
            time=data[time].to_numpy() if time and time in data.columns else None,
            response=response,
            raw_tss=float(((y - y.mean()) ** 2).sum()) if y.size else float("nan"),
        )
