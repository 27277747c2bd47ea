from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, get_type_hints

from scipy import stats

from .errors import InputValidationError, PanelIOError

SAMPLES = ("all", "active", "passive")
EXPOSURES = ("current", "lagged")
SUPPLIES = ("volume", "market_cap")
AGGREGATIONS = ("linear", "outer_power")
CHASE_MODES = ("observed", "fundamental")
LONG_RUN_FORMULAS = ("discrete", "printed")
RANKING_WINDOWS = ("runup", "history")

def threads_from_env(default: int = 1) -> int:
    raw = os.environ.get("FLOWLAB_THREADS", "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError as exc:
        raise InputValidationError(f"FLOWLAB_THREADS must be an integer, got {raw!r}") from exc
    return max(1, value)

def _require(condition: bool, message: str) -> None:
    if not condition:
        raise InputValidationError(message)

@dataclass(frozen=True)
class RunConfig:
    subcommand: str = ""
    panel_dir: str = "data/panel"
    out_dir: str = "data/out"
    calendar_path: str = ""
    baskets_path: str = ""

    eta: float = 0.5
    theta: float = 0.78
    decay: tuple[float, float, float] | None = None
    max_lag: int = 40
    exposure: str = "current"
    long_run_formula: str = "discrete"

    supply: str = "volume"
    vol_prefactor: bool = True
    aggregation: str = "linear"

    lambda_beta: float = 0.01
    chase_lags: int = 200
    chase_flow_lags: int = 200
    impact_flow_lags: int = 5
    fe_tol: float = 1e-8

    winsorize: bool = False
    winsor_lower: float = 0.01
    winsor_upper: float = 0.99

    sample: str = "all"
    min_aum: float = 0.0
    top_liquidity_n: int = 0

    @staticmethod
    def load(config_path: str) -> "RunConfig":
        if not config_path:
            return RunConfig()
        path = Path(config_path)
        if not path.exists():
            raise PanelIOError(f"Run config not found: {path}")
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputValidationError(f"{path.name}: invalid JSON ({exc})") from exc
        if payload.get("decay") is not None:
            payload["decay"] = tuple(float(v) for v in payload["decay"])
        known = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(payload) - known)
        _require(not unknown, f"{path.name}: unknown keys {', '.join(unknown)}")
        return RunConfig(**payload).validate()

    def override(self, **changes: Any) -> "RunConfig":
        """Apply CLI overrides; `None` means the flag was not given."""
        present = {key: value for key, value in changes.items() if value is not None}
        return replace(self, **present).validate()

    def validate(self) -> "RunConfig":
        _require(0.0 < self.eta <= 1.0, f"eta must lie in (0, 1], got {self.eta}")
        _require(self.theta >= 0.0, f"theta must be >= 0, got {self.theta}")
        _require(self.max_lag >= 1, f"max_lag must be >= 1, got {self.max_lag}")
        if self.decay is not None:
            _require(len(self.decay) == 3, "decay must be theta0,theta1,lambda_theta")
            _require(self.decay[2] > 0.0, f"lambda_theta must be > 0, got {self.decay[2]}")
        _require(self.lambda_beta >= 0.0, f"lambda_beta must be >= 0, got {self.lambda_beta}")
        for name in ("chase_lags", "chase_flow_lags", "impact_flow_lags", "top_liquidity_n"):
            _require(getattr(self, name) >= 0, f"{name} must be >= 0")
        _require(
            0.0 <= self.winsor_lower < self.winsor_upper <= 1.0,
            f"winsorization bounds must satisfy 0 <= lower < upper <= 1, got ({self.winsor_lower}, {self.winsor_upper})",
        )
        _require(self.min_aum >= 0.0, "min_aum must be >= 0")
        _require(self.fe_tol > 0.0, "fe_tol must be > 0")
        _require(self.sample in SAMPLES, f"sample must be one of {SAMPLES}")
        _require(self.exposure in EXPOSURES, f"exposure must be one of {EXPOSURES}")
        _require(self.supply in SUPPLIES, f"supply must be one of {SUPPLIES}")
        _require(self.aggregation in AGGREGATIONS, f"aggregation must be one of {AGGREGATIONS}")
        _require(self.long_run_formula in LONG_RUN_FORMULAS, f"long_run_formula must be one of {LONG_RUN_FORMULAS}")
        return self

@dataclass(frozen=True)
class SimConfig:
    """Synthetic market settings, read from a `key = value` text file."""

    n_funds: int = 100
    n_securities: int = 100
    n_days: int = 500
    burn_in: int = 60
    seed: int = 42
    start_date: str = "2015-01-02"

    # impact truth; theta is the contemporaneous coefficient theta0
    theta: float = 0.78
    eta: float = 0.5
    theta1: float = 0.0
    lambda_theta: float = 0.323
    max_lag: int = 40

    # return chasing truth
    chase_beta: float = 0.0
    chase_lambda: float = 0.05
    chase_lags: int = 200
    chase_mode: str = "observed"

    n_factors: int = 1
    loading_scale: float = 1.0
    factor_vol: float = 0.008
    idio_vol_median: float = 0.015
    idio_vol_dispersion: float = 0.3

    flow_vol: float = 0.01
    flow_drift: float = 0.0

    volume_median: float = 5.0e7
    volume_dispersion: float = 1.0
    turnover: float = 0.005
    aum_median: float = 1.5e8
    aum_dispersion: float = 1.2
    min_holdings: int = 5
    max_holdings: int = 50
    concentration_min: float = 0.3
    concentration_max: float = 5.0
    active_fraction: float = 0.3
    initial_nav: float = 25.0

    @staticmethod
    def load(config_path: str) -> "SimConfig":
        path = Path(config_path)
        if not path.exists():
            raise PanelIOError(f"Simulation config not found: {path}")
        hints = get_type_hints(SimConfig)
        payload: dict[str, Any] = {}
        for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputValidationError(f"{path.name}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in hints:
                raise InputValidationError(f"{path.name}:{lineno}: unknown key '{key}'")
            payload[key] = _coerce(hints[key], value, f"{path.name}:{lineno}")
        return SimConfig(**payload).validate()

    @property
    def decay(self) -> tuple[float, float, float] | None:
        if self.theta1 == 0.0:
            return None
        return (self.theta, self.theta1, self.lambda_theta)

    def flow_exceedance_probability(self) -> float:
        """P(|f| >= 1) implied by the Gaussian flow noise alone."""
        return float(2.0 * stats.norm.sf((1.0 - abs(self.flow_drift)) / self.flow_vol))

    def validate(self) -> "SimConfig":
        _require(self.n_funds >= 1 and self.n_securities >= 1, "need at least one fund and one security")
        _require(self.n_days >= 1, "n_days must be >= 1")
        _require(self.burn_in >= 31, "burn_in must cover the 30-day volatility minimum (>= 31)")
        _require(0 <= self.seed < 2**64, "seed must be a 64-bit unsigned integer")
        _require(0.0 < self.eta <= 1.0, "eta must lie in (0, 1]")
        _require(self.theta >= 0.0, "theta must be >= 0")
        _require(self.lambda_theta > 0.0, "lambda_theta must be > 0")
        _require(self.max_lag >= 1, "max_lag must be >= 1")
        _require(self.chase_lambda >= 0.0 and self.chase_lags >= 0, "chasing kernel must be non-negative")
        _require(self.chase_mode in CHASE_MODES, f"chase_mode must be one of {CHASE_MODES}")
        for name in ("factor_vol", "idio_vol_median", "flow_vol", "volume_median", "aum_median", "turnover", "initial_nav"):
            _require(getattr(self, name) > 0.0, f"{name} must be > 0")
        _require(self.n_factors >= 0, "n_factors must be >= 0")
        _require(1 <= self.min_holdings <= self.max_holdings, "need 1 <= min_holdings <= max_holdings")
        _require(0.0 < self.concentration_min <= self.concentration_max, "bad concentration spectrum")
        _require(0.0 <= self.active_fraction <= 1.0, "active_fraction must lie in [0, 1]")
        probability = self.flow_exceedance_probability()
        _require(
            probability <= 0.01,
            f"flow settings imply |f| >= 1 with probability {probability:.3g} > 1%",
        )
        return self

def _coerce(kind: Any, value: str, where: str) -> Any:
    try:
        if kind is bool:
            lowered = value.lower()
            if lowered not in {"true", "false", "1", "0", "yes", "no"}:
                raise ValueError(value)
            return lowered in {"true", "1", "yes"}
        if kind is int:
            try:
                return int(value)
            except ValueError:
                number = float(value)
            if not number.is_integer():
                raise ValueError(value)
            return int(number)
        if kind is float:
            number = float(value)
            if not math.isfinite(number):
                raise ValueError(value)
            return number
        return value
    except ValueError as exc:
        raise InputValidationError(f"{where}: cannot parse {value!r} as {getattr(kind, '__name__', kind)}") from exc
