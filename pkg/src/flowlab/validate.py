from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import pandas as pd

from .errors import InputValidationError
from .paths import EXCEPTIONS_FILE, VALIDATION_FILE
from .utils.io import write_csv, write_json
from .utils.log import setup_logger

EXCEPTION_COLUMNS = [
    "table",
    "check_name",
    "severity",
    "row_selector",
    "details",
    "n_rows_affected",
    "sample",
]

MISSINGNESS_WARN_RATE = 0.01
POSITION_AUM_RTOL = 1e-6

def _sample_rows(df: pd.DataFrame, n: int = 3) -> str:
    if df.empty:
        return "[]"
    return json.dumps(df.head(n).astype(str).to_dict(orient="records"), ensure_ascii=True)

def _sample_values(values: list[Any], n: int = 3) -> str:
    return json.dumps([str(v) for v in values[:n]], ensure_ascii=True)

def validate_panel_frames(
    frames: dict[str, pd.DataFrame],
    calendar: pd.DatetimeIndex | None = None,
    report_dir: str | Path | None = None,
    logger_name: str = "flowlab.validate",
) -> dict[str, Any]:
    """Run the input check ledger over raw securities/funds/holdings tables.

    Any failed ERROR check raises InputValidationError after the reports are written.
    """
    logger = setup_logger(logger_name)
    securities = frames["securities"]
    funds = frames["funds"]
    holdings = frames["holdings"]
    logger.info("validate_start", extra={name: int(len(frame)) for name, frame in frames.items()})

    checks: list[dict[str, Any]] = []
    exceptions: list[dict[str, Any]] = []

    def add_check(
        table: str,
        name: str,
        passed: bool,
        severity: str,
        message: str,
        metrics: dict[str, Any],
        *,
        row_selector: str = "all",
        n_rows_affected: int = 0,
        sample: str = "[]",
    ) -> None:
        checks.append(
            {
                "table": table,
                "name": name,
                "passed": bool(passed),
                "severity": severity,
                "message": message,
                "metrics": metrics,
            }
        )
        if not passed:
            exceptions.append(
                {
                    "table": table,
                    "check_name": name,
                    "severity": severity,
                    "row_selector": row_selector,
                    "details": message,
                    "n_rows_affected": int(n_rows_affected),
                    "sample": sample,
                }
            )

    # 1. non_empty
    for table, frame in frames.items():
        add_check(table, "non_empty", len(frame) > 0, "ERROR", "Table must contain at least one row.", {"row_count": int(len(frame))})

    # 2. unique_key
    keys = {
        "securities": ["date", "security_id"],
        "funds": ["date", "fund_id"],
        "holdings": ["date", "fund_id", "security_id"],
    }
    for table, key_cols in keys.items():
        frame = frames[table]
        dup = frame[frame.duplicated(subset=key_cols, keep=False)]
        add_check(
            table,
            "unique_key",
            dup.empty,
            "ERROR",
            f"Duplicate ({', '.join(key_cols)}) keys found.",
            {"duplicate_count": int(len(dup))},
            row_selector="duplicated",
            n_rows_affected=len(dup),
            sample=_sample_rows(dup[key_cols]),
        )

    # 3. value ranges
    ranges = [
        ("securities", "ret_above_minus_one", securities["ret"].notna() & ~(securities["ret"] > -1.0), "ERROR", "ret must exceed -1."),
        ("securities", "volume_nonnegative", securities["volume_usd"] < 0, "ERROR", "volume_usd must be >= 0."),
        ("securities", "market_cap_positive", securities["market_cap"].notna() & ~(securities["market_cap"] > 0), "ERROR", "market_cap must be > 0 when present."),
        ("funds", "nav_price_positive", ~(funds["nav_price"] > 0), "WARN", "Rows with non-positive nav_price are rejected."),
        ("funds", "shares_nonnegative", funds["shares_outstanding"] < 0, "ERROR", "shares_outstanding must be >= 0."),
        ("holdings", "long_only", holdings["dollar_position"] < 0, "ERROR", "dollar_position must be >= 0 (no short positions)."),
    ]
    for table, name, bad, severity, message in ranges:
        frame = frames[table]
        add_check(
            table,
            name,
            not bool(bad.any()),
            severity,
            message,
            {"violations": int(bad.sum())},
            row_selector=name,
            n_rows_affected=int(bad.sum()),
            sample=_sample_rows(frame.loc[bad]),
        )

    # 4. referential integrity
    security_keys = pd.MultiIndex.from_frame(securities[["date", "security_id"]])
    fund_keys = pd.MultiIndex.from_frame(funds[["date", "fund_id"]])
    missing_security = ~pd.MultiIndex.from_frame(holdings[["date", "security_id"]]).isin(security_keys)
    missing_fund = ~pd.MultiIndex.from_frame(holdings[["date", "fund_id"]]).isin(fund_keys)
    for name, bad, message in (
        ("holdings_reference_security", missing_security, "Holdings must reference an existing security-day."),
        ("holdings_reference_fund", missing_fund, "Holdings must reference an existing fund-day."),
    ):
        add_check(
            "holdings",
            name,
            not bool(bad.any()),
            "ERROR",
            message,
            {"violations": int(bad.sum())},
            row_selector=name,
            n_rows_affected=int(bad.sum()),
            sample=_sample_rows(holdings.loc[bad]),
        )

    # 5. positions reconcile with fund AUM
    fund_aum = (
        funds.assign(aum=funds["nav_price"] * funds["shares_outstanding"])
        .drop_duplicates(["date", "fund_id"])
        .set_index(["date", "fund_id"])["aum"]
    )
    position_sums = holdings.groupby(["date", "fund_id"])["dollar_position"].sum()
    aligned = pd.concat({"positions": position_sums, "aum": fund_aum}, axis=1, join="inner")
    gap = (aligned["positions"] - aligned["aum"]).abs()
    unreconciled = aligned.loc[gap > POSITION_AUM_RTOL * aligned["aum"].abs()]
    add_check(
        "holdings",
        "positions_sum_to_aum",
        unreconciled.empty,
        "WARN",
        f"Dollar positions per (date, fund_id) should sum to nav_price x shares_outstanding within {POSITION_AUM_RTOL:g} relative.",
        {"violations": int(len(unreconciled))},
        row_selector="positions_sum_to_aum",
        n_rows_affected=len(unreconciled),
        sample=_sample_rows(unreconciled.reset_index()),
    )

    # 6. calendar alignment
    if calendar is not None:
        cal = pd.DatetimeIndex(calendar)
        sorted_unique = bool(cal.is_monotonic_increasing and cal.is_unique)
        add_check("calendar", "calendar_sorted_unique", sorted_unique, "ERROR", "Calendar dates must be sorted and unique.", {"n_dates": int(len(cal))})
        for table, frame in frames.items():
            outside = sorted(set(frame["date"]) - set(cal))
            add_check(
                table,
                "dates_on_calendar",
                not outside,
                "ERROR",
                "Every date must be a declared business day.",
                {"n_dates_outside": len(outside)},
                row_selector="date",
                n_rows_affected=int(frame["date"].isin(outside).sum()),
                sample=_sample_values(outside),
            )
        uncovered = sorted(set(cal) - set(securities["date"]))
        add_check(
            "securities",
            "calendar_gap_free",
            not uncovered,
            "ERROR",
            "Every calendar day must carry security data.",
            {"n_uncovered": len(uncovered)},
            row_selector="date",
            sample=_sample_values(uncovered),
        )

    # 7. missingness
    for table, columns in (
        ("securities", ["ret", "volume_usd", "close"]),
        ("funds", ["nav_price", "shares_outstanding"]),
        ("holdings", ["dollar_position"]),
    ):
        frame = frames[table]
        rates = {col: float(frame[col].isna().mean()) if len(frame) else 0.0 for col in columns}
        violations = [col for col, rate in rates.items() if rate > MISSINGNESS_WARN_RATE]
        add_check(
            table,
            "missingness",
            not violations,
            "WARN",
            f"Missingness for key columns should be <= {MISSINGNESS_WARN_RATE:.0%}.",
            {"missing_rates": rates, "violations": violations},
            row_selector="missing",
            n_rows_affected=int(frame[columns].isna().sum().sum()),
            sample=_sample_values(violations),
        )

    checks_passed = sum(1 for check in checks if check["passed"])
    errors_failed = sum(1 for check in checks if not check["passed"] and check["severity"] == "ERROR")
    warns_failed = sum(1 for check in checks if not check["passed"] and check["severity"] == "WARN")
    status = "pass" if errors_failed == 0 else "fail"

    result: dict[str, Any] = {
        "status": status,
        "checks_passed": checks_passed,
        "errors_failed": errors_failed,
        "warns_failed": warns_failed,
        "row_counts": {name: int(len(frame)) for name, frame in frames.items()},
        "checks": checks,
        "output_paths": {},
    }

    if report_dir is not None:
        validation_path = Path(report_dir) / VALIDATION_FILE
        exceptions_path = Path(report_dir) / EXCEPTIONS_FILE
        write_json(validation_path, {key: value for key, value in result.items() if key != "output_paths"})
        write_csv(exceptions_path, pd.DataFrame(exceptions, columns=EXCEPTION_COLUMNS))
        result["output_paths"] = {"validation": validation_path, "exceptions": exceptions_path}

    for check in checks:
        if not check["passed"] and check["severity"] == "WARN":
            logger.warning("check_warn", extra={"table": check["table"], "check": check["name"], "metrics": check["metrics"]})
    logger.info("validate_end", extra={"status": status, "errors_failed": errors_failed, "warns_failed": warns_failed})

    if status == "fail":
        failed = [f"{c['table']}.{c['name']}" for c in checks if not c["passed"] and c["severity"] == "ERROR"]
        raise InputValidationError(f"Panel validation failed: {', '.join(failed)}")
    return result
