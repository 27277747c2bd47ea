from __future__ import annotations

import argparse
import csv
import json
from pathlib import Path

import pandas as pd

def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Summarize a pipeline run directory.")
    parser.add_argument("out_dir", type=str, help="Directory holding run_summary.json")
    return parser.parse_args()

def _headline(fit_path: Path, name: str) -> tuple[float, float]:
    if not fit_path.exists():
        return float("nan"), float("nan")
    fit = json.loads(fit_path.read_text(encoding="utf-8"))
    for row in fit.get("coefficients", []):
        if row["name"] == name:
            return float(row["estimate"]), float(row["se"])
    return float("nan"), float("nan")

def main() -> int:
    args = parse_args()
    out_dir = Path(args.out_dir)
    summary_path = out_dir / "run_summary.json"
    validation_path = out_dir / "validation.json"
    exceptions_path = out_dir / "exceptions.csv"

    missing = [str(path) for path in (summary_path, validation_path) if not path.exists()]
    if missing:
        print("Missing required input(s):")
        for path in missing:
            print(f"- {path}")
        return 1

    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    validation = json.loads(validation_path.read_text(encoding="utf-8"))
    results = summary.get("results", {})
    theta_hat, theta_se = _headline(out_dir / "fund_impact_fit.json", "x_impact")

    ratio_mean = float("nan")
    ratio_path = out_dir / "ponzi_ratio.csv"
    if ratio_path.exists():
        ratios = pd.read_csv(ratio_path)
        if "ratio_all" in ratios.columns:
            ratio_mean = float(ratios["ratio_all"].mean())

    n_exceptions = len(pd.read_csv(exceptions_path)) if exceptions_path.exists() else 0
    row = {
        "status": summary.get("status", "unknown"),
        "validation_status": validation.get("status", "unknown"),
        "n_exceptions": n_exceptions,
        "theta_hat": theta_hat,
        "theta_se": theta_se,
        "beta1": results.get("beta1", float("nan")),
        "beta2": results.get("beta2", float("nan")),
        "wald_pvalue": results.get("wald_pvalue", float("nan")),
        "mean_ponzi_ratio": ratio_mean,
        "n_runup_events": results.get("n_runup_events", 0),
        "n_bubble_events": results.get("n_bubble_events", 0),
    }

    md_path = out_dir / "run_report.md"
    csv_path = out_dir / "run_report.csv"
    failed = [stage for stage, status in summary.get("stage_statuses", {}).items() if status != "success"]
    lines = [f"# Run Report {out_dir}", ""]
    lines += [f"- {key}: {value}" for key, value in row.items()]
    lines += ["", f"- failed_stages: {', '.join(failed) if failed else 'none'}", "", "Artifacts:"]
    lines += [f"- {stage}: {outputs}" for stage, outputs in sorted(summary.get("outputs", {}).items())]
    md_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    with csv_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(row))
        writer.writeheader()
        writer.writerow(row)

    print(f"Wrote {md_path}")
    print(f"Wrote {csv_path}")
    return 0

if __name__ == "__main__":
    raise SystemExit(main())
