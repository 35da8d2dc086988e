"""Aggregate completed run directories into summary and plot-ready CSVs."""

import csv
import os

from .accounting import read_budget_report
from .config import load_config
from .errors import ReportError


def _final_test_acc(metrics_path):
    with open(metrics_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ReportError(f"empty metrics file {metrics_path}")
    value = rows[-1]["test_acc"]
    return float(value) if value else None


def summarize_run(run_dir):
    """One summary row for a completed run directory."""
    required = {
        "config": os.path.join(run_dir, "config.txt"),
        "metrics": os.path.join(run_dir, "metrics.csv"),
        "budget": os.path.join(run_dir, "budget.json"),
    }
    missing = [p for p in required.values() if not os.path.exists(p)]
    if missing:
        raise ReportError(f"missing artifacts: {', '.join(missing)}")
    cfg = load_config(required["config"])
    budget = read_budget_report(required["budget"])
    return {
        "run_dir": run_dir,
        "query_count": cfg["query.count"],
        "noise_scale": 2.0 / cfg["query.eps0"],
        "eps_total": budget["eps_total"],
        "method": budget["method"],
        "test_acc": _final_test_acc(required["metrics"]),
    }


def emit_report(run_dirs, out_dir):
    """Summary plus accuracy-vs-queries and budget-vs-queries curves."""
    os.makedirs(out_dir, exist_ok=True)
    rows = [summarize_run(d) for d in run_dirs]
    fields = ["run_dir", "query_count", "noise_scale", "eps_total", "method", "test_acc"]
    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    by_queries = sorted(rows, key=lambda r: r["query_count"])
    for name, ycol in (("accuracy_vs_queries", "test_acc"), ("budget_vs_queries", "eps_total")):
        with open(os.path.join(out_dir, f"{name}.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["query_count", ycol])
            for r in by_queries:
                writer.writerow([r["query_count"], r[ycol]])
    return summary_path
