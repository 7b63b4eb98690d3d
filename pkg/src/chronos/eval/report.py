"""Accuracy tables, ablation deltas and error taxonomy."""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from typing import Any, Mapping, Sequence

from .benchmark import CATEGORY_ORDER

logger = logging.getLogger(__name__)

ERROR_CATEGORIES = ("retrieval_failure", "counting_arithmetic", "fabrication", "temporal", "other")


def _pct(correct: int, total: int) -> float | None:
    return round(100.0 * correct / total, 2) if total else None


def _accuracy(results: Sequence[Mapping[str, Any]]) -> dict[str, Any]:
    judged = [r for r in results if r.get("judge_available", True)]
    skipped = len(results) - len(judged)
    if skipped:
        logger.warning("%d results have no judgment and are excluded from accuracy", skipped)
    per_cat = {}
    for code in CATEGORY_ORDER:
        rows = [r for r in judged if r["category"] == code]
        correct = sum(1 for r in rows if r["correct"])
        per_cat[code] = {"correct": correct, "total": len(rows), "accuracy": _pct(correct, len(rows))}
    correct = sum(1 for r in judged if r["correct"])
    errors = Counter(r["error_category"] for r in judged if not r["correct"] and r.get("error_category"))
    return {
        "overall": {"correct": correct, "total": len(judged), "accuracy": _pct(correct, len(judged))},
        "categories": per_cat,
        "unjudged": skipped,
        "failed_runs": sum(1 for r in results if r.get("failed")),
        "errors": {e: errors.get(e, 0) for e in ERROR_CATEGORIES},
    }


def aggregate_report(results: Sequence[Mapping[str, Any]]) -> dict[str, Any]:
    """Group results by ablation label; deltas are taken against the ``full`` run."""
    if not results:
        raise ValueError("aggregate_report needs at least one result")
    groups: dict[str, list[Mapping[str, Any]]] = defaultdict(list)
    for r in results:
        groups[r.get("ablation", "full")].append(r)
    runs = {label: _accuracy(rows) for label, rows in groups.items()}
    report: dict[str, Any] = {"category_order": list(CATEGORY_ORDER), "runs": runs}
    base = runs.get("full")
    if base and len(runs) > 1:
        deltas = {}
        for label, acc in runs.items():
            if label == "full":
                continue
            row = {}
            for code in ("overall", *CATEGORY_ORDER):
                a = acc["overall"] if code == "overall" else acc["categories"][code]
                b = base["overall"] if code == "overall" else base["categories"][code]
                row[code] = (
                    round(a["accuracy"] - b["accuracy"], 2)
                    if a["accuracy"] is not None and b["accuracy"] is not None else None
                )
            deltas[label] = row
        report["deltas"] = deltas
    return report


def _cell(value: float | None, signed: bool = False) -> str:
    if value is None:
        return "-"
    return f"{value:+.2f}" if signed else f"{value:.2f}"


def format_report(report: Mapping[str, Any]) -> str:
    cols = list(report["category_order"])
    header = f"{'run':<32}" + "".join(f"{c:>9}" for c in cols) + f"{'overall':>10}{'n':>6}"
    lines = ["Accuracy (%)", header, "-" * len(header)]
    for label, acc in report["runs"].items():
        cells = "".join(f"{_cell(acc['categories'][c]['accuracy']):>9}" for c in cols)
        lines.append(f"{label:<32}{cells}{_cell(acc['overall']['accuracy']):>10}{acc['overall']['total']:>6}")
    denom = next(iter(report["runs"].values()))["categories"]
    lines.append(f"{'(questions per category)':<32}" + "".join(f"{denom[c]['total']:>9}" for c in cols))
    if report.get("deltas"):
        lines += ["", "Delta vs full (points)", header[: 32 + 9 * len(cols) + 10]]
        for label, row in report["deltas"].items():
            lines.append(f"{label:<32}" + "".join(f"{_cell(row[c], True):>9}" for c in cols)
                         + f"{_cell(row['overall'], True):>10}")
    lines += ["", "Errors"]
    for label, acc in report["runs"].items():
        parts = ", ".join(f"{k}={v}" for k, v in acc["errors"].items())
        lines.append(f"{label:<32}{parts}")
    return "\n".join(lines) + "\n"
