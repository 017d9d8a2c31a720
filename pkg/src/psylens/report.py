"""Render a run's metrics document into human tables and machine CSV.

Output is a pure function of the run directory: reading the same metrics
document always produces byte-identical tables, so report directories can be
diffed in CI.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Mapping

from .errors import ParseError

METHOD_LABELS = {
    "zero_shot": "Zero-shot",
    "zero_shot_rag": "Zero-shot (with RAG)",
    "few_shot": "In-context learning",
    "fine_tuned": "Fine-tuning",
}

VARIANT_LABELS = {
    "experience": "Strs",
    "symptom": "Symp",
    "combined": "Strs+Symp",
}


def _fmt(value: float | None, digits: int = 3) -> str:
    if value is None:
        return "-"
    return f"{value:.{digits}f}"


def _fmt_mean_sd(cell: Mapping[str, Any] | None, digits: int = 3) -> str:
    if cell is None or cell.get("mean") is None:
        return "-"
    mean = f"{cell['mean']:.{digits}f}"
    if cell.get("sd") is None:
        return mean
    return f"{mean} ({cell['sd']:.{digits}f})"


def _table(rows: list[list[str]]) -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for r, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if r == 0:
            lines.append("  ".join("-" * widths[i] for i in range(len(row))))
    return "\n".join(lines) + "\n"


def _bin_label(lo: float, hi: float) -> str:
    if math.isinf(hi):
        return f"d >= {lo:g}"
    return f"{lo:g} <= d < {hi:g}"


def render_distance_histogram(metrics: Mapping[str, Any]) -> str:
    """Distance-range frequency table per config, with the d < 20 headline."""
    sections = []
    for label, config in metrics["configs"].items():
        histogram = config["sections"].get("histogram")
        if histogram is None:
            continue
        rows = [["Range", "Frequency"]]
        for (lo, hi), count in zip(histogram["bins"], histogram["counts"]):
            rows.append([_bin_label(lo, hi), str(count)])
        headline = (
            f"d < 20: {histogram['under_20']} out of {histogram['total']} positive segments"
        )
        sections.append(
            f"Recall mid-token distance, {_method(config)} [{label}] (trial 0)\n"
            + _table(rows)
            + headline
            + "\n"
        )
    if not sections:
        return "No section-distance data in this run.\n"
    return "\n".join(sections)


def _method(config: Mapping[str, Any]) -> str:
    return METHOD_LABELS.get(config["mode"], config["mode"])


def render_symptom_table(metrics: Mapping[str, Any], scope: str = "all") -> str:
    """Method-by-metric table of symptom estimation scores, mean (SD)."""
    rows = [["Model", "Method", "Accuracy", "Precision (PPV)", "NPV", "Recall", "F1-score"]]
    for label, config in metrics["configs"].items():
        block = config["symptoms"][scope if scope in ("all", "positive_only") else "all"]
        rows.append(
            [
                config["model_id"],
                f"{_method(config)} [{label}]",
                _fmt_mean_sd(block["accuracy"]),
                _fmt_mean_sd(block["precision"]),
                _fmt_mean_sd(config["symptoms"]["npv"]),
                _fmt_mean_sd(block["recall"]),
                _fmt_mean_sd(block["f1"]),
            ]
        )
    scope_note = "all segments" if scope == "all" else "positive segments only"
    return f"Symptom estimation ({scope_note}), mean (SD) across trials\n" + _table(rows)


def render_summary_table(metrics: Mapping[str, Any]) -> str:
    """Summary quality per variant: G-Eval dimensions plus BERTScore F1."""
    rows = [
        [
            "Summaries",
            "Coherence",
            "Consistency",
            "Fluency",
            "Relevance",
            "Overall",
            "Overall (dim means)",
            "BERTScore F1",
        ]
    ]
    found = False
    for label, config in metrics["configs"].items():
        summaries = config.get("summaries") or {}
        for variant, block in summaries.items():
            found = True
            geval = block["geval"]
            name = VARIANT_LABELS.get(variant, variant)
            if config["mode"] == "zero_shot_rag":
                name = f"{name} (with RAG)"
            rows.append(
                [
                    f"{name} [{label}]",
                    _fmt_mean_sd(geval["coherence"], 2),
                    _fmt_mean_sd(geval["consistency"], 2),
                    _fmt_mean_sd(geval["fluency"], 2),
                    _fmt_mean_sd(geval["relevance"], 2),
                    _fmt_mean_sd(geval["overall"], 2),
                    _fmt(geval.get("overall_from_dimension_means"), 2),
                    _fmt_mean_sd(block["bertscore_f1"], 2),
                ]
            )
    if not found:
        return "No summary evaluations in this run.\n"
    return "Summary evaluation, mean (SD) across trials\n" + _table(rows)


def render_scope_comparison(metrics: Mapping[str, Any]) -> str:
    """Symptom scores on all vs positive segments, plus section-distance stats."""
    rows = [
        [
            "Method",
            "Task",
            "All segments",
            "Positive segments",
            "Absence ratio",
        ]
    ]
    for label, config in metrics["configs"].items():
        symptoms = config["symptoms"]
        rows.append(
            [
                f"{_method(config)} [{label}]",
                "Symptom estimation (F1)",
                _fmt_mean_sd(symptoms["all"]["f1"]),
                _fmt_mean_sd(symptoms["positive_only"]["f1"]),
                "-",
            ]
        )
        sections = config["sections"]
        rows.append(
            [
                f"{_method(config)} [{label}]",
                "Section estimation (mean d)",
                "-",
                _fmt_mean_sd(sections["mean_d"], 1),
                _fmt_mean_sd(sections["absence_ratio"]),
            ]
        )
    return (
        "Scope comparison: all segments vs positive segments\n"
        "(section distance is defined only for positive segments;\n"
        " infinite distances are excluded from mean d and reported as the absence ratio)\n"
        + _table(rows)
    )


def metrics_csv(metrics: Mapping[str, Any]) -> str:
    """Flat CSV of every aggregate cell for downstream plotting."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["config", "section", "scope_or_variant", "metric", "mean", "sd"])

    def emit(config: str, section: str, scope: str, metric: str, cell: Any) -> None:
        if cell is None:
            return
        if isinstance(cell, Mapping):
            writer.writerow([config, section, scope, metric, cell.get("mean"), cell.get("sd")])
        else:
            writer.writerow([config, section, scope, metric, cell, ""])

    for label, config in metrics["configs"].items():
        for scope in ("all", "positive_only"):
            block = config["symptoms"][scope]
            for metric in ("accuracy", "precision", "recall", "f1"):
                emit(label, "symptoms", scope, metric, block[metric])
        emit(label, "symptoms", "all", "npv", config["symptoms"]["npv"])
        sections = config["sections"]
        emit(label, "sections", "positive_only", "mean_d", sections["mean_d"])
        emit(label, "sections", "positive_only", "absence_ratio", sections["absence_ratio"])
        histogram = sections.get("histogram")
        if histogram:
            for (lo, hi), count in zip(histogram["bins"], histogram["counts"]):
                emit(label, "histogram", _bin_label(lo, hi), "count", count)
            emit(label, "histogram", "d<20", "count", histogram["under_20"])
        for variant, block in (config.get("summaries") or {}).items():
            geval = block["geval"]
            for metric in ("coherence", "consistency", "fluency", "relevance", "overall"):
                emit(label, "summaries", variant, f"geval_{metric}", geval[metric])
            emit(
                label, "summaries", variant,
                "geval_overall_from_dimension_means",
                geval.get("overall_from_dimension_means"),
            )
            emit(label, "summaries", variant, "bertscore_f1", block["bertscore_f1"])
    return buffer.getvalue()


def write_reports(run_dir: str | Path) -> Path:
    """Render all report files from the run's metrics document."""
    run_dir = Path(run_dir)
    metrics_path = run_dir / "reports" / "metrics.json"
    if not metrics_path.exists():
        raise ParseError(f"{metrics_path}: metrics document not found; run the experiment first")
    metrics = json.loads(metrics_path.read_text(encoding="utf-8"))
    reports_dir = run_dir / "reports"
    (reports_dir / "distance_histogram.txt").write_text(
        render_distance_histogram(metrics), encoding="utf-8"
    )
    (reports_dir / "symptom_metrics.txt").write_text(
        render_symptom_table(metrics, "all"), encoding="utf-8"
    )
    (reports_dir / "symptom_metrics_positive.txt").write_text(
        render_symptom_table(metrics, "positive_only"), encoding="utf-8"
    )
    (reports_dir / "summary_eval.txt").write_text(
        render_summary_table(metrics), encoding="utf-8"
    )
    (reports_dir / "scope_comparison.txt").write_text(
        render_scope_comparison(metrics), encoding="utf-8"
    )
    (reports_dir / "metrics.csv").write_text(metrics_csv(metrics), encoding="utf-8")
    return reports_dir
