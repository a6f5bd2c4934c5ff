"""Render run outputs into figures and tables.

Everything here is derived purely from the files a run writes (curves.csv,
improvements.csv, correlations.csv, manifest.json), never from in-process
state, so reports can be deleted and regenerated byte for byte.

The trade-off chart is drawn with matplotlib and saved as SVG with a pinned
hash salt and no date metadata, which keeps the output stable across
regenerations.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import ConfigError, DataError
from .util import atomic_write_bytes, atomic_write_text, format_float

_SVG_RC = {
    "svg.hashsalt": "compatsweep",
    "svg.fonttype": "none",
    "figure.figsize": (7.0, 4.5),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


@dataclass(frozen=True)
class ReportPaths:
    tradeoff_svg: str
    tradeoff_data_csv: str
    improvements_md: str


def _read_csv(path: str) -> list[dict[str, str]]:
    if not os.path.exists(path):
        raise DataError(f"missing run output: {path}")
    with open(path, "r", encoding="utf-8", newline="") as handle:
        return list(csv.DictReader(handle))


def _read_manifest(run_dir: str) -> dict:
    path = os.path.join(run_dir, "manifest.json")
    if not os.path.exists(path):
        raise DataError(f"missing run output: {path}")
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def mean_test_curves(
    curve_rows: list[dict[str, str]], models: list[str]
) -> dict[str, list[dict]]:
    """Across-user mean test curve per model, from curves.csv rows.

    Per (model, user, lambda): mean over folds and inner folds of the
    non-skipped points; then per (model, lambda): mean over users. Matches
    the averaging the run itself reports.
    """
    per_user: dict[tuple[str, str, float], list[tuple[float, float]]] = {}
    for row in curve_rows:
        if row["eval_set"] != "test" or row["skipped_flag"] != "0":
            continue
        if row["model"] not in models:
            continue
        key = (row["model"], row["user_id"], float(row["lambda"]))
        per_user.setdefault(key, []).append(
            (float(row["compatibility"]), float(row["performance"]))
        )
    lambdas = sorted({lam for (_, _, lam) in per_user})
    out: dict[str, list[dict]] = {name: [] for name in models}
    for name in models:
        for lam in lambdas:
            user_means: list[tuple[float, float]] = []
            for (model, _, point_lam), pairs in per_user.items():
                if model != name or point_lam != lam:
                    continue
                user_means.append(
                    (
                        sum(p[0] for p in pairs) / len(pairs),
                        sum(p[1] for p in pairs) / len(pairs),
                    )
                )
            if not user_means:
                continue
            out[name].append(
                {
                    "lambda": lam,
                    "compatibility": sum(p[0] for p in user_means) / len(user_means),
                    "performance": sum(p[1] for p in user_means) / len(user_means),
                    "users": len(user_means),
                }
            )
    return out


def render_tradeoff_svg(
    series: dict[str, list[dict]], metric_label: str, path: str
) -> None:
    """One line per model over (compatibility, performance), lambda-ordered."""
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots()
        for name, points in series.items():
            if not points:
                continue
            ordered = sorted(points, key=lambda p: p["lambda"])
            ax.plot(
                [p["compatibility"] for p in ordered],
                [p["performance"] for p in ordered],
                marker="o",
                markersize=4,
                linewidth=1.5,
                label=name,
            )
        ax.set_xlabel("compatibility")
        ax.set_ylabel(metric_label)
        ax.set_title("Compatibility vs performance (test, mean over users)")
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        buffer = io.BytesIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
        plt.close(fig)
    atomic_write_bytes(path, buffer.getvalue())


def tradeoff_data_csv_text(series: dict[str, list[dict]]) -> str:
    lines = ["model,lambda,mean_compatibility,mean_performance,users"]
    for name, points in series.items():
        for p in sorted(points, key=lambda q: q["lambda"]):
            lines.append(
                f"{name},{format_float(p['lambda'])},{format_float(p['compatibility'])},"
                f"{format_float(p['performance'])},{p['users']}"
            )
    return "\n".join(lines) + "\n"


def _format_cell(mean: str, std: str) -> str:
    if mean == "":
        return ""
    if std == "":
        return f"{float(mean):.2f}"
    return f"{float(mean):.2f} ± {float(std):.2f}"


def improvements_markdown(
    improvement_rows: list[dict[str, str]],
    correlation_rows: list[dict[str, str]],
) -> str:
    """Markdown table: one row per user, then the two correlation rows.

    Columns mirror the improvements CSV: user, len, distance, one percent
    improvement column per model, and best_u. Cells show "mean ± std".
    """
    if not improvement_rows:
        raise DataError("improvements table is empty")
    header = list(improvement_rows[0].keys())
    columns = [c for c in header if c not in ("user", "len", "distance")
               and not c.endswith("_std")]
    lines = [
        "| user | len | distance | " + " | ".join(columns) + " |",
        "|" + "---|" * (3 + len(columns)),
    ]
    for row in improvement_rows:
        cells = [row["user"], row["len"], f"{float(row['distance']):.4f}"]
        for column in columns:
            cells.append(_format_cell(row[column], row.get(f"{column}_std", "")))
        lines.append("| " + " | ".join(cells) + " |")
    for row in correlation_rows:
        cells = [row["row"], "", ""]
        for column in columns:
            value = row.get(column, "")
            cells.append("" if value == "" else f"{float(value):.2f}")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_report(
    run_dir: str,
    out_dir: str | None = None,
    models: list[str] | None = None,
) -> ReportPaths:
    """Build all report files for one run directory.

    `models` filters the plotted series (empty or None = all models, in
    curves.csv appearance order); the improvements table is always complete.
    """
    out_dir = out_dir or run_dir
    manifest = _read_manifest(run_dir)
    curve_rows = _read_csv(os.path.join(run_dir, "curves.csv"))
    improvement_rows = _read_csv(os.path.join(run_dir, "improvements.csv"))
    correlation_rows = _read_csv(os.path.join(run_dir, "correlations.csv"))

    available: list[str] = []
    for row in curve_rows:
        if row["model"] not in available:
            available.append(row["model"])
    if models:
        unknown = [name for name in models if name not in available]
        if unknown:
            raise ConfigError(f"unknown models in selection: {unknown}")
        plotted = [name for name in available if name in models]
    else:
        plotted = available

    series = mean_test_curves(curve_rows, plotted)
    metric_label = manifest.get("config", {}).get("metric", "performance")

    os.makedirs(out_dir, exist_ok=True)
    paths = ReportPaths(
        tradeoff_svg=os.path.join(out_dir, "tradeoff.svg"),
        tradeoff_data_csv=os.path.join(out_dir, "tradeoff_data.csv"),
        improvements_md=os.path.join(out_dir, "improvements.md"),
    )
    render_tradeoff_svg(series, metric_label, paths.tradeoff_svg)
    atomic_write_text(paths.tradeoff_data_csv, tradeoff_data_csv_text(series))
    atomic_write_text(paths.improvements_md, improvements_markdown(improvement_rows, correlation_rows))
    return paths
