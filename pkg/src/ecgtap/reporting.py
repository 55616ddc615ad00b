"""Report emission: JSON, CSV tables, and SVG figures.

Everything is written with fixed formatting so identical inputs give
byte-identical files; the SVGs are assembled by hand for the same reason.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .evaluation import ConfigurationResult, EvalReport


def write_report_json(report: EvalReport, path: str | Path) -> None:
    text = json.dumps(report.to_json_dict(), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def best_configuration(report: EvalReport) -> ConfigurationResult:
    return report.configuration(report.best_name)


def write_class_table_csv(report: EvalReport, path: str | Path) -> None:
    """Per-class precision/recall/F1 of the best configuration."""
    best = best_configuration(report)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Class", "Precision", "Recall", "F1"])
        for cls, m in zip(report.classes, best.metrics.per_class):
            writer.writerow([cls, f"{m.precision:.2f}", f"{m.recall:.2f}", f"{m.f1:.2f}"])


def write_comparison_table_csv(report: EvalReport, path: str | Path) -> None:
    """Approach comparison: the two baselines plus the best tap row."""
    rows: list[ConfigurationResult] = []
    for name in ("raw-1d", "spectrogram-flat"):
        try:
            rows.append(report.configuration(name))
        except KeyError:
            pass
    rows.append(best_configuration(report))
    n_classes = len(report.classes)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["Approach", "Classes", "Instances", "Precision", "Recall", "Accuracy", "F1"]
        )
        for cfg in rows:
            m = cfg.metrics
            writer.writerow(
                [
                    cfg.name,
                    n_classes,
                    report.n_instances,
                    f"{m.macro_precision:.2f}",
                    f"{m.macro_recall:.2f}",
                    f"{m.accuracy:.2f}",
                    f"{m.macro_f1:.2f}",
                ]
            )


def _svg_header(width: int, height: int) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]


def write_accuracy_svg(report: EvalReport, path: str | Path) -> None:
    """Bar chart of per-layer accuracy, one bar group per tap."""
    taps: dict[int, dict[bool, float]] = {}
    for cfg in report.configurations:
        if cfg.kind == "tap":
            taps.setdefault(cfg.conv_index, {})[cfg.selection] = cfg.metrics.accuracy
    indices = sorted(taps)
    group_w = 46
    margin_l, margin_b, margin_t = 60, 40, 20
    plot_h = 240
    width = margin_l + group_w * max(len(indices), 1) + 150
    height = margin_t + plot_h + margin_b
    parts = _svg_header(width, height)
    # y axis with gridlines every 20%
    for pct in range(0, 101, 20):
        y = margin_t + plot_h * (1.0 - pct / 100.0)
        parts.append(
            f'<line x1="{margin_l}" y1="{y:.1f}" x2="{width - 130}" y2="{y:.1f}" '
            f'stroke="#dddddd"/>'
        )
        parts.append(
            f'<text x="{margin_l - 8}" y="{y + 4:.1f}" font-size="11" '
            f'text-anchor="end" font-family="sans-serif">{pct}</text>'
        )
    colors = {True: "#2a6fbb", False: "#c9622b"}
    for gi, conv_index in enumerate(indices):
        x0 = margin_l + gi * group_w + 6
        for si, selection in enumerate((True, False)):
            if selection not in taps[conv_index]:
                continue
            acc = taps[conv_index][selection]
            bar_h = plot_h * acc / 100.0
            x = x0 + si * 16
            y = margin_t + plot_h - bar_h
            parts.append(
                f'<rect x="{x}" y="{y:.1f}" width="14" height="{bar_h:.1f}" '
                f'fill="{colors[selection]}"/>'
            )
        parts.append(
            f'<text x="{x0 + 16}" y="{margin_t + plot_h + 16}" font-size="11" '
            f'text-anchor="middle" font-family="sans-serif">{conv_index}</text>'
        )
    legend_x = width - 120
    for li, (selection, label) in enumerate(((True, "selection on"), (False, "selection off"))):
        y = margin_t + 10 + 18 * li
        parts.append(
            f'<rect x="{legend_x}" y="{y}" width="12" height="12" fill="{colors[selection]}"/>'
        )
        parts.append(
            f'<text x="{legend_x + 18}" y="{y + 10}" font-size="11" '
            f'font-family="sans-serif">{label}</text>'
        )
    parts.append(
        f'<text x="{margin_l}" y="{height - 8}" font-size="11" '
        f'font-family="sans-serif">accuracy (%) per tapped convolution layer</text>'
    )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def write_confusion_svg(report: EvalReport, path: str | Path) -> None:
    """Row-normalized heatmap of the best configuration's confusion matrix."""
    best = best_configuration(report)
    cm = best.confusion.astype(float)
    n = cm.shape[0]
    cell = 70
    margin_l, margin_t = 90, 50
    width = margin_l + cell * n + 20
    height = margin_t + cell * n + 30
    parts = _svg_header(width, height)
    parts.append(
        f'<text x="{margin_l}" y="20" font-size="13" font-family="sans-serif">'
        f"normalized confusion, {best.name} (truth in rows)</text>"
    )
    row_sums = cm.sum(axis=1)
    for r in range(n):
        for c in range(n):
            value = cm[r, c] / row_sums[r] if row_sums[r] > 0 else 0.0
            shade = int(round(255 * (1.0 - value)))
            fill = f"#{shade:02x}{shade:02x}ff"
            x = margin_l + c * cell
            y = margin_t + r * cell
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{fill}" stroke="#888888"/>'
            )
            text_fill = "#000000" if value < 0.6 else "#ffffff"
            parts.append(
                f'<text x="{x + cell / 2:.0f}" y="{y + cell / 2 + 4:.0f}" font-size="12" '
                f'text-anchor="middle" fill="{text_fill}" '
                f'font-family="sans-serif">{value:.2f}</text>'
            )
    for i, cls in enumerate(report.classes):
        parts.append(
            f'<text x="{margin_l - 8}" y="{margin_t + i * cell + cell / 2 + 4:.0f}" '
            f'font-size="11" text-anchor="end" font-family="sans-serif">{cls}</text>'
        )
        parts.append(
            f'<text x="{margin_l + i * cell + cell / 2:.0f}" '
            f'y="{margin_t + n * cell + 16}" font-size="11" text-anchor="middle" '
            f'font-family="sans-serif">{cls}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def write_all(report: EvalReport, out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out_dir / "report.json",
        "class_table": out_dir / "table_per_class.csv",
        "comparison_table": out_dir / "table_comparison.csv",
        "accuracy_svg": out_dir / "accuracy_per_layer.svg",
        "confusion_svg": out_dir / "confusion_best.svg",
    }
    write_report_json(report, paths["report"])
    write_class_table_csv(report, paths["class_table"])
    write_comparison_table_csv(report, paths["comparison_table"])
    write_accuracy_svg(report, paths["accuracy_svg"])
    write_confusion_svg(report, paths["confusion_svg"])
    return paths
