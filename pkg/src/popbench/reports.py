"""Summary statistics, summary.json and SVG box charts over experiment outputs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from html import escape
from pathlib import Path
from typing import Sequence

import numpy as np

from popbench.analysis.ablation import AblationCell, read_ablation_csv, write_ablation_csv
from popbench.analysis.importance import ImportanceTable, read_importance_csv, write_importance_csv
from popbench.analysis.transfer import OlsRow, TransferRecord, read_transfer_csv, write_ols_csv, write_transfer_csv
from popbench.datamodel import fmt
from popbench.errors import DataError, PopbenchError
from popbench.evaluation import MetricRecord, read_metrics_csv, write_metrics_csv

OUTPUT_FILES = {
    "benchmark": "metrics.csv",
    "importance": "importance.csv",
    "transfer": "transfer.csv",
    "ablation": "ablation.csv",
    "sensitivity": "sensitivity.csv",
}


def summarize(values: Sequence[float]) -> dict:
    """Median and linear-interpolated 25th/75th percentiles of the finite values."""
    a = np.asarray(values, dtype=float)
    finite = a[np.isfinite(a)]
    out = {"n": int(a.size), "n_nonfinite": int(a.size - finite.size)}
    if finite.size == 0:
        return {**out, "median": None, "q25": None, "q75": None, "min": None, "max": None}
    q25, med, q75 = np.percentile(finite, [25, 50, 75])
    return {**out, "median": float(med), "q25": float(q25), "q75": float(q75),
            "min": float(finite.min()), "max": float(finite.max())}


@dataclass
class Results:
    """Whatever experiments have been run; empty lists mean "not run"."""

    metrics: list[MetricRecord] = field(default_factory=list)
    importance: ImportanceTable | None = None
    transfer: list[TransferRecord] = field(default_factory=list)
    ols: list[OlsRow] = field(default_factory=list)
    ablation: list[AblationCell] = field(default_factory=list)
    sensitivity: list[MetricRecord] = field(default_factory=list)

    def empty(self) -> bool:
        return not (self.metrics or (self.importance and self.importance.rows) or self.transfer
                    or self.ablation or self.sensitivity)


def load_results(out_dir) -> Results:
    out = Path(out_dir)
    res = Results()
    if (out / "metrics.csv").exists():
        res.metrics = read_metrics_csv(out / "metrics.csv")
    if (out / "importance.csv").exists():
        res.importance = read_importance_csv(out / "importance.csv")
    if (out / "transfer.csv").exists():
        res.transfer = read_transfer_csv(out / "transfer.csv")
    if (out / "ablation.csv").exists():
        res.ablation = read_ablation_csv(out / "ablation.csv")
    if (out / "sensitivity.csv").exists():
        res.sensitivity = read_metrics_csv(out / "sensitivity.csv")
    return res


def _metric_summary(records: Sequence[MetricRecord]) -> list[dict]:
    groups: dict[tuple, list[float]] = {}
    for r in records:
        for metric in ("r2", "kl"):
            groups.setdefault((r.country, r.model, r.family, metric), []).append(getattr(r, metric))
    return [{"country": c, "model": m, "family": f, "metric": k, **summarize(v)}
            for (c, m, f, k), v in sorted(groups.items())]


def build_summary(res: Results) -> dict:
    summary: dict = {}
    if res.metrics:
        summary["benchmark"] = _metric_summary(res.metrics)
    if res.sensitivity:
        summary["sensitivity"] = _metric_summary(res.sensitivity)
    if res.importance and res.importance.rows:
        groups: dict[tuple, list[float]] = {}
        for r in res.importance.rows:
            groups.setdefault((r.country, r.model, r.family, r.feature), []).append(r.delta_r2)
        summary["importance"] = [{"country": c, "model": m, "family": f, "feature": feat, "metric": "delta_r2",
                                  **summarize(v)} for (c, m, f, feat), v in sorted(groups.items())]
    if res.transfer:
        groups = {}
        for r in res.transfer:
            for metric in ("delta_r2", "delta_kl"):
                groups.setdefault((r.country, metric), []).append(getattr(r, metric))
        summary["transfer"] = [{"country": c, "model": "RandomForest", "family": "embeddings-covariates",
                                "metric": k, **summarize(v)} for (c, k), v in sorted(groups.items())]
    if res.ablation:
        groups = {}
        for c in res.ablation:
            for metric in ("r2", "kl"):
                groups.setdefault((c.family_combination, c.n_embeddings, c.n_covariates, metric), []).append(
                    getattr(c, metric))
        summary["ablation"] = [{"family_combination": fc, "n_embeddings": ne, "n_covariates": nc, "metric": k,
                                **summarize(v)} for (fc, ne, nc, k), v in sorted(groups.items())]
    return summary


# SVG -----------------------------------------------------------------------

_W_ITEM, _H, _PAD_L, _PAD_B, _PAD_T = 46, 320, 70, 110, 40


def _num(v: float) -> str:
    return format(v, ".6g")


def box_chart(title: str, items: Sequence[tuple[str, dict]], ylabel: str) -> str:
    """Box summary chart: whiskers at min/max, box at the IQR, line at the median."""
    items = [(label, s) for label, s in items if s.get("median") is not None]
    width = _PAD_L + _W_ITEM * max(len(items), 1) + 20
    height = _H + _PAD_B + _PAD_T
    lo = min((s["min"] for _, s in items), default=0.0)
    hi = max((s["max"] for _, s in items), default=1.0)
    if not hi > lo:
        lo, hi = lo - 0.5, hi + 0.5

    def y(v):
        return _PAD_T + _H * (hi - v) / (hi - lo)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<line x1="{_PAD_L}" y1="{_PAD_T}" x2="{_PAD_L}" y2="{_PAD_T + _H}" stroke="black"/>',
           f'<text transform="translate(16 {_PAD_T + _H / 2:.1f}) rotate(-90)" text-anchor="middle">'
           f'{escape(ylabel)}</text>']
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        out.append(f'<text x="{_PAD_L - 4}" y="{y(v) + 4:.1f}" text-anchor="end">{_num(v)}</text>')
        out.append(f'<line x1="{_PAD_L - 3}" y1="{y(v):.1f}" x2="{_PAD_L}" y2="{y(v):.1f}" stroke="black"/>')
    if lo < 0 < hi:
        out.append(f'<line x1="{_PAD_L}" y1="{y(0):.1f}" x2="{width - 10}" y2="{y(0):.1f}" '
                   f'stroke="#999" stroke-dasharray="4 3"/>')
    for i, (label, s) in enumerate(items):
        cx = _PAD_L + _W_ITEM * (i + 0.5)
        half = _W_ITEM * 0.3
        out.append(f'<g data-median="{fmt(s["median"])}" data-q25="{fmt(s["q25"])}" data-q75="{fmt(s["q75"])}">')
        out.append(f'<title>{escape(label)}: median {fmt(s["median"])}, IQR [{fmt(s["q25"])}, '
                   f'{fmt(s["q75"])}], n={s["n"]}</title>')
        out.append(f'<line x1="{cx:.1f}" y1="{y(s["max"]):.1f}" x2="{cx:.1f}" y2="{y(s["min"]):.1f}" stroke="black"/>')
        top, bottom = y(s["q75"]), y(s["q25"])
        out.append(f'<rect x="{cx - half:.1f}" y="{top:.1f}" width="{2 * half:.1f}" '
                   f'height="{max(bottom - top, 0.5):.1f}" fill="#9ecae1" stroke="black"/>')
        out.append(f'<line x1="{cx - half:.1f}" y1="{y(s["median"]):.1f}" x2="{cx + half:.1f}" '
                   f'y2="{y(s["median"]):.1f}" stroke="#08306b" stroke-width="2"/>')
        out.append("</g>")
        out.append(f'<text transform="translate({cx + 4:.1f} {_PAD_T + _H + 8}) rotate(60)">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _charts(summary: dict) -> dict[str, str]:
    charts = {}
    for exp in ("benchmark", "sensitivity"):
        for metric, label in (("r2", "R²"), ("kl", "KL divergence")):
            items = [(f'{s["country"]} {s["model"]} {s["family"]}', s)
                     for s in summary.get(exp, []) if s["metric"] == metric]
            if items:
                charts[f"{exp}_{metric}.svg"] = box_chart(f"{exp}: {label} by model and family", items, label)
    for metric in ("delta_r2", "delta_kl"):
        items = [(s["country"], s) for s in summary.get("transfer", []) if s["metric"] == metric]
        if items:
            charts[f"transfer_{metric}.svg"] = box_chart(f"transfer: {metric} by country", items, metric)
    ablation = summary.get("ablation", [])
    for combo in sorted({s["family_combination"] for s in ablation}):
        items = [(f'E{s["n_embeddings"]}/C{s["n_covariates"]}', s) for s in ablation
                 if s["family_combination"] == combo and s["metric"] == "r2"]
        charts[f"ablation_{combo}.svg"] = box_chart(f"ablation: {combo}", items, "R²")
    imp = summary.get("importance", [])
    for key in sorted({(s["country"], s["model"], s["family"]) for s in imp}):
        rows = sorted((s for s in imp if (s["country"], s["model"], s["family"]) == key and s["median"] is not None),
                      key=lambda s: (-s["median"], s["feature"]))[:20]
        charts["importance_" + "_".join(key) + ".svg"] = box_chart(
            "importance: " + " ".join(key) + " (top 20)", [(s["feature"], s) for s in rows], "ΔR²")
    return charts


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def emit_reports(results: Results, out_dir, write_csvs: bool = True) -> list[Path]:
    """Write experiment CSVs (optional), summary.json and charts/*.svg.

    Returns the paths written. Raises DataError when ``results`` holds no
    experiment output at all.
    """
    if results.empty():
        raise DataError("no experiment results to report")
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if write_csvs:
            if results.metrics:
                write_metrics_csv(results.metrics, out / "metrics.csv")
                written.append(out / "metrics.csv")
            if results.importance and results.importance.rows:
                write_importance_csv([results.importance], out / "importance.csv")
                written.append(out / "importance.csv")
            if results.transfer:
                write_transfer_csv(results.transfer, out / "transfer.csv")
                written.append(out / "transfer.csv")
            if results.ols:
                write_ols_csv(results.ols, out / "ols.csv")
                written.append(out / "ols.csv")
            if results.ablation:
                write_ablation_csv(results.ablation, out / "ablation.csv")
                written.append(out / "ablation.csv")
            if results.sensitivity:
                write_metrics_csv(results.sensitivity, out / "sensitivity.csv")
                written.append(out / "sensitivity.csv")
        summary = build_summary(results)
        (out / "summary.json").write_text(_dump(summary), encoding="utf-8")
        written.append(out / "summary.json")
        charts = out / "charts"
        charts.mkdir(exist_ok=True)
        for name, svg in _charts(summary).items():
            (charts / name).write_text(svg, encoding="utf-8")
            written.append(charts / name)
    except OSError as exc:
        raise PopbenchError(f"cannot write reports to {out}: {exc}") from exc
    return written

