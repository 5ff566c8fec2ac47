"""Report writers: JSON, per-trial CSV, sweep plot data and PNG figures."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable

from .errors import EmptyReport, InvalidInput
from .harness import BenchmarkReport, SweepResult

TRIAL_COLUMNS = (
    "trial_index",
    "seed",
    "behavior",
    "requested_volume",
    "forgotten_volume",
    "class_correct",
    "volume_deviation",
    "volume_correct",
    "gap_ratio",
    "sample_correct",
    "skipped",
)
AGGREGATE_KEYS = ("class_accuracy", "volume_mean_deviation", "volume_median_deviation", "volume_accuracy", "sample_accuracy")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def trial_rows(report: BenchmarkReport) -> list[dict]:
    rows = []
    for r in report.records:
        gt = r.ground_truth
        rows.append({
            "trial_index": r.trial_index,
            "seed": r.seed,
            "behavior": r.behavior.get("kind"),
            "requested_volume": sum(gt.get("requested_volumes", {}).values()) if gt else None,
            "forgotten_volume": sum(gt.get("forgotten_volumes", {}).values()) if gt else None,
            "class_correct": r.scores.get("class_correct"),
            "volume_deviation": r.scores.get("volume_deviation"),
            "volume_correct": r.scores.get("volume_correct"),
            "gap_ratio": r.verdicts.get("sample", {}).get("gap_ratio"),
            "sample_correct": r.scores.get("sample_correct"),
            "skipped": r.skipped,
        })
    return rows


def _footer(report: BenchmarkReport) -> dict:
    a = report.aggregates
    return {
        "trial_index": "aggregate",
        "seed": "",
        "behavior": f"completed={a.get('completed')}/{a.get('trials')}",
        "class_correct": a.get("class_accuracy"),
        "volume_deviation": a.get("volume_mean_deviation"),
        "volume_correct": a.get("volume_accuracy"),
        "gap_ratio": report.tau,
        "sample_correct": a.get("sample_accuracy"),
        "skipped": a.get("skipped"),
    }


def write_csv(report: BenchmarkReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRIAL_COLUMNS)
        w.writeheader()
        for row in trial_rows(report) + [_footer(report)]:
            w.writerow({k: _cell(row.get(k)) for k in TRIAL_COLUMNS})


def emit_report(report: BenchmarkReport, fmt: str, path: str | Path, timings: str | Path | None = None) -> None:
    """Write ``report`` as ``json`` or ``csv``.

    Wall-clock timings never enter the main file, which keeps it byte
    reproducible; pass ``timings`` to write them to a separate JSON file.
    """
    if not report.records:
        raise EmptyReport("report has no trials")
    if fmt == "json":
        Path(path).write_text(report.to_json() + "\n")
    elif fmt == "csv":
        write_csv(report, path)
    else:
        raise InvalidInput(f"unknown report format {fmt!r}")
    if timings is not None:
        data = {str(r.trial_index): r.timings for r in report.records}
        Path(timings).write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")


def load_report(path: str | Path) -> BenchmarkReport:
    return BenchmarkReport.from_dict(json.loads(Path(path).read_text()))


def write_plot_csv(sweep: SweepResult, path: str | Path) -> None:
    rows = sweep.rows()
    metrics = [k for k in AGGREGATE_KEYS if any(k in r for r in rows)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x"] + metrics)
        for r in rows:
            x = r["x"]
            w.writerow([json.dumps(x) if isinstance(x, (list, dict)) else x] + [_cell(r.get(m)) for m in metrics])


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _finish(fig, ax, path: Path) -> Path:
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    return path


def render_report_figures(report: BenchmarkReport, out_dir: str | Path, stem: str = "report") -> list[Path]:
    """One PNG per metric present in the report, showing per-trial scores."""
    plt = _pyplot()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    done = [r for r in report.records if r.skipped is None]
    written = []

    cls = [r for r in done if "class" in r.verdicts]
    if cls:
        fig, ax = plt.subplots(figsize=(6, 3.6))
        for kind in sorted({r.behavior["kind"] for r in cls}):
            vals = [max(v["relative_change"] for v in r.verdicts["class"]["per_class"].values())
                    for r in cls if r.behavior["kind"] == kind]
            ax.plot(range(len(vals)), vals, "o", label=kind, alpha=0.8)
        thr = cls[0].verdicts["class"]["threshold"]
        ax.axhline(thr, color="k", lw=0.8, ls="--", label=f"threshold {thr:g}")
        ax.set_yscale("symlog", linthresh=1e-3)
        ax.set_xlabel("trial")
        ax.set_ylabel("max relative change")
        ax.legend(frameon=False, fontsize=8)
        written.append(_finish(fig, ax, out / f"{stem}_class.png"))
        plt.close(fig)

    vol = [r for r in done if "volume" in r.verdicts]
    if vol:
        fig, ax = plt.subplots(figsize=(4.8, 4.2))
        true_v, inferred = [], []
        for r in vol:
            for c, est in r.verdicts["volume"].items():
                true_v.append(r.ground_truth["forgotten_volumes"][c])
                inferred.append(est["inferred_volume"])
        ax.plot(true_v, inferred, "o", alpha=0.6)
        hi = max(true_v + inferred + [1])
        ax.plot([0, hi], [0, hi], color="k", lw=0.8, ls="--")
        ax.set_xlabel("forgotten volume")
        ax.set_ylabel("inferred volume")
        written.append(_finish(fig, ax, out / f"{stem}_volume.png"))
        plt.close(fig)

    smp = [r for r in done if "sample" in r.verdicts]
    if smp:
        fig, ax = plt.subplots(figsize=(6, 3.6))
        for kind in sorted({r.behavior["kind"] for r in smp}):
            vals = [r.verdicts["sample"]["gap_ratio"] for r in smp if r.behavior["kind"] == kind]
            ax.hist(vals, bins=15, alpha=0.6, label=kind)
        if report.tau is not None:
            ax.axvline(report.tau, color="k", lw=0.8, ls="--", label=f"tau {report.tau:.3g}")
        ax.set_xlabel("gap ratio")
        ax.set_ylabel("trials")
        ax.legend(frameon=False, fontsize=8)
        written.append(_finish(fig, ax, out / f"{stem}_sample.png"))
        plt.close(fig)
    return written


def render_sweep_figure(sweep: SweepResult, path: str | Path, metrics: Iterable[str] | None = None) -> Path:
    plt = _pyplot()
    rows = sweep.rows()
    metrics = list(metrics) if metrics is not None else [k for k in AGGREGATE_KEYS if any(r.get(k) is not None for r in rows)]
    labels = [str(r["x"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for m in metrics:
        ax.plot(range(len(rows)), [r.get(m) for r in rows], "o-", label=m)
    ax.set_xticks(range(len(rows)), labels)
    ax.set_xlabel(sweep.param)
    ax.set_ylabel("score")
    ax.legend(frameon=False, fontsize=8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = _finish(fig, ax, path)
    plt.close(fig)
    return out
