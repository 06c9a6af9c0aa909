"""Report files for ratio studies: per-trial CSV, JSON summary, PNG figures."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .study import RatioReport  # noqa: E402

__all__ = ["TRIAL_COLUMNS", "write_trials_csv", "write_summary_json", "plot_ratio_histogram", "plot_ratio_trend", "write_report"]

TRIAL_COLUMNS = (
    "n", "trial", "instance_seed", "L", "lp_bound", "alg_cost", "alg_min", "alg_max",
    "runs", "opt_cost", "certificate", "ratio_lp", "ratio_opt", "perfect", "valid", "failed",
)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def write_trials_csv(reports: list[RatioReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIAL_COLUMNS)
        for rep in reports:
            for t in rep.trials:
                row = {
                    "n": rep.config.n, "trial": t.trial, "instance_seed": t.instance_seed, "L": t.L,
                    "lp_bound": t.lp_bound, "alg_cost": t.alg_cost, "alg_min": t.alg_min,
                    "alg_max": t.alg_max, "runs": t.runs, "opt_cost": t.opt_cost,
                    "certificate": t.certificate, "ratio_lp": t.ratio_lp, "ratio_opt": t.ratio_opt,
                    "perfect": int(t.perfect), "valid": int(t.valid), "failed": t.failed,
                }
                w.writerow([_cell(row[c]) for c in TRIAL_COLUMNS])


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_safe(v) for v in obj]
    return obj


def write_summary_json(reports: list[RatioReport], path) -> None:
    data = [_json_safe(r.summary()) for r in reports]
    with open(path, "w") as fh:
        json.dump(data[0] if len(data) == 1 else data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def plot_ratio_histogram(reports: list[RatioReport], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for rep in reports:
        ratios = [t.ratio_lp for t in rep.ok_trials if t.ratio_lp is not None]
        if ratios:
            ax.hist(ratios, bins=30, alpha=0.6, label=f"n={rep.config.n}")
    g = reports[0].guarantee if reports else None
    if g is not None:
        ax.axvline(g, color="k", linestyle="--", label=f"guarantee {g:.3g}")
    ax.set_xlabel("ALG / LP bound (per trial)")
    ax.set_ylabel("trials")
    ax.set_title(f"{reports[0].config.mode} mode, alpha={reports[0].alpha:.3g}" if reports else "")
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_ratio_trend(reports: list[RatioReport], path) -> None:
    ns, means, errs = [], [], []
    for rep in reports:
        m, se = rep.ratio_lp_stats()
        if math.isfinite(m):
            ns.append(rep.config.n)
            means.append(m)
            errs.append(3 * se)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(ns, means, yerr=errs, marker="o", capsize=3, label="mean ALG/LP (3 SE)")
    if ns:
        base = means[0] / math.log(ns[0])
        ax.plot(ns, [base * math.log(v) for v in ns], linestyle=":", label="log n, scaled")
    ax.set_xlabel("n")
    ax.set_ylabel("mean ratio vs LP bound")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(reports: RatioReport | list[RatioReport], directory) -> dict[str, Path]:
    """Write ``trials.csv``, ``summary.json`` and figures; returns the paths."""
    if isinstance(reports, RatioReport):
        reports = [reports]
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trials": out / "trials.csv",
        "summary": out / "summary.json",
        "histogram": out / "ratio_hist.png",
    }
    write_trials_csv(reports, paths["trials"])
    write_summary_json(reports, paths["summary"])
    plot_ratio_histogram(reports, paths["histogram"])
    if len(reports) > 1:
        paths["trend"] = out / "ratio_trend.png"
        plot_ratio_trend(reports, paths["trend"])
    return paths
