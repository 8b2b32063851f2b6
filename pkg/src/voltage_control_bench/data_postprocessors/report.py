"""
Cross-seed aggregation of run artifacts: learning curves, final summary and the run table.
"""

import argparse
import json
import logging
import os
from typing import List, Optional

import pandas as pd

from voltage_control_bench.data_postprocessors.metrics import METRIC_NAMES

logger = logging.getLogger(__name__)

RUN_COLUMNS = ["run_id", "variant", "algorithm", "seed", "status"]


class NoRunsFound(FileNotFoundError):
    pass


def add_report_parser(subparsers: argparse._SubParsersAction) -> None:  # type: ignore[type-arg]
    report_parser = subparsers.add_parser("report", help="Aggregate completed runs into learning curves and a summary")
    report_parser.add_argument("out_dir", type=str, help="Directory holding one sub-directory per run")
    report_parser.add_argument("--plot", action="store_true", help="Also render learning_curves.png")
    report_parser.add_argument("--debug", action="store_true", help="Log debug messages")


def collect_runs(out_dir: str) -> pd.DataFrame:
    rows = []
    if os.path.isdir(out_dir):
        for name in sorted(os.listdir(out_dir)):
            info_path = os.path.join(out_dir, name, "run.json")
            if not os.path.isfile(info_path):
                continue
            with open(info_path, "r") as f:
                info = json.load(f)
            info["run_dir"] = os.path.join(out_dir, name)
            rows.append(info)
    if not rows:
        raise NoRunsFound(f"No runs found under {out_dir}")
    return pd.DataFrame(rows)


def _per_run_means(runs: pd.DataFrame) -> pd.DataFrame:
    """Mean over test episodes of every metric, per run and evaluation index."""
    frames = []
    for run in runs.itertuples():
        path = os.path.join(run.run_dir, "metrics.csv")
        if run.status != "ok" or not os.path.isfile(path):
            continue
        metrics = pd.read_csv(path)
        means = metrics.groupby("eval_index", as_index=False)[["train_episode"] + METRIC_NAMES].mean()
        means["variant"] = run.variant
        means["seed"] = run.seed
        frames.append(means)
    if not frames:
        raise NoRunsFound("No completed run has a metrics.csv")
    return pd.concat(frames, ignore_index=True)


def _median_std(frame: pd.DataFrame, keys: List[str]) -> pd.DataFrame:
    grouped = frame.groupby(keys)[METRIC_NAMES]
    # population std so that a single seed reports 0
    median = grouped.median().add_suffix("_median")
    std = grouped.std(ddof=0).add_suffix("_std")
    out = pd.concat([median, std], axis=1).reset_index()
    ordered = keys + [f"{m}_{stat}" for m in METRIC_NAMES for stat in ("median", "std")]
    return out[ordered]


def learning_curves(runs: pd.DataFrame) -> pd.DataFrame:
    per_run = _per_run_means(runs)
    curves = _median_std(per_run, ["variant", "eval_index"])
    episodes = per_run.groupby(["variant", "eval_index"])["train_episode"].first().reset_index()
    return curves.merge(episodes, on=["variant", "eval_index"]).sort_values(["variant", "eval_index"])


def summary(runs: pd.DataFrame) -> pd.DataFrame:
    per_run = _per_run_means(runs)
    last = per_run.groupby(["variant", "seed"])["eval_index"].transform("max")
    final = per_run[per_run["eval_index"] == last]
    return _median_std(final, ["variant"]).sort_values("variant")


def plot_learning_curves(curves: pd.DataFrame, path: str, metric: str = "cr") -> None:
    import matplotlib  # pylint: disable=import-outside-toplevel

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt  # pylint: disable=import-outside-toplevel

    fig, ax = plt.subplots()
    for variant, frame in curves.groupby("variant"):
        x = frame["train_episode"]
        y = frame[f"{metric}_median"]
        s = frame[f"{metric}_std"]
        ax.plot(x, y, label=str(variant))
        ax.fill_between(x, y - s, y + s, alpha=0.2)
    ax.set_title(f"{metric.upper()} during training")
    ax.set_xlabel("Training episode")
    ax.set_ylabel(metric.upper())
    ax.legend()
    fig.savefig(path)
    plt.close(fig)


def write_report(out_dir: str, plot: bool = False, runs: Optional[pd.DataFrame] = None) -> pd.DataFrame:
    runs = collect_runs(out_dir) if runs is None else runs
    runs[RUN_COLUMNS].sort_values("run_id").to_csv(os.path.join(out_dir, "runs.csv"), index=False)
    curves = learning_curves(runs)
    curves.to_csv(os.path.join(out_dir, "learning_curves.csv"), index=False)
    final = summary(runs)
    final.to_csv(os.path.join(out_dir, "summary.csv"), index=False)
    if plot:
        plot_learning_curves(curves, os.path.join(out_dir, "learning_curves.png"))

    print("{s:{c}^{n}}".format(s=" Final evaluation (median over seeds) ", n=60, c="="))
    for row in final.itertuples():
        print("{s:{c}^{n}}".format(s=f" {row.variant} ", n=60, c="-"))
        for metric in METRIC_NAMES:
            value = getattr(row, f"{metric}_median")
            spread = getattr(row, f"{metric}_std")
            print("{:<40} {:<10.4f} ± {:<10.4f}".format(f"{metric.upper()}:", value, spread))
    print("=" * 60)
    return final
