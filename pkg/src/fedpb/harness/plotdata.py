"""Per-round mean and spread over seeds, ready for any plotting tool."""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from .experiment import ExperimentSummary, read_round_csv, seed_logs

PLOT_COLUMNS = ("label", "mode", "K", "alpha", "round", "mean", "std", "n")


def series(summary: ExperimentSummary) -> list[tuple[int, float, float, int]]:
    """(round, mean, std, n) over every logged curve of the experiment.

    Standalone curves count once per client. Rounds without a finite
    accuracy (unevaluated epochs) are skipped.
    """
    by_round: dict[int, list[float]] = {}
    for seed in summary.seeds:
        for path in seed_logs(Path(summary.out_dir), seed):
            for rec in read_round_csv(path):
                if np.isfinite(rec.accuracy):
                    by_round.setdefault(rec.round, []).append(rec.accuracy)
    rows = []
    for r in sorted(by_round):
        vals = np.array(by_round[r])
        rows.append((r, float(vals.mean()), float(vals.std()), len(vals)))
    return rows


def default_label(s: ExperimentSummary) -> str:
    return f"{s.mode} K={s.K} alpha={s.alpha:g}"


def emit_plot_data(summaries: list[ExperimentSummary], path: str | os.PathLike, labels: list[str] | None = None) -> int:
    """Write one CSV holding every configuration's curve; returns the row count."""
    labels = labels or [default_label(s) for s in summaries]
    n = 0
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        for label, s in zip(labels, summaries):
            for r, mean, std, count in series(s):
                w.writerow([label, s.mode, s.K, repr(s.alpha), r, repr(mean), repr(std), count])
                n += 1
    return n
