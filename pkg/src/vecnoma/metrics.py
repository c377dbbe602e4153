"""Distance-binned aggregation of per-slot evaluation traces."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from vecnoma.env import StepDiagnostics

BINNED_COLUMNS = ("bin_center_m", "samples", "p_o", "p_l", "total_power", "buffer_bits", "reward")


@dataclass
class DistanceBinnedSeries:
    centers: np.ndarray
    counts: np.ndarray
    p_o: np.ndarray
    p_l: np.ndarray
    total_power: np.ndarray
    buffer_bits: np.ndarray
    reward: np.ndarray
    episodes: int

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(BINNED_COLUMNS)
            for k in range(self.centers.size):
                w.writerow([repr(float(self.centers[k])), int(self.counts[k])]
                           + [repr(float(col[k])) for col in
                              (self.p_o, self.p_l, self.total_power, self.buffer_bits, self.reward)])


def bin_index(d: np.ndarray, coverage: float, bins: int) -> np.ndarray:
    edges = np.linspace(-coverage / 2, coverage / 2, bins + 1)
    return np.clip(np.searchsorted(edges, d, side="right") - 1, 0, bins - 1)


def bin_by_distance(traces: Iterable[list[StepDiagnostics]], coverage: float,
                    bins: int = 50) -> DistanceBinnedSeries:
    """Mean of each per-slot quantity inside equal-width distance bins.

    Bins that received no sample hold NaN.
    """
    traces = list(traces)
    rows = [(s.d, s.p_o, s.p_l, s.buffer_bits, s.reward) for tr in traces for s in tr]
    data = np.array(rows, dtype=float).reshape(-1, 5)
    idx = bin_index(data[:, 0], coverage, bins)
    counts = np.bincount(idx, minlength=bins)

    def mean(col: np.ndarray) -> np.ndarray:
        sums = np.bincount(idx, weights=col, minlength=bins)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

    edges = np.linspace(-coverage / 2, coverage / 2, bins + 1)
    return DistanceBinnedSeries(
        centers=0.5 * (edges[:-1] + edges[1:]),
        counts=counts,
        p_o=mean(data[:, 1]),
        p_l=mean(data[:, 2]),
        total_power=mean(data[:, 1] + data[:, 2]),
        buffer_bits=mean(data[:, 3]),
        reward=mean(data[:, 4]),
        episodes=len(traces),
    )
