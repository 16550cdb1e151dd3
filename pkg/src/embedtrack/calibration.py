"""Distance threshold calibration on labeled detection pairs.

Given cross-frame pairs labeled same / different identity, the tracker's
gate is the threshold h minimising

    fp / gn + fn / gp

where a pair is predicted "same" when its distance is strictly below h.
The objective is piecewise constant in h, so an exact sweep over one
candidate per plateau finds the global minimum.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

__all__ = [
    "LabeledDistance",
    "PairCounts",
    "SweepRow",
    "ThresholdSweep",
    "DistanceHistogram",
    "DegenerateDevSetError",
    "counts_at",
    "threshold_objective",
    "sweep_threshold",
    "distance_histogram",
    "write_sweep_csv",
    "write_histogram_csv",
]


class DegenerateDevSetError(ValueError):
    """Raised when calibration data lacks same pairs, different pairs, or both."""


@dataclass(frozen=True)
class LabeledDistance:
    """One cross-frame detection pair: embedding distance plus whether the two
    detections carry the same ground-truth identity."""

    distance: float
    is_same: bool

    def __post_init__(self) -> None:
        if not np.isfinite(self.distance) or self.distance < 0:
            raise ValueError(f"distance must be finite and non-negative, got {self.distance}")


@dataclass(frozen=True)
class PairCounts:
    """Confusion counts over same/different pair predictions.

    gp and gn are the ground-truth positive and negative totals. They default
    to tp + fn and tn + fp, but can be supplied explicitly: published tallies
    sometimes keep pairs lost to missed detections in the ground-truth totals,
    making gp larger than tp + fn.
    """

    tp: int
    tn: int
    fp: int
    fn: int
    gp: Optional[int] = None
    gn: Optional[int] = None

    def __post_init__(self) -> None:
        for name in ("tp", "tn", "fp", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.gp is None:
            object.__setattr__(self, "gp", self.tp + self.fn)
        if self.gn is None:
            object.__setattr__(self, "gn", self.tn + self.fp)
        if self.gp < 0 or self.gn < 0:
            raise ValueError("gp and gn must be non-negative")


def counts_at(pairs: Sequence[LabeledDistance], threshold: float) -> PairCounts:
    """Confusion counts when pairs with distance < threshold are called same."""
    if not pairs:
        raise DegenerateDevSetError("no pairs to count")
    dist = np.array([p.distance for p in pairs])
    same = np.array([p.is_same for p in pairs], dtype=bool)
    pred = dist < threshold
    return PairCounts(
        tp=int((pred & same).sum()),
        tn=int((~pred & ~same).sum()),
        fp=int((pred & ~same).sum()),
        fn=int((~pred & same).sum()),
    )


def threshold_objective(counts: PairCounts) -> float:
    """Sum of the false-positive and false-negative rates: fp/gn + fn/gp."""
    if counts.gp == 0 or counts.gn == 0:
        raise DegenerateDevSetError(
            f"objective undefined with gp={counts.gp}, gn={counts.gn}"
        )
    return counts.fp / counts.gn + counts.fn / counts.gp


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    counts: PairCounts
    objective: float


@dataclass(frozen=True)
class ThresholdSweep:
    """Result of an exact threshold sweep: the winning threshold, its
    objective, and every candidate evaluated (in increasing order)."""

    threshold: float
    objective: float
    rows: tuple[SweepRow, ...]


def _candidate_thresholds(distances: np.ndarray) -> np.ndarray:
    """One representative threshold per plateau of the objective.

    Prediction flips happen only when h crosses an observed distance, so
    midpoints between consecutive distinct distances cover every interior
    plateau; d_min / 2 realises "call everything different" and d_max + 1
    realises "call everything same". When d_min is 0 the first endpoint is
    skipped: thresholds are positive, so the all-different plateau is
    unreachable (a 0 distance is predicted same under any h > 0).
    """
    uniq = np.unique(distances)
    cands = []
    if uniq[0] > 0:
        cands.append(uniq[0] / 2.0)
    if uniq.size > 1:
        cands.extend(((uniq[:-1] + uniq[1:]) / 2.0).tolist())
    cands.append(uniq[-1] + 1.0)
    return np.array(cands)


def sweep_threshold(
    pairs: Sequence[LabeledDistance], tie_break: str = "smallest"
) -> ThresholdSweep:
    """Exact minimisation of `threshold_objective` over all thresholds.

    Requires at least one same pair and one different pair. Equal objectives
    resolve to the smallest candidate threshold by default (favouring fewer
    false merges); pass tie_break="largest" for the opposite bias.
    """
    if tie_break not in ("smallest", "largest"):
        raise ValueError(f"tie_break must be 'smallest' or 'largest', got {tie_break!r}")
    if not pairs:
        raise DegenerateDevSetError("no pairs to sweep")
    dist = np.array([p.distance for p in pairs])
    same = np.array([p.is_same for p in pairs], dtype=bool)
    gp = int(same.sum())
    gn = int((~same).sum())
    if gp == 0 or gn == 0:
        raise DegenerateDevSetError(
            f"sweep needs both pair kinds, got {gp} same and {gn} different"
        )

    same_sorted = np.sort(dist[same])
    diff_sorted = np.sort(dist[~same])
    cands = _candidate_thresholds(dist)
    # Pairs with distance < h are predicted same; side="left" counts exactly
    # the strictly smaller entries.
    tp = np.searchsorted(same_sorted, cands, side="left")
    fp = np.searchsorted(diff_sorted, cands, side="left")
    fn = gp - tp
    tn = gn - fp
    objective = fp / gn + fn / gp

    rows = tuple(
        SweepRow(
            threshold=float(h),
            counts=PairCounts(tp=int(tp[k]), tn=int(tn[k]), fp=int(fp[k]), fn=int(fn[k])),
            objective=float(objective[k]),
        )
        for k, h in enumerate(cands)
    )
    if tie_break == "smallest":
        best = min(range(len(cands)), key=lambda k: (objective[k], k))
    else:
        best = min(range(len(cands)), key=lambda k: (objective[k], -k))
    return ThresholdSweep(
        threshold=float(cands[best]), objective=float(objective[best]), rows=rows
    )


@dataclass(frozen=True)
class DistanceHistogram:
    """Same and different pair counts over shared bins on [0, max distance]."""

    bin_edges: tuple[float, ...]
    same_counts: tuple[int, ...]
    diff_counts: tuple[int, ...]


def distance_histogram(pairs: Sequence[LabeledDistance], bin_count: int = 50) -> DistanceHistogram:
    """Histogram both pair populations over identical bins, for eyeballing the
    separation that the swept threshold exploits."""
    if not pairs:
        raise DegenerateDevSetError("no pairs to histogram")
    if bin_count < 1:
        raise ValueError(f"bin_count must be positive, got {bin_count}")
    dist = np.array([p.distance for p in pairs])
    same = np.array([p.is_same for p in pairs], dtype=bool)
    hi = float(dist.max())
    if hi == 0.0:
        hi = 1.0
    edges = np.histogram_bin_edges(dist, bins=bin_count, range=(0.0, hi))
    same_counts, _ = np.histogram(dist[same], bins=edges)
    diff_counts, _ = np.histogram(dist[~same], bins=edges)
    return DistanceHistogram(
        bin_edges=tuple(float(e) for e in edges),
        same_counts=tuple(int(c) for c in same_counts),
        diff_counts=tuple(int(c) for c in diff_counts),
    )


def write_sweep_csv(path: Union[str, Path], sweep: ThresholdSweep) -> None:
    """One row per candidate threshold: h, fp, fn, tp, tn, objective."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["h", "fp", "fn", "tp", "tn", "objective"])
        for row in sweep.rows:
            c = row.counts
            writer.writerow(
                [repr(float(row.threshold)), c.fp, c.fn, c.tp, c.tn, repr(float(row.objective))]
            )


def write_histogram_csv(path: Union[str, Path], hist: DistanceHistogram) -> None:
    """One row per bin: bin_lo, bin_hi, same_count, diff_count."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "same_count", "diff_count"])
        for k in range(len(hist.same_counts)):
            writer.writerow(
                [
                    repr(float(hist.bin_edges[k])),
                    repr(float(hist.bin_edges[k + 1])),
                    hist.same_counts[k],
                    hist.diff_counts[k],
                ]
            )
