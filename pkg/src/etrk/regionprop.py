"""Median filtering and 1-D histogram region proposals on binary frames."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .events import BinaryFrame
from .regions import Region

X = "X"
Y = "Y"


@dataclass(frozen=True)
class RegionConfig:
    density_threshold: int = 1
    min_run: int = 3
    max_gap: int = 2
    min_fill: float = 0.10
    min_area: int = 9
    median_filter: bool = True


@dataclass
class HistogramRuns:
    axis: str
    runs: list[tuple[int, int]] = field(default_factory=list)


def median3x3(bits: np.ndarray) -> np.ndarray:
    """Majority of each 3x3 neighbourhood with zero padding."""
    b = np.pad(bits.astype(np.uint8), 1)
    h, w = bits.shape
    acc = np.zeros((h, w), dtype=np.uint8)
    for dy in range(3):
        for dx in range(3):
            acc += b[dy : dy + h, dx : dx + w]
    return acc >= 5


def median_filter_3x3(frame: BinaryFrame) -> BinaryFrame:
    return BinaryFrame(median3x3(frame.bits), frame.index, frame.t_start, frame.t_end)


def project_histograms(frame: BinaryFrame | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    bits = frame.bits if isinstance(frame, BinaryFrame) else frame
    b = bits.astype(np.int64)
    return b.sum(axis=0), b.sum(axis=1)


def extract_runs(hist, density_threshold: int = 1, min_run: int = 3, max_gap: int = 2, axis: str = X) -> HistogramRuns:
    above = np.asarray(hist) > density_threshold
    raw: list[list[int]] = []
    i, n = 0, len(above)
    while i < n:
        if above[i]:
            j = i
            while j < n and above[j]:
                j += 1
            raw.append([i, j])
            i = j
        else:
            i += 1
    merged: list[list[int]] = []
    for start, stop in raw:
        if merged and start - merged[-1][1] <= max_gap:
            merged[-1][1] = stop
        else:
            merged.append([start, stop])
    runs = [(s, e - s) for s, e in merged if e - s >= min_run]
    return HistogramRuns(axis, runs)


def propose_regions(frame: BinaryFrame | np.ndarray, cfg: RegionConfig = RegionConfig()) -> list[Region]:
    """Cross X-runs with Y-runs, tighten each candidate to its content, keep dense ones.

    Candidates are tightened before the fill and area tests, so a surviving box
    always satisfies both on its own returned extent. Results are sorted
    left-to-right, then top-to-bottom, without duplicates.
    """
    bits = frame.bits if isinstance(frame, BinaryFrame) else frame
    hx, hy = project_histograms(bits)
    xruns = extract_runs(hx, cfg.density_threshold, cfg.min_run, cfg.max_gap, X).runs
    yruns = extract_runs(hy, cfg.density_threshold, cfg.min_run, cfg.max_gap, Y).runs
    found = set()
    for x0, xl in xruns:
        for y0, yl in yruns:
            sub = bits[y0 : y0 + yl, x0 : x0 + xl]
            if not sub.any():
                continue
            cols = np.flatnonzero(sub.any(axis=0))
            rows = np.flatnonzero(sub.any(axis=1))
            cx0, cx1 = int(cols[0]), int(cols[-1])
            ry0, ry1 = int(rows[0]), int(rows[-1])
            w, h = cx1 - cx0 + 1, ry1 - ry0 + 1
            active = int(sub[ry0 : ry1 + 1, cx0 : cx1 + 1].sum())
            if w * h < cfg.min_area or active < cfg.min_fill * w * h:
                continue
            found.add(Region(x0 + cx0, y0 + ry0, w, h))
    return sorted(found, key=lambda r: (r.x, r.y, r.w, r.h))


def frame_proposals(frame: BinaryFrame, cfg: RegionConfig = RegionConfig()) -> list[Region]:
    if cfg.median_filter:
        frame = median_filter_3x3(frame)
    return propose_regions(frame, cfg)
