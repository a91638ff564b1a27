"""Axis-aligned boxes shared by proposals, tracks and ground truth."""

from __future__ import annotations

import math
from typing import Iterable, NamedTuple


class Region(NamedTuple):
    """Top-left corner plus width/height, in pixels."""

    x: float
    y: float
    w: float
    h: float

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h


def round_half_up(v: float) -> int:
    return math.floor(v + 0.5)


def round_region(r: Region) -> Region:
    return Region(*(round_half_up(v) for v in r))


def union_box(regions: Iterable[Region]) -> Region:
    regions = list(regions)
    if not regions:
        raise ValueError("union of no regions")
    x1 = min(r.x for r in regions)
    y1 = min(r.y for r in regions)
    x2 = max(r.x2 for r in regions)
    y2 = max(r.y2 for r in regions)
    return Region(x1, y1, x2 - x1, y2 - y1)


def clamp_region(r: Region, width: int, height: int) -> Region:
    """Shift ``r`` so it lies inside a ``width`` x ``height`` frame, keeping its size."""
    x = min(max(r.x, 0), max(width - r.w, 0))
    y = min(max(r.y, 0), max(height - r.h, 0))
    return Region(x, y, r.w, r.h)


def clip_region(r: Region, width: int, height: int) -> Region | None:
    """Intersect ``r`` with the frame; ``None`` if nothing is left."""
    x1, y1 = max(r.x, 0), max(r.y, 0)
    x2, y2 = min(r.x2, width), min(r.y2, height)
    if x2 <= x1 or y2 <= y1:
        return None
    return Region(x1, y1, x2 - x1, y2 - y1)
