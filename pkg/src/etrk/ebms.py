"""Event-by-event mean-shift cluster tracker, used as the comparison baseline.

Every event is attached to the nearest cluster within a fixed radius, which
moves its centroid toward the event by a mixing factor. Events far from all
clusters seed new ones while capacity remains, and idle clusters are pruned.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .instrument import WORD, NullCounter, OpCounter
from .regions import Region, clamp_region, round_half_up
from .tracker import OrderingError, TrackRecord


@dataclass(frozen=True)
class EbmsConfig:
    radius: float = 15.0
    eta: float = 0.1
    support_threshold: int = 20
    timeout_us: int = 100_000
    max_clusters: int = 16
    horizon_us: int = 100_000

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("ebms eta must lie in (0, 1]")
        if self.radius <= 0 or self.max_clusters < 1:
            raise ValueError("ebms radius and max_clusters must be positive")


@dataclass
class Cluster:
    id: int
    cx: float
    cy: float
    radius: float
    last_event_t: int
    support: deque = field(default_factory=deque)
    visible: bool = False

    @property
    def event_count(self) -> int:
        return len(self.support)


# per-cluster table entry: id, cx, cy, radius, count, last_t, visible
CLUSTER_WORDS = 7


@dataclass
class ClusterSet:
    clusters: list[Cluster] = field(default_factory=list)
    next_id: int = 0
    last_t: int | None = None

    def __len__(self) -> int:
        return len(self.clusters)


def _expire(c: Cluster, t: int, horizon: int) -> None:
    while c.support and c.support[0] <= t - horizon:
        c.support.popleft()


def ebms_process_event(e, state: ClusterSet, cfg: EbmsConfig = EbmsConfig(), counter: OpCounter | None = None) -> ClusterSet:
    t, ex, ey = int(e[0]), float(e[1]), float(e[2])
    if state.last_t is not None and t < state.last_t:
        raise OrderingError(f"event at {t} arrived after {state.last_t}")
    state.last_t = t
    ops = counter or NullCounter()
    n = len(state.clusters)
    if n:
        state.clusters = [c for c in state.clusters if t - c.last_event_t <= cfg.timeout_us]
    best, best_d2 = None, cfg.radius * cfg.radius
    for c in state.clusters:
        dx, dy = ex - c.cx, ey - c.cy
        d2 = dx * dx + dy * dy
        if d2 <= best_d2:
            best, best_d2 = c, d2
    ops.tally(adds=4 * n, muls=2 * n, cmps=2 * n)
    if best is not None:
        best.cx += cfg.eta * (ex - best.cx)
        best.cy += cfg.eta * (ey - best.cy)
        best.last_event_t = t
        best.support.append(t)
        _expire(best, t, cfg.horizon_us)
        best.visible = best.event_count >= cfg.support_threshold
        ops.tally(adds=5, muls=2, cmps=2)
    elif len(state.clusters) < cfg.max_clusters:
        state.clusters.append(Cluster(state.next_id, ex, ey, cfg.radius, t, deque([t])))
        state.next_id += 1
        ops.tally(cmps=1)
    return state


def ebms_visible(state: ClusterSet, t: int, cfg: EbmsConfig = EbmsConfig(), bounds: tuple[int, int] | None = None) -> list[tuple[int, Region]]:
    """Visible clusters at time ``t`` as square boxes of side ``2 * radius``."""
    out = []
    for c in state.clusters:
        if t - c.last_event_t > cfg.timeout_us:
            continue
        _expire(c, t, cfg.horizon_us)
        c.visible = c.event_count >= cfg.support_threshold
        if not c.visible:
            continue
        side = 2 * c.radius
        box = Region(round_half_up(c.cx - c.radius), round_half_up(c.cy - c.radius), side, side)
        if bounds is not None:
            box = clamp_region(box, *bounds)
        out.append((c.id, box))
    return out


class EbmsTracker:
    """Feeds an event array through the cluster set and reports at frame boundaries."""

    def __init__(self, cfg: EbmsConfig = EbmsConfig(), width: int = 240, height: int = 180, counter: OpCounter | None = None):
        self.cfg = cfg
        self.bounds = (width, height)
        self.state = ClusterSet()
        self.counter = counter if counter is not None else NullCounter()
        self.peak_state_bytes = 0

    def state_bytes(self) -> int:
        support = sum(c.event_count for c in self.state.clusters)
        return WORD * (CLUSTER_WORDS * self.cfg.max_clusters + support)

    def feed(self, events: np.ndarray) -> None:
        ts, xs, ys = events["t"].tolist(), events["x"].tolist(), events["y"].tolist()
        for e in zip(ts, xs, ys):
            ebms_process_event(e, self.state, self.cfg, self.counter)
            if len(self.state.clusters):
                self.peak_state_bytes = max(self.peak_state_bytes, self.state_bytes())

    def report(self, t: int) -> list[TrackRecord]:
        out = []
        for cid, r in ebms_visible(self.state, t, self.cfg, self.bounds):
            out.append(TrackRecord(t, cid, *r, 0.0, 0.0, "Locked"))
        return out


def centroid_error(state: ClusterSet, target: tuple[float, float]) -> float:
    if not state.clusters:
        return math.inf
    return min(math.dist((c.cx, c.cy), target) for c in state.clusters)
