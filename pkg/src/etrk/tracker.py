"""Overlap-based multi-object tracker on frame region proposals.

Each frame runs predict -> assign -> merge / occlusion resolution -> update
-> post-process over a fixed pool of tracker slots. Track regions are
blended with a weighted average of the new proposal and the
velocity-propagated previous region; velocities are blended the same way.
"""

from __future__ import annotations

import copy
import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum

from .instrument import WORD, NullCounter, OpCounter
from .quant import Arithmetic, FixedConfig, arithmetic_for
from .regions import Region, clamp_region, round_half_up, round_region, union_box


class TrackerError(Exception):
    pass


class TrackStateError(TrackerError):
    pass


class OrderingError(TrackerError):
    pass


class DegenerateIntervalError(TrackerError, ValueError):
    pass


class TrackState(str, Enum):
    FREE = "Free"
    TRACKING = "Tracking"
    LOCKED = "Locked"


FREE, TRACKING, LOCKED = TrackState.FREE, TrackState.TRACKING, TrackState.LOCKED

ALLOWED_TRANSITIONS = frozenset(
    {(FREE, TRACKING), (TRACKING, LOCKED), (TRACKING, FREE), (LOCKED, LOCKED), (LOCKED, FREE)}
)


@dataclass(frozen=True)
class TrackerConfig:
    alpha: float = 0.5
    overlap_ratio_threshold: float = 0.20
    max_tracks: int = 8
    max_unlocks: int = 3
    occlusion_horizon: int = 2
    fx: FixedConfig = field(default_factory=FixedConfig)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 < self.overlap_ratio_threshold < 1.0:
            raise ValueError("overlap_ratio_threshold must lie in (0, 1)")
        if self.max_tracks < 1 or self.max_unlocks < 1:
            raise ValueError("max_tracks and max_unlocks must be positive")
        if self.occlusion_horizon not in (1, 2):
            raise ValueError("occlusion_horizon must be 1 or 2")


@dataclass
class Track:
    id: int = -1
    region: Region | None = None
    vx: float = 0.0
    vy: float = 0.0
    state: TrackState = FREE
    miss_count: int = 0
    streak: int = 0
    pre_occlusion_size: tuple[float, float] | None = None
    occluded_last: bool = False
    last_frame: int = -1
    last_t: int = -1

    @property
    def active(self) -> bool:
        return self.state is not FREE

    def clear(self) -> None:
        self.region = None
        self.vx = self.vy = 0.0
        self.state = FREE
        self.miss_count = self.streak = 0
        self.pre_occlusion_size = None
        self.occluded_last = False


@dataclass(frozen=True)
class OcclusionFlags:
    cd: bool
    wi: bool
    hvo: bool
    axis: str = "x"


# -- geometry -----------------------------------------------------------------


def overlap_area(a: Region, b: Region) -> float:
    dx = max(0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    dy = max(0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    return dx * dy


def assignment_ratio(proposal: Region, predicted: Region) -> float:
    """Overlap normalised by the smaller of the two areas."""
    smaller = min(proposal.w * proposal.h, predicted.w * predicted.h)
    if smaller <= 0:
        return 0.0
    return overlap_area(proposal, predicted) / smaller


@dataclass
class Assignment:
    ratios: dict[tuple[int, int], float]  # (proposal index, track id) -> ratio above threshold
    unmatched_proposals: list[int]
    unmatched_tracks: list[int]
    predictions: dict[int, Region]


def assign(
    proposals: list[Region],
    tracks: list[Track],
    cfg: TrackerConfig,
    dt: float,
    bounds: tuple[int, int] | None = None,
    arith: Arithmetic | None = None,
) -> Assignment:
    """Every proposal/track pair whose ratio against the prediction clears the threshold.

    Many-to-many matches are kept; resolving them is left to the caller.
    """
    live = [t for t in tracks if t.active]
    preds = {t.id: predict(t, dt, bounds, arith) for t in live}
    ratios = {}
    for pi, p in enumerate(proposals):
        for t in live:
            r = assignment_ratio(p, preds[t.id])
            if r > cfg.overlap_ratio_threshold:
                ratios[(pi, t.id)] = r
    hit_p = {pi for pi, _ in ratios}
    hit_t = {tid for _, tid in ratios}
    return Assignment(
        ratios,
        [i for i in range(len(proposals)) if i not in hit_p],
        [t.id for t in live if t.id not in hit_t],
        preds,
    )


# -- per-track updates ----------------------------------------------------------


def propagate(track: Track, dt: float, arith: Arithmetic | None = None) -> Region:
    """Region moved along the track velocity, at storage precision."""
    arith = arith or Arithmetic()
    r = track.region
    return Region(arith.pos(r.x + track.vx * dt), arith.pos(r.y + track.vy * dt), r.w, r.h)


def predict(
    track: Track,
    dt: float,
    bounds: tuple[int, int] | None = None,
    arith: Arithmetic | None = None,
    clamp: bool = True,
) -> Region:
    if not track.active or track.region is None:
        raise TrackStateError(f"cannot predict free track {track.id}")
    r = propagate(track, dt, arith)
    out = Region(round_half_up(r.x), round_half_up(r.y), r.w, r.h)
    if clamp and bounds is not None:
        out = clamp_region(out, *bounds)
    return out


def update_velocity(
    track: Track, proposal: Region, cfg: TrackerConfig, dt: float, arith: Arithmetic | None = None
) -> tuple[float, float]:
    if dt <= 0:
        raise DegenerateIntervalError(f"velocity update needs dt > 0, got {dt}")
    arith = arith or Arithmetic()
    a = cfg.alpha
    prev = track.region

    def blend(shift: float, v_prev: float) -> float:
        if not arith.fixed:
            return (1 - a) * shift / dt + a * v_prev
        raw = arith.vel(shift / dt)
        return arith.vel(arith.vel((1 - a) * raw) + arith.vel(a * v_prev))

    vx = blend((proposal.x - prev.x) + (proposal.w - prev.w), track.vx)
    vy = blend((proposal.y - prev.y) + (proposal.h - prev.h), track.vy)
    return vx, vy


def blend_region(track: Track, proposal: Region, cfg: TrackerConfig, dt: float, arith: Arithmetic | None = None) -> Region:
    """Weighted average of the proposal and the velocity-propagated region.

    Float mode keeps full precision; fixed mode stores every intermediate in
    the position format. Rounding to whole pixels happens on output.
    """
    arith = arith or Arithmetic()
    a = cfg.alpha
    prev = track.region
    out = []
    for new, old, v in zip(proposal, prev, (track.vx, track.vy, 0.0, 0.0)):
        if arith.fixed:
            val = arith.pos(arith.pos((1 - a) * new) + arith.pos(a * arith.pos(old + v * dt)))
        else:
            val = (1 - a) * new + a * (old + v * dt)
        out.append(val)
    return Region(*out)


def _advance_state(track: Track) -> None:
    track.miss_count = 0
    track.streak += 1
    if track.state is TRACKING and track.streak >= 2:
        track.state = LOCKED


def update_track(
    track: Track, proposal: Region, cfg: TrackerConfig, dt: float, arith: Arithmetic | None = None
) -> Track:
    """Return an updated copy: blended region, blended velocity, advanced state."""
    out = copy.copy(track)
    out.region = blend_region(track, proposal, cfg, dt, arith)
    out.vx, out.vy = update_velocity(track, proposal, cfg, dt, arith)
    _advance_state(out)
    return out


def merge_proposals(proposals: list[Region], track_region: Region) -> Region:
    return union_box([*proposals, track_region])


# -- occlusion --------------------------------------------------------------------


def _pair_axis(a: Track, b: Track) -> str:
    fast = a if math.hypot(a.vx, a.vy) >= math.hypot(b.vx, b.vy) else b
    return "x" if abs(fast.vx) >= abs(fast.vy) else "y"


def _axis_velocity(t: Track, axis: str) -> float:
    return t.vx if axis == "x" else t.vy


def _extent(r: Region, axis: str) -> float:
    return r.w if axis == "x" else r.h


def _sign(v: float) -> int:
    return (v > 0) - (v < 0)


def detect_occlusion(
    tracks: list[Track], cfg: TrackerConfig, dt: float, bounds: tuple[int, int] | None = None
) -> list[tuple[int, int]]:
    """Pairs whose predicted boxes overlap within the next one or two steps.

    Newly flagged tracks get their current size recorded as the pre-occlusion size.
    """
    live = [t for t in tracks if t.active]
    pairs = []
    for i, a in enumerate(live):
        for b in live[i + 1 :]:
            for n in range(1, cfg.occlusion_horizon + 1):
                if overlap_area(predict(a, n * dt, bounds), predict(b, n * dt, bounds)) > 0:
                    pairs.append((a.id, b.id))
                    for t in (a, b):
                        if t.pre_occlusion_size is None:
                            t.pre_occlusion_size = (t.region.w, t.region.h)
                    break
    return pairs


def occlusion_flags(a: Track, b: Track, merged: Region, prev_merged_width: float | None) -> OcclusionFlags:
    axis = _pair_axis(a, b)
    va, vb = _axis_velocity(a, axis), _axis_velocity(b, axis)
    cd = _sign(va) == _sign(vb)
    wi = prev_merged_width is not None and _extent(merged, axis) > prev_merged_width
    hvo = abs(va) > abs(vb)
    return OcclusionFlags(cd, wi, hvo, axis)


def resolve_occlusion(a: Track, b: Track, proposal: Region, flags: OcclusionFlags) -> tuple[Region, Region]:
    """Split one shared proposal between two occluding tracks.

    Coming together (no width increase): both keep the whole proposal.
    Getting apart: ``a`` takes its pre-occlusion size at the far corner of the
    proposal when the pair moves in opposite directions or ``a`` is faster,
    otherwise at the near corner; ``b`` takes the other corner.
    """
    for t in (a, b):
        if t.pre_occlusion_size is None:
            raise TrackStateError(f"track {t.id} has no pre-occlusion size")
    if not flags.wi:
        return proposal, proposal
    xn, yn, wn, hn = proposal

    def far(t: Track) -> Region:
        wo, ho = t.pre_occlusion_size
        return Region(xn + wn - wo, yn + hn - ho, wo, ho)

    def near(t: Track) -> Region:
        wo, ho = t.pre_occlusion_size
        return Region(xn, yn, wo, ho)

    if not flags.cd or flags.hvo:
        return far(a), near(b)
    return near(a), far(b)


# -- post-processing ----------------------------------------------------------------


def post_process(
    tracks: list[Track], matched_ids: set[int], frame_bounds: tuple[int, int], cfg: TrackerConfig
) -> list[Track]:
    width, height = frame_bounds
    for t in tracks:
        if not t.active:
            continue
        if t.id not in matched_ids:
            t.miss_count += 1
            t.streak = 0
            if t.miss_count >= cfg.max_unlocks:
                t.clear()
                continue
        cx, cy = t.region.center
        if not (0 <= cx < width and 0 <= cy < height):
            t.clear()
    return tracks


# -- history and interpolation ---------------------------------------------------------


class TrackHistory(dict):
    """Track id -> ordered list of ``(t_us, Region)`` samples."""

    def add(self, track_id: int, t: int, region: Region) -> None:
        samples = self.setdefault(track_id, [])
        if samples and t <= samples[-1][0]:
            raise OrderingError(f"history for track {track_id} must strictly increase in time")
        samples.append((t, region))


def interpolate(history: dict, track_id: int, t: float) -> Region:
    """Linear interpolation of a track's region between its two bracketing samples.

    Valid on the closed lifetime ``[t_1, t_n]``; sample times are returned exactly.
    """
    if track_id not in history:
        raise KeyError(f"unknown track id {track_id}")
    samples = history[track_id]
    t_first, t_last = samples[0][0], samples[-1][0]
    if not t_first <= t <= t_last:
        raise ValueError(f"t={t} outside track {track_id} lifetime [{t_first}, {t_last}]")
    if t == t_last:
        return Region(*samples[-1][1])
    j = next(i for i, (ti, _) in enumerate(samples) if ti > t)
    (t0, r0), (t1, r1) = samples[j - 1], samples[j]
    lam = (t - t0) / (t1 - t0)
    return Region(*(p + lam * (q - p) for p, q in zip(r0, r1)))


# -- the stepper --------------------------------------------------------------------------


@dataclass
class TrackRecord:
    t_us: int
    id: int
    x: float
    y: float
    w: float
    h: float
    vx: float
    vy: float
    state: str

    @property
    def region(self) -> Region:
        return Region(self.x, self.y, self.w, self.h)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


# words held per tracker slot: id, x, y, w, h, vx, vy, state, miss, streak, w_o, h_o
SLOT_WORDS = 12
PAIR_WORDS = 3


class OverlapTracker:
    def __init__(self, cfg: TrackerConfig = TrackerConfig(), width: int = 240, height: int = 180, counter: OpCounter | None = None):
        self.cfg = cfg
        self.bounds = (width, height)
        self.arith = arithmetic_for(cfg.fx)
        self.slots = [Track() for _ in range(cfg.max_tracks)]
        self.history = TrackHistory()
        self.counter = counter if counter is not None else NullCounter()
        self.frame_index = -1
        self.last_t: int | None = None
        self.peak_state_bytes = 0
        self._next_id = 0
        self._pair_extent: dict[tuple[int, int], float] = {}
        self.transitions: list[tuple[TrackState, TrackState]] = []

    @property
    def active(self) -> list[Track]:
        return [t for t in self.slots if t.active]

    def state_bytes(self) -> int:
        return WORD * (SLOT_WORDS * len(self.slots) + PAIR_WORDS * len(self._pair_extent))

    def _new_track(self, slot: Track, proposal: Region) -> None:
        slot.clear()
        slot.id = self._next_id
        self._next_id += 1
        slot.region = Region(*proposal)
        slot.state = TRACKING
        slot.streak = 1

    def _set(self, slot: Track, new: Track) -> None:
        for f in dataclasses.fields(Track):
            setattr(slot, f.name, getattr(new, f.name))

    def step(self, proposals: list[Region], t: int) -> list[TrackRecord]:
        if self.last_t is not None and t <= self.last_t:
            raise OrderingError(f"step time {t} not after previous {self.last_t}")
        dt = 0.0 if self.last_t is None else (t - self.last_t) / 1e6
        self.frame_index += 1
        cfg, arith, ops = self.cfg, self.arith, self.counter
        before = {id(s): s.state for s in self.slots}

        active = self.active
        flagged = detect_occlusion(active, cfg, dt, self.bounds) if dt > 0 else []
        n_pairs = len(active) * (len(active) - 1) // 2
        ops.tally(adds=10 * n_pairs * cfg.occlusion_horizon, muls=5 * n_pairs * cfg.occlusion_horizon,
                  cmps=10 * n_pairs * cfg.occlusion_horizon)
        flagged_ids = {i for pair in flagged for i in pair}

        asg = assign(proposals, active, cfg, dt, self.bounds, arith)
        preds, ratios = asg.predictions, asg.ratios
        ops.tally(adds=2 * len(active), muls=2 * len(active), cmps=4 * len(active))
        ops.tally(adds=6 * len(proposals) * len(active), muls=4 * len(proposals) * len(active),
                  cmps=8 * len(proposals) * len(active))

        by_id = {tr.id: tr for tr in active}
        components = _components(len(proposals), [tr.id for tr in active], ratios)
        matched: set[int] = set()
        occluded_now: set[int] = set()
        unmatched_props: list[int] = []

        for props, tids in components:
            if not tids:
                unmatched_props.extend(props)
                continue
            tracks = [by_id[i] for i in tids]
            if len(tracks) == 1:
                tr = tracks[0]
                region = proposals[props[0]] if len(props) == 1 else merge_proposals([proposals[i] for i in props], preds[tr.id])
                self._apply(tr, region, dt)
            elif len(props) == 1:
                occluded_now.update(self._occlude(tracks, proposals[props[0]], flagged_ids))
            else:
                self._split(tracks, [proposals[i] for i in props], ratios, props, preds, dt)
            matched.update(tids)

        for pi in sorted(unmatched_props, key=lambda i: (proposals[i].x, proposals[i].y)):
            free = next((s for s in self.slots if not s.active), None)
            if free is None:
                break
            self._new_track(free, proposals[pi])
            matched.add(free.id)

        # unmatched tracks coast along their velocity
        for tr in active:
            if tr.id not in matched:
                tr.region = propagate(tr, dt, arith)

        post_process(self.slots, matched, self.bounds, cfg)
        ops.tally(adds=len(active), cmps=3 * len(active))

        for tr in self.slots:
            if not tr.active:
                continue
            tr.occluded_last = tr.id in occluded_now
            if tr.id not in flagged_ids and tr.id not in occluded_now:
                tr.pre_occlusion_size = None
            tr.last_frame, tr.last_t = self.frame_index, t
            self.history.add(tr.id, t, tr.region)
        keep = {tr.id for tr in self.slots if tr.active} & (occluded_now | flagged_ids)
        self._pair_extent = {k: v for k, v in self._pair_extent.items() if k[0] in keep and k[1] in keep}

        for s in self.slots:
            prev = before[id(s)]
            if prev is not s.state or s.state is LOCKED:
                self.transitions.append((prev, s.state))
        self.peak_state_bytes = max(self.peak_state_bytes, self.state_bytes())
        self.last_t = t
        return [
            TrackRecord(t, tr.id, *round_region(tr.region), tr.vx, tr.vy, tr.state.value)
            for tr in sorted(self.slots, key=lambda s: s.id)
            if tr.state is LOCKED
        ]

    def _apply(self, tr: Track, region: Region, dt: float) -> None:
        if tr.occluded_last:
            # first clean match after an occlusion: the stored region was a split
            # estimate, so take the proposal as-is and keep the held velocity
            tr.region = Region(*region)
            _advance_state(tr)
        else:
            self._set(tr, update_track(tr, region, self.cfg, dt, self.arith))
        self.counter.tally(adds=26, muls=22)

    def _occlude(self, tracks: list[Track], proposal: Region, flagged_ids: set[int]) -> set[int]:
        """One proposal shared by several tracks; velocities are held through the occlusion."""
        for tr in tracks:
            if tr.pre_occlusion_size is None:
                tr.pre_occlusion_size = (tr.region.w, tr.region.h)
        if len(tracks) != 2:
            for tr in tracks:
                tr.region = Region(*proposal)
                _advance_state(tr)
            return {tr.id for tr in tracks}
        a, b = _leader_first(*tracks)
        key = (min(a.id, b.id), max(a.id, b.id))
        flags = occlusion_flags(a, b, proposal, self._pair_extent.get(key))
        if flags.cd and _axis_velocity(a, flags.axis) < 0:
            # travel toward the near corner: the slower track is the one left behind
            flags = dataclasses.replace(flags, hvo=not flags.hvo)
        ra, rb = resolve_occlusion(a, b, proposal, flags)
        self._pair_extent[key] = _extent(proposal, flags.axis)
        for tr, r in ((a, ra), (b, rb)):
            tr.region = Region(*r)
            _advance_state(tr)
        self.counter.tally(adds=12, cmps=8)
        return {a.id, b.id}

    def _split(self, tracks, props, ratios, prop_idx, preds, dt) -> None:
        """Several proposals and several tracks in one connected group."""
        pairs: dict[int, list[Region]] = {}
        if len(tracks) == 2 and all(t.pre_occlusion_size is not None or t.occluded_last for t in tracks):
            lead, other = _leader_first(*tracks)
            axis = _pair_axis(lead, other)
            order = sorted(props, key=lambda r: (r.center[0] if axis == "x" else r.center[1]))
            pairs[lead.id] = [order[-1]]
            pairs[other.id] = [order[0]]
            for r in order[1:-1]:
                tgt = min((lead, other), key=lambda t: math.dist(r.center, preds[t.id].center))
                pairs[tgt.id].append(r)
        else:
            cand = sorted(((-r, pi, tid) for (pi, tid), r in ratios.items() if pi in prop_idx),
                          key=lambda c: c[:2])
            used_p, used_t = set(), set()
            for _, pi, tid in cand:
                if pi in used_p or tid in used_t:
                    continue
                used_p.add(pi)
                used_t.add(tid)
                pairs[tid] = [props[prop_idx.index(pi)]]
            for pi in prop_idx:
                if pi in used_p:
                    continue
                best = max((ratios[(pi, tid)], -tid) for tid in pairs if (pi, tid) in ratios)
                pairs[-best[1]].append(props[prop_idx.index(pi)])
        for tr in tracks:
            got = pairs.get(tr.id)
            if not got:
                continue
            region = got[0] if len(got) == 1 else merge_proposals(got, preds[tr.id])
            self._apply(tr, region, dt)


def _leader_first(a: Track, b: Track) -> tuple[Track, Track]:
    """Order a pair so the track moving furthest along the shared axis comes first."""
    axis = _pair_axis(a, b)
    va, vb = _axis_velocity(a, axis), _axis_velocity(b, axis)
    if va > vb or (va == vb and a.id < b.id):
        return a, b
    return b, a


def _components(n_props: int, track_ids: list[int], ratios: dict) -> list[tuple[list[int], list[int]]]:
    parent: dict = {}

    def find(k):
        while parent.setdefault(k, k) != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    for pi in range(n_props):
        find(("p", pi))
    for tid in track_ids:
        find(("t", tid))
    for pi, tid in ratios:
        parent[find(("p", pi))] = find(("t", tid))
    groups: dict = {}
    for pi in range(n_props):
        groups.setdefault(find(("p", pi)), ([], []))[0].append(pi)
    for tid in track_ids:
        groups.setdefault(find(("t", tid)), ([], []))[1].append(tid)
    return [g for g in groups.values() if g[0]]
