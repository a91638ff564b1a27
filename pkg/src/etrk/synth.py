"""Synthetic event scenes with exact ground truth.

Each object is a rectangle moving at constant velocity. A static event camera
only sees its moving outline, so events are emitted on a band of ``edge``
pixels along the rectangle border, at the object's position at the event's own
timestamp, plus uniform background noise.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .events import EVENT_DTYPE
from .regions import Region, clip_region, round_half_up


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectSpec:
    w: int
    h: int
    x0: float
    y0: float
    vx: float = 0.0
    vy: float = 0.0
    rate: float = 150.0  # events/s per boundary pixel
    t_enter_us: int = 0
    t_exit_us: int | None = None
    edge: int = 2

    def position(self, t_us: float) -> tuple[float, float]:
        s = t_us / 1e6
        return self.x0 + self.vx * s, self.y0 + self.vy * s


@dataclass(frozen=True)
class SceneSpec:
    width: int = 240
    height: int = 180
    duration_us: int = 1_000_000
    frame_period_us: int = 33_000
    objects: tuple[ObjectSpec, ...] = ()
    noise_rate: float = 0.0  # events/s per pixel
    seed: int = 0

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise SceneError("sensor size must be positive")
        if self.duration_us <= 0 or self.frame_period_us <= 0:
            raise SceneError("duration and frame period must be positive")
        if self.noise_rate < 0:
            raise SceneError("noise rate must be non-negative")
        for i, o in enumerate(self.objects):
            if o.w < 1 or o.h < 1 or o.edge < 1:
                raise SceneError(f"object {i}: size and edge width must be positive")
            if o.rate < 0:
                raise SceneError(f"object {i}: negative event rate")
            t_exit = self.duration_us if o.t_exit_us is None else o.t_exit_us
            if not 0 <= o.t_enter_us < t_exit:
                raise SceneError(f"object {i}: empty or negative active interval")

    @property
    def n_frames(self) -> int:
        return self.duration_us // self.frame_period_us


@dataclass
class GroundTruthTrack:
    id: int
    samples: list[tuple[int, Region]] = field(default_factory=list)


def _boundary_offsets(w: int, h: int, edge: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    ring = np.minimum(np.minimum(xx, yy), np.minimum(w - 1 - xx, h - 1 - yy)) < edge
    return np.stack([xx[ring], yy[ring]], axis=1)


def _round_half_up(a: np.ndarray) -> np.ndarray:
    return np.floor(a + 0.5).astype(np.int64)


def generate(spec: SceneSpec) -> tuple[np.ndarray, list[GroundTruthTrack]]:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    chunks = []
    for o in spec.objects:
        t_exit = spec.duration_us if o.t_exit_us is None else min(o.t_exit_us, spec.duration_us)
        span = t_exit - o.t_enter_us
        offsets = _boundary_offsets(o.w, o.h, o.edge)
        n = rng.poisson(o.rate * len(offsets) * span / 1e6)
        t = o.t_enter_us + np.floor(rng.random(n) * span).astype(np.int64)
        pick = rng.integers(0, len(offsets), n)
        pol = rng.integers(0, 2, n)
        s = t / 1e6
        x = _round_half_up(o.x0 + o.vx * s) + offsets[pick, 0]
        y = _round_half_up(o.y0 + o.vy * s) + offsets[pick, 1]
        chunks.append((t, x, y, pol))
    n_noise = rng.poisson(spec.noise_rate * spec.width * spec.height * spec.duration_us / 1e6)
    chunks.append((
        np.floor(rng.random(n_noise) * spec.duration_us).astype(np.int64),
        rng.integers(0, spec.width, n_noise),
        rng.integers(0, spec.height, n_noise),
        rng.integers(0, 2, n_noise),
    ))
    t, x, y, p = (np.concatenate([c[i] for c in chunks]) for i in range(4))
    keep = (x >= 0) & (x < spec.width) & (y >= 0) & (y < spec.height)
    t, x, y, p = t[keep], x[keep], y[keep], p[keep]
    order = np.argsort(t, kind="stable")
    events = np.empty(len(order), dtype=EVENT_DTYPE)
    events["t"], events["x"], events["y"], events["p"] = t[order], x[order], y[order], p[order]
    return events, ground_truth(spec)


def ground_truth(spec: SceneSpec) -> list[GroundTruthTrack]:
    """Boxes at every frame boundary ``k * period`` while the object is on the sensor."""
    tracks = []
    for i, o in enumerate(spec.objects):
        t_exit = spec.duration_us if o.t_exit_us is None else o.t_exit_us
        gt = GroundTruthTrack(i)
        for k in range(spec.n_frames + 1):
            t = k * spec.frame_period_us
            if not o.t_enter_us <= t <= t_exit:
                continue
            x, y = o.position(t)
            box = clip_region(Region(round_half_up(x), round_half_up(y), o.w, o.h), spec.width, spec.height)
            if box is not None:
                gt.samples.append((t, box))
        if gt.samples:
            tracks.append(gt)
    return tracks


def write_ground_truth(path, tracks: list[GroundTruthTrack]) -> None:
    rows = sorted((t, g.id, r) for g in tracks for t, r in g.samples)
    with open(path, "w", newline="\n") as fh:
        fh.write("id,t_us,x,y,w,h\n")
        for t, gid, r in rows:
            fh.write(f"{gid},{t},{int(r.x)},{int(r.y)},{int(r.w)},{int(r.h)}\n")


def read_ground_truth(path) -> list[GroundTruthTrack]:
    by_id: dict[int, GroundTruthTrack] = {}
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != ["id", "t_us", "x", "y", "w", "h"]:
            raise ValueError(f"{path}: unexpected ground-truth header {header}")
        for line in fh:
            if not line.strip():
                continue
            gid, t, x, y, w, h = (int(float(v)) for v in line.split(","))
            by_id.setdefault(gid, GroundTruthTrack(gid)).samples.append((t, Region(x, y, w, h)))
    for g in by_id.values():
        g.samples.sort(key=lambda s: s[0])
    return [by_id[k] for k in sorted(by_id)]


# -- presets --------------------------------------------------------------------------

# 4 px and 1 px per 33 ms frame: whole-pixel steps keep frame-to-frame
# displacements free of sub-pixel aliasing
_PX_PER_FRAME = 1e6 / 33_000


def _single_const_velocity(seed, noise):
    return SceneSpec(
        duration_us=30 * 33_000, noise_rate=noise, seed=seed,
        objects=(ObjectSpec(30, 20, 30.25, 70.25, vx=4 * _PX_PER_FRAME, vy=_PX_PER_FRAME, rate=400),),
    )


def _crossing_opposite(seed, noise):
    return SceneSpec(
        duration_us=1_600_000, noise_rate=noise, seed=seed,
        objects=(ObjectSpec(20, 14, 30, 80, vx=90), ObjectSpec(24, 14, 186, 80, vx=-90)),
    )


def _overtake_same_direction(seed, noise):
    return SceneSpec(
        duration_us=2_000_000, noise_rate=noise, seed=seed,
        objects=(ObjectSpec(20, 14, 10, 80, vx=90), ObjectSpec(22, 14, 60, 80, vx=35)),
    )


def _enter_exit(seed, noise):
    return SceneSpec(
        duration_us=2_500_000, noise_rate=noise, seed=seed,
        objects=(ObjectSpec(24, 16, -24, 60, vx=110),),
    )


def _nine_objects(seed, noise):
    objs = tuple(
        ObjectSpec(14, 12, x, y, vx=8, vy=4)
        for y in (30, 85, 140)
        for x in (30, 110, 190)
    )
    return SceneSpec(duration_us=20 * 33_000, noise_rate=noise, seed=seed, objects=objs)


def _human_scale(seed, noise):
    return SceneSpec(
        duration_us=1_500_000, noise_rate=noise, seed=seed,
        objects=(ObjectSpec(6, 14, 100, 80, vx=15, vy=3),),
    )


PRESETS = {
    "single_const_velocity": _single_const_velocity,
    "crossing_opposite": _crossing_opposite,
    "overtake_same_direction": _overtake_same_direction,
    "enter_exit": _enter_exit,
    "nine_objects": _nine_objects,
    "human_scale": _human_scale,
}


def preset(name: str, seed: int = 0, noise: float = 0.05, rate_scale: float = 1.0) -> SceneSpec:
    try:
        spec = PRESETS[name](seed, noise)
    except KeyError:
        raise SceneError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    if rate_scale != 1.0:
        spec = dataclasses.replace(
            spec, objects=tuple(dataclasses.replace(o, rate=o.rate * rate_scale) for o in spec.objects)
        )
    return spec


def event_rate(spec: SceneSpec) -> float:
    """Expected object event rate in events/s while every object is on the sensor."""
    return sum(o.rate * len(_boundary_offsets(o.w, o.h, o.edge)) for o in spec.objects)


def load_scene(data: dict) -> SceneSpec:
    """Build a scene from a parsed TOML mapping with a ``[scene]`` table and ``[[objects]]``."""
    scene = dict(data.get("scene", {}))
    objs = data.get("objects", [])
    known = {f.name for f in dataclasses.fields(SceneSpec)} - {"objects"}
    bad = set(scene) - known
    if bad:
        raise SceneError(f"unknown scene keys: {sorted(bad)}")
    okeys = {f.name for f in dataclasses.fields(ObjectSpec)}
    parsed = []
    for i, o in enumerate(objs):
        bad = set(o) - okeys
        if bad:
            raise SceneError(f"object {i}: unknown keys {sorted(bad)}")
        try:
            parsed.append(ObjectSpec(**o))
        except TypeError as exc:
            raise SceneError(f"object {i}: {exc}") from None
    spec = SceneSpec(objects=tuple(parsed), **scene)
    spec.validate()
    return spec

