"""End-to-end runs: events -> frames -> proposals -> tracker records."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .ebms import EbmsTracker
from .events import BinaryFrame, iter_frames
from .instrument import OpCounter
from .quant import fixed_mode
from .regionprop import frame_proposals
from .regions import Region
from .tracker import OverlapTracker, TrackHistory, TrackRecord


@dataclass
class RunResult:
    records: list[TrackRecord] = field(default_factory=list)
    frame_times: list[int] = field(default_factory=list)
    history: TrackHistory = field(default_factory=TrackHistory)
    counter: OpCounter = field(default_factory=OpCounter)
    peak_state_bytes: int = 0
    n_events: int = 0
    proposals: list[list[Region]] = field(default_factory=list)
    transitions: list = field(default_factory=list)


def run_overlap(
    events: np.ndarray,
    cfg: PipelineConfig = PipelineConfig(),
    n_frames: int | None = None,
    fixed: bool = False,
    keep_frames: list | None = None,
) -> RunResult:
    tcfg = cfg.tracker
    if fixed:
        tcfg = fixed_mode(tcfg)
    counter = OpCounter()
    trk = OverlapTracker(tcfg, cfg.sensor.width, cfg.sensor.height, counter)
    res = RunResult(counter=counter, n_events=len(events))
    for frame, _ in iter_frames(events, cfg.frame.period_us, cfg.frame.min_count,
                                cfg.sensor.width, cfg.sensor.height, n_frames):
        props = frame_proposals(frame, cfg.rp)
        res.proposals.append(props)
        res.records.extend(trk.step(props, frame.t_end))
        res.frame_times.append(frame.t_end)
        if keep_frames is not None:
            keep_frames.append(frame)
    res.history = trk.history
    res.peak_state_bytes = trk.peak_state_bytes
    res.transitions = trk.transitions
    return res


def run_ebms(events: np.ndarray, cfg: PipelineConfig = PipelineConfig(), n_frames: int | None = None) -> RunResult:
    counter = OpCounter()
    trk = EbmsTracker(cfg.ebms, cfg.sensor.width, cfg.sensor.height, counter)
    res = RunResult(counter=counter, n_events=len(events))
    for frame, window in iter_frames(events, cfg.frame.period_us, cfg.frame.min_count,
                                     cfg.sensor.width, cfg.sensor.height, n_frames):
        trk.feed(window)
        res.records.extend(trk.report(frame.t_end))
        res.frame_times.append(frame.t_end)
    for r in res.records:
        res.history.add(r.id, r.t_us, r.region)
    res.peak_state_bytes = trk.peak_state_bytes
    return res


def write_records(path, records: list[TrackRecord]) -> None:
    with open(path, "w", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r.as_dict(), separators=(",", ":")) + "\n")


def read_records(path) -> list[TrackRecord]:
    out = []
    with open(path) as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(TrackRecord(**json.loads(line)))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{n}: bad track record ({exc})") from None
    return out


def frames_by_time(frames: list[BinaryFrame]) -> dict[int, BinaryFrame]:
    return {f.t_end: f for f in frames}
