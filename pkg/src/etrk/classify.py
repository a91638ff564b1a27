"""Classification front-end: crops, fixed-size resize, spike lists, slot scheduling and voting.

The classifier itself is pluggable. ``StubClassifier`` stands in for a real
model so that the export and voting path can be exercised end to end.
"""

from __future__ import annotations

import csv
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Protocol, Sequence

import numpy as np

from .events import BinaryFrame, BoundsError
from .regions import Region, clip_region

DEFAULT_SIZE = 42
DEFAULT_SLOTS = 8


@dataclass
class TrackCrop:
    track_id: int
    frame_index: int
    bits: np.ndarray  # bool, (S, S)

    @property
    def size(self) -> int:
        return self.bits.shape[0]


@dataclass
class SpikeList:
    track_id: int
    frame_index: int
    spikes: list[tuple[int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.spikes)


def crop_track(frame: BinaryFrame | np.ndarray, region: Region) -> np.ndarray:
    bits = frame.bits if isinstance(frame, BinaryFrame) else np.asarray(frame, dtype=bool)
    x, y, w, h = (int(v) for v in region)
    H, W = bits.shape
    if w < 1 or h < 1 or x < 0 or y < 0 or x + w > W or y + h > H:
        raise BoundsError(f"region {tuple(region)} outside {W}x{H} frame")
    return bits[y:y + h, x:x + w].copy()


def resize_to_fixed(crop: np.ndarray, size: int = DEFAULT_SIZE, track_id: int = -1, frame_index: int = -1) -> TrackCrop:
    """Nearest-neighbour scaling: output (r, c) samples input (r*h//S, c*w//S)."""
    crop = np.asarray(crop, dtype=bool)
    if crop.ndim != 2 or crop.size == 0:
        raise ValueError("crop must be a non-empty 2-D image")
    h, w = crop.shape
    rows = (np.arange(size) * h) // size
    cols = (np.arange(size) * w) // size
    return TrackCrop(track_id, frame_index, crop[np.ix_(rows, cols)])


def encode_spikes(crop: TrackCrop) -> SpikeList:
    rr, cc = np.nonzero(crop.bits)  # row-major already
    return SpikeList(crop.track_id, crop.frame_index, list(zip(rr.tolist(), cc.tolist())))


def break_even_spikes(width: int, height: int, bits_per_spike: int) -> int:
    """Spike count above which sending the raw bitmap is cheaper than addresses."""
    if width < 1 or height < 1 or bits_per_spike < 1:
        raise ValueError("dimensions and bits per spike must be positive")
    return -(-(width * height) // bits_per_spike)


# -- time multiplexing ----------------------------------------------------------------


@dataclass
class SlotSchedule:
    slots: dict[int, int] = field(default_factory=dict)  # track id -> slot
    waiting: list[int] = field(default_factory=list)
    n_slots: int = DEFAULT_SLOTS

    def slot_of(self, track_id: int) -> int | None:
        return self.slots.get(track_id)


def schedule(locked_tracks: Iterable[int], sched: SlotSchedule | None = None) -> SlotSchedule:
    """Keep slots of retained tracks, free departed ones, fill lowest free slots by track ID."""
    sched = sched or SlotSchedule()
    present = sorted(set(locked_tracks))
    slots = {tid: s for tid, s in sched.slots.items() if tid in present}
    free = sorted(set(range(sched.n_slots)) - set(slots.values()))
    waiting = []
    for tid in present:
        if tid in slots:
            continue
        if free:
            slots[tid] = free.pop(0)
        else:
            waiting.append(tid)
    return SlotSchedule(slots, waiting, sched.n_slots)


def majority_vote(labels: Sequence[Hashable]) -> Hashable:
    """Modal label; ties go to whichever tied label appears first."""
    if not labels:
        raise ValueError("majority_vote needs at least one label")
    counts = Counter(labels)
    top = max(counts.values())
    return next(lab for lab in labels if counts[lab] == top)


# -- classifier interface -------------------------------------------------------------


class Classifier(Protocol):
    def classify(self, crop: TrackCrop, spikes: SpikeList) -> Hashable: ...


class StubClassifier:
    """Lookup by track id, falling back to a seeded draw from ``labels``."""

    def __init__(self, labels: Sequence[Hashable] = ("car", "bus", "person", "bike"), table: dict | None = None, seed: int = 0):
        self.labels = list(labels)
        self.table = dict(table or {})
        self.rng = np.random.default_rng(seed)

    def classify(self, crop: TrackCrop, spikes: SpikeList) -> Hashable:
        if crop.track_id in self.table:
            return self.table[crop.track_id]
        return self.labels[int(self.rng.integers(len(self.labels)))]


# -- export ---------------------------------------------------------------------------


def write_pbm(path, bits: np.ndarray) -> None:
    """Binary (P4) portable bitmap, 1 = black = active pixel."""
    bits = np.asarray(bits, dtype=bool)
    h, w = bits.shape
    with open(path, "wb") as fh:
        fh.write(f"P4\n{w} {h}\n".encode("ascii"))
        fh.write(np.packbits(bits, axis=1).tobytes())


def read_pbm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(maxsplit=3)
    if parts[0] != b"P4":
        raise ValueError(f"{path}: not a binary PBM")
    w, h = int(parts[1]), int(parts[2])
    raw = np.frombuffer(parts[3], dtype=np.uint8).reshape(h, -1)
    return np.unpackbits(raw, axis=1)[:, :w].astype(bool)


@dataclass
class ExportResult:
    crops: list[tuple[int, int, int, str]] = field(default_factory=list)  # id, frame, t_us, file
    spikes: list[SpikeList] = field(default_factory=list)
    schedule_log: list[tuple[int, dict[int, int], list[int]]] = field(default_factory=list)
    labels: dict[int, list] = field(default_factory=dict)


def export_tracks(
    frames: dict[int, BinaryFrame],
    records,
    out_dir,
    size: int = DEFAULT_SIZE,
    n_slots: int = DEFAULT_SLOTS,
    classifier: Classifier | None = None,
) -> ExportResult:
    """Crop, resize and encode every scheduled Locked record; write files under ``out_dir``.

    ``frames`` maps frame end time to the frame the records were produced on.
    Only tracks holding a slot at that frame are exported.
    """
    os.makedirs(out_dir, exist_ok=True)
    by_t: dict[int, list] = {}
    for r in records:
        if r.state == "Locked":
            by_t.setdefault(r.t_us, []).append(r)
    res = ExportResult()
    sched = SlotSchedule(n_slots=n_slots)
    for t in sorted(frames):
        frame = frames[t]
        recs = sorted(by_t.get(t, []), key=lambda r: r.id)
        sched = schedule([r.id for r in recs], sched)
        res.schedule_log.append((frame.index, dict(sched.slots), list(sched.waiting)))
        for r in recs:
            if r.id not in sched.slots:
                continue
            box = clip_region(Region(*(int(v) for v in r.region)), frame.width, frame.height)
            if box is None:
                continue
            tc = resize_to_fixed(crop_track(frame, box), size, r.id, frame.index)
            sl = encode_spikes(tc)
            name = f"track{r.id}_frame{frame.index}.pbm"
            write_pbm(os.path.join(out_dir, name), tc.bits)
            res.crops.append((r.id, frame.index, t, name))
            res.spikes.append(sl)
            if classifier is not None:
                res.labels.setdefault(r.id, []).append(classifier.classify(tc, sl))
    with open(os.path.join(out_dir, "manifest.csv"), "w", newline="\n") as fh:
        fh.write("id,frame,t_us,file\n")
        for row in res.crops:
            fh.write(",".join(str(v) for v in row) + "\n")
    with open(os.path.join(out_dir, "spikes.csv"), "w", newline="\n") as fh:
        fh.write("id,frame,row,col\n")
        for sl in res.spikes:
            for r, c in sl.spikes:
                fh.write(f"{sl.track_id},{sl.frame_index},{r},{c}\n")
    with open(os.path.join(out_dir, "schedule.log"), "w", newline="\n") as fh:
        fh.write("frame,slots,waiting\n")
        for j, slots, waiting in res.schedule_log:
            s = " ".join(f"{tid}:{slot}" for tid, slot in sorted(slots.items(), key=lambda kv: kv[1]))
            fh.write(f"{j},{s},{' '.join(map(str, waiting))}\n")
    return res


def read_labels(path) -> dict[int, list[str]]:
    """Per-sample labels from a CSV with columns ``id,frame,label``, in frame order."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "frame", "label"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns id,frame,label")
        for row in reader:
            rows.append((int(row["id"]), int(row["frame"]), row["label"]))
    out: dict[int, list[str]] = {}
    for tid, _, label in sorted(rows, key=lambda r: (r[0], r[1])):
        out.setdefault(tid, []).append(label)
    return out


def write_track_labels(path, labels: dict[int, list]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("id,label,samples\n")
        for tid in sorted(labels):
            fh.write(f"{tid},{majority_vote(labels[tid])},{len(labels[tid])}\n")


def vote_accuracy(p: float, n_samples: int, n_tracks: int, n_classes: int = 4, seed: int = 0) -> tuple[float, float]:
    """Simulated (per-sample, per-track) accuracy for label streams correct with probability ``p``.

    Wrong samples are spread uniformly over the other classes.
    """
    rng = np.random.default_rng(seed)
    correct = rng.random((n_tracks, n_samples)) < p
    wrong = rng.integers(1, n_classes, (n_tracks, n_samples))
    labels = np.where(correct, 0, wrong)
    per_track = sum(majority_vote(row.tolist()) == 0 for row in labels)
    return float(correct.mean()), per_track / n_tracks


def cheaper_as_bitmap(spikes: int, width: int, height: int, bits_per_spike: int) -> bool:
    return spikes > break_even_spikes(width, height, bits_per_spike)

