"""Event stream parsing (CSV / raw binary) and fixed-period binary frames.

Events are held in a numpy structured array with fields ``t`` (microseconds),
``x``, ``y`` and ``p`` (polarity, 0 = OFF, 1 = ON).
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import BinaryIO, Iterator, NamedTuple

import numpy as np

EVENT_DTYPE = np.dtype([("t", "<i8"), ("x", "<i4"), ("y", "<i4"), ("p", "u1")])

CSV = "csv"
RAW = "raw"


class EventError(ValueError):
    pass


class ParseError(EventError):
    def __init__(self, msg: str, offset: int, line: int):
        super().__init__(f"{msg} (byte offset {offset}, line {line})")
        self.offset = offset
        self.line = line


class BoundsError(EventError):
    pass


class OrderingError(EventError):
    pass


class Event(NamedTuple):
    t: int
    x: int
    y: int
    polarity: int


def empty_events() -> np.ndarray:
    return np.zeros(0, dtype=EVENT_DTYPE)


def make_events(records) -> np.ndarray:
    """Build an event array from an iterable of ``(t, x, y, p)`` tuples."""
    return np.array([tuple(r) for r in records], dtype=EVENT_DTYPE)


def as_event(rec) -> Event:
    return Event(int(rec["t"]), int(rec["x"]), int(rec["y"]), int(rec["p"]))


def _check(events: np.ndarray, width: int, height: int, lines=None) -> None:
    if len(events) == 0:
        return
    bad = np.flatnonzero(
        (events["x"] < 0) | (events["x"] >= width) | (events["y"] < 0) | (events["y"] >= height)
    )
    if bad.size:
        i = int(bad[0])
        where = f"line {lines[i]}" if lines is not None else f"record {i}"
        raise BoundsError(
            f"event at {where} has pixel ({events['x'][i]}, {events['y'][i]}) "
            f"outside a {width}x{height} sensor"
        )
    back = np.flatnonzero(np.diff(events["t"]) < 0)
    if back.size:
        i = int(back[0]) + 1
        where = f"line {lines[i]}" if lines is not None else f"record {i}"
        raise OrderingError(
            f"timestamp regression at {where}: {events['t'][i]} after {events['t'][i - 1]}"
        )


def _parse_csv(data: bytes, width: int, height: int) -> np.ndarray:
    rows = []
    lines = []
    offset = 0
    for lineno, raw in enumerate(data.split(b"\n"), start=1):
        start = offset
        offset += len(raw) + 1
        text = raw.strip()
        if not text or text.startswith(b"#"):
            continue
        parts = text.split(b",")
        try:
            if len(parts) != 4:
                raise ValueError
            t, x, y, p = (int(v) for v in parts)
        except ValueError:
            raise ParseError(f"malformed event record {raw[:40]!r}", start, lineno) from None
        if t < 0 or p not in (0, 1):
            raise ParseError(f"invalid timestamp or polarity in {raw[:40]!r}", start, lineno)
        rows.append((t, x, y, p))
        lines.append(lineno)
    events = np.array(rows, dtype=EVENT_DTYPE) if rows else empty_events()
    _check(events, width, height, lines)
    return events


def _parse_raw(data: bytes, width: int, height: int) -> np.ndarray:
    n, rem = divmod(len(data), 16)
    if rem:
        raise ParseError(f"truncated raw record ({rem} trailing bytes)", n * 16, n + 1)
    words = np.frombuffer(data, dtype="<u4", count=n * 4).reshape(n, 4)
    bad = np.flatnonzero(words[:, 3] > 1)
    if bad.size:
        i = int(bad[0])
        raise ParseError(f"invalid polarity {words[i, 3]}", i * 16, i + 1)
    events = np.empty(n, dtype=EVENT_DTYPE)
    events["t"] = words[:, 0]
    events["x"] = words[:, 1]
    events["y"] = words[:, 2]
    events["p"] = words[:, 3]
    _check(events, width, height)
    return events


def parse_events(source: bytes | BinaryIO, fmt: str = CSV, width: int = 240, height: int = 180) -> np.ndarray:
    if not isinstance(source, (bytes, bytearray)):
        source = source.read()
    fmt = fmt.lower()
    if fmt == CSV:
        return _parse_csv(bytes(source), width, height)
    if fmt == RAW:
        return _parse_raw(bytes(source), width, height)
    raise ValueError(f"unknown event format {fmt!r}")


def format_for_path(path: str | os.PathLike) -> str:
    return RAW if str(path).lower().endswith((".raw", ".bin")) else CSV


def read_events(path, fmt: str | None = None, width: int = 240, height: int = 180) -> np.ndarray:
    with open(path, "rb") as fh:
        return parse_events(fh, fmt or format_for_path(path), width, height)


def write_events(path, events: np.ndarray, fmt: str | None = None) -> None:
    fmt = fmt or format_for_path(path)
    if fmt == RAW:
        words = np.empty((len(events), 4), dtype="<u4")
        for i, name in enumerate(("t", "x", "y", "p")):
            words[:, i] = events[name]
        with open(path, "wb") as fh:
            fh.write(words.tobytes())
        return
    buf = io.StringIO()
    buf.write("# t_us,x,y,polarity\n")
    for t, x, y, p in zip(events["t"].tolist(), events["x"].tolist(), events["y"].tolist(), events["p"].tolist()):
        buf.write(f"{t},{x},{y},{p}\n")
    with open(path, "w", newline="\n") as fh:
        fh.write(buf.getvalue())


@dataclass
class BinaryFrame:
    bits: np.ndarray  # bool, shape (height, width)
    index: int = 0
    t_start: int = 0
    t_end: int = 0

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(self.bits.sum())


def aggregate_frame(
    events: np.ndarray,
    t_start: int,
    period: int,
    min_count: int = 1,
    width: int = 240,
    height: int = 180,
    index: int = 0,
) -> BinaryFrame:
    """Binarize one window: a pixel is set iff it saw ``min_count`` events of either polarity."""
    if min_count < 1:
        raise ValueError("min_count must be positive")
    t_end = t_start + period
    if len(events) and ((events["t"] < t_start).any() or (events["t"] >= t_end).any()):
        raise EventError(f"event outside window [{t_start}, {t_end})")
    counts = np.zeros((height, width), dtype=np.int32)
    np.add.at(counts, (events["y"], events["x"]), 1)
    return BinaryFrame(counts >= min_count, index, t_start, t_end)


def iter_frames(
    events: np.ndarray,
    period: int,
    min_count: int = 1,
    width: int = 240,
    height: int = 180,
    n_frames: int | None = None,
    t0: int = 0,
) -> Iterator[tuple[BinaryFrame, np.ndarray]]:
    """Yield back-to-back half-open windows starting at ``t0`` with their events."""
    if n_frames is None:
        n_frames = 0 if len(events) == 0 else int((events["t"][-1] - t0) // period) + 1
    ts = events["t"]
    for j in range(n_frames):
        lo = t0 + j * period
        a, b = np.searchsorted(ts, [lo, lo + period], side="left")
        window = events[a:b]
        yield aggregate_frame(window, lo, period, min_count, width, height, index=j), window
