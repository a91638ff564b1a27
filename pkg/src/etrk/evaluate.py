"""IoU matching, precision/recall sweeps and resource comparisons.

Matching is per frame: at each evaluation timestamp, reported boxes are paired
greedily with ground-truth boxes in descending IoU order.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from .regions import Region
from .tracker import TrackHistory, interpolate, overlap_area


def iou(a: Region, b: Region) -> float:
    inter = overlap_area(a, b)
    union = a.w * a.h + b.w * b.h - inter
    if union <= 0:
        return 0.0
    return inter / union


@dataclass
class FrameMatch:
    tp: int
    fp: int
    fn: int
    pairs: list[tuple[int, int]]


def match_frame(tracks: list[Region], gts: list[Region], iou_thr: float) -> FrameMatch:
    cands = []
    for i, t in enumerate(tracks):
        for j, g in enumerate(gts):
            v = iou(t, g)
            if v >= iou_thr and v > 0:
                cands.append((-v, i, j))
    cands.sort()
    used_t, used_g, pairs = set(), set(), []
    for _, i, j in cands:
        if i in used_t or j in used_g:
            continue
        used_t.add(i)
        used_g.add(j)
        pairs.append((i, j))
    tp = len(pairs)
    return FrameMatch(tp, len(tracks) - tp, len(gts) - tp, pairs)


@dataclass
class EvalCurve:
    thresholds: list[float] = field(default_factory=list)
    precision: list[float] = field(default_factory=list)
    recall: list[float] = field(default_factory=list)
    tp: list[int] = field(default_factory=list)
    fp: list[int] = field(default_factory=list)
    fn: list[int] = field(default_factory=list)

    def rows(self):
        return zip(self.thresholds, self.precision, self.recall, self.tp, self.fp, self.fn)

    def at(self, thr: float) -> tuple[float, float]:
        i = min(range(len(self.thresholds)), key=lambda k: abs(self.thresholds[k] - thr))
        return self.precision[i], self.recall[i]


def pr_sweep(all_frames: list[tuple[list[Region], list[Region]]], thresholds) -> EvalCurve:
    """Aggregate TP/FP/FN over frames for each threshold.

    Precision with nothing reported is taken as 1.0; recall with no ground
    truth likewise.
    """
    curve = EvalCurve()
    for thr in thresholds:
        if not 0.0 < thr <= 1.0:
            raise ValueError(f"IoU threshold {thr} outside (0, 1]")
        tp = fp = fn = 0
        for tracks, gts in all_frames:
            m = match_frame(tracks, gts, thr)
            tp, fp, fn = tp + m.tp, fp + m.fp, fn + m.fn
        curve.thresholds.append(thr)
        curve.precision.append(tp / (tp + fp) if tp + fp else 1.0)
        curve.recall.append(tp / (tp + fn) if tp + fn else 1.0)
        curve.tp.append(tp)
        curve.fp.append(fp)
        curve.fn.append(fn)
    return curve


def parse_thresholds(spec: str) -> list[float]:
    """``"0.1:0.9:0.1"`` (inclusive range) or a comma list ``"0.3,0.5"``."""
    if ":" in spec:
        lo, hi, step = (float(v) for v in spec.split(":"))
        if step <= 0 or hi < lo:
            raise ValueError(f"bad threshold range {spec!r}")
        n = int(round((hi - lo) / step)) + 1
        return [round(lo + k * step, 10) for k in range(n)]
    return [float(v) for v in spec.split(",") if v.strip()]


def build_frames(records, gt_tracks, t_min: int = 1, interpolate_tracks: bool = False):
    """Pair reported boxes with ground truth at each evaluation timestamp.

    Timestamps are the union of ground-truth and record times at or after
    ``t_min``. With ``interpolate_tracks``, each track is instead sampled at
    the ground-truth times inside its lifetime.
    """
    gts: dict[int, list[Region]] = defaultdict(list)
    for g in gt_tracks:
        for t, r in g.samples:
            if t >= t_min:
                gts[t].append(Region(*r))
    reported: dict[int, list[Region]] = defaultdict(list)
    if interpolate_tracks:
        hist = TrackHistory()
        for r in sorted(records, key=lambda r: (r.id, r.t_us)):
            hist.add(r.id, r.t_us, r.region)
        for t in gts:
            for tid, samples in hist.items():
                if samples[0][0] <= t <= samples[-1][0]:
                    reported[t].append(interpolate(hist, tid, t))
    else:
        for r in records:
            if r.t_us >= t_min:
                reported[r.t_us].append(r.region)
    times = sorted(set(gts) | set(reported))
    return [(reported.get(t, []), gts.get(t, [])) for t in times], times


@dataclass
class ResourceReport:
    peak_state_bytes: int = 0
    adds: int = 0
    muls: int = 0
    cmps: int = 0
    n_frames: int = 0
    n_events: int = 0

    @property
    def ops(self) -> int:
        return self.adds + self.muls + self.cmps

    @classmethod
    def from_run(cls, run) -> "ResourceReport":
        c = run.counter
        return cls(run.peak_state_bytes, c.adds, c.muls, c.cmps, len(run.frame_times), run.n_events)


def resource_compare(run_a: ResourceReport, run_b: ResourceReport) -> dict:
    """Ratios of ``b`` over ``a`` plus the raw counts of both."""

    def ratio(num, den):
        if den == 0:
            return 1.0 if num == 0 else float("inf")
        return num / den

    return {
        "memory_ratio": ratio(run_b.peak_state_bytes, run_a.peak_state_bytes),
        "ops_ratio": ratio(run_b.ops, run_a.ops),
        "a": run_a,
        "b": run_b,
    }


def format_report(curve: EvalCurve, resources: dict | None = None, title: str = "") -> str:
    lines = []
    if title:
        lines.append(f"# {title}")
    lines.append("# matching: per-frame greedy IoU")
    lines.append("iou_thr,precision,recall,tp,fp,fn")
    for thr, p, r, tp, fp, fn in curve.rows():
        lines.append(f"{thr:.4g},{p:.6f},{r:.6f},{tp},{fp},{fn}")
    if resources:
        lines.append("")
        lines.append("[resources]")
        lines.extend(format_resources(resources))
    return "\n".join(lines) + "\n"


def format_resources(cmp: dict) -> list[str]:
    out = []
    for tag in ("a", "b"):
        r = cmp[tag]
        out.append(
            f"{tag}: peak_state_bytes={r.peak_state_bytes} adds={r.adds} muls={r.muls} "
            f"cmps={r.cmps} ops={r.ops} frames={r.n_frames} events={r.n_events}"
        )
    out.append(f"memory_ratio={cmp['memory_ratio']:.4f}")
    out.append(f"ops_ratio={cmp['ops_ratio']:.4f}")
    return out


def curve_to_kv(curve: EvalCurve) -> str:
    lines = []
    for thr, p, r, tp, fp, fn in curve.rows():
        key = f"iou_{thr:.4g}"
        lines += [f"{key}.precision={p:.6f}", f"{key}.recall={r:.6f}",
                  f"{key}.tp={tp}", f"{key}.fp={fp}", f"{key}.fn={fn}"]
    return "\n".join(lines) + "\n"
