"""Overlay images: binary frame, ground-truth boxes and ID-coloured track boxes as PPM."""

from __future__ import annotations

import os

import numpy as np

from .regions import Region, clip_region

GT_COLOR = (0, 200, 0)
_PALETTE = np.array([
    (230, 25, 75), (0, 130, 200), (245, 130, 48), (145, 30, 180),
    (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 190),
], dtype=np.uint8)


def track_color(track_id: int) -> tuple[int, int, int]:
    base = _PALETTE[track_id % len(_PALETTE)].astype(int)
    # darken on each trip round the palette so IDs 0 and 8 differ
    shade = 1.0 - 0.25 * ((track_id // len(_PALETTE)) % 3)
    return tuple(int(c * shade) for c in base)


def draw_box(img: np.ndarray, region: Region, color) -> None:
    h, w = img.shape[:2]
    box = clip_region(Region(*(int(round(v)) for v in region)), w, h)
    if box is None:
        return
    x0, y0, x1, y1 = box.x, box.y, box.x + box.w - 1, box.y + box.h - 1
    img[y0, x0:x1 + 1] = color
    img[y1, x0:x1 + 1] = color
    img[y0:y1 + 1, x0] = color
    img[y0:y1 + 1, x1] = color


def render_overlay(bits: np.ndarray, tracks: list[tuple[int, Region]], gts: list[Region] = ()) -> np.ndarray:
    img = np.where(np.asarray(bits, dtype=bool)[..., None], 255, 0).astype(np.uint8).repeat(3, axis=2)
    img[~bits.astype(bool)] = (24, 24, 24)
    for g in gts:
        draw_box(img, g, GT_COLOR)
    for tid, r in tracks:
        draw_box(img, r, track_color(tid))
    return img


def write_ppm(path, img: np.ndarray) -> None:
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def write_overlays(out_dir, frames, records, gt_tracks=()) -> list[str]:
    """One ``overlay_<J>.ppm`` per frame; returns the file names written."""
    os.makedirs(out_dir, exist_ok=True)
    recs: dict[int, list] = {}
    for r in records:
        recs.setdefault(r.t_us, []).append((r.id, r.region))
    gts: dict[int, list] = {}
    for g in gt_tracks:
        for t, box in g.samples:
            gts.setdefault(t, []).append(box)
    names = []
    for f in frames:
        name = f"overlay_{f.index:05d}.ppm"
        write_ppm(os.path.join(out_dir, name), render_overlay(f.bits, recs.get(f.t_end, []), gts.get(f.t_end, [])))
        names.append(name)
    return names
