"""Command-line runner: ``etrk synth | track | eval | export | bench``."""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import config as config_mod
from .classify import StubClassifier, export_tracks, read_labels, write_track_labels
from .evaluate import (
    ResourceReport, build_frames, curve_to_kv, format_report, format_resources,
    parse_thresholds, pr_sweep, resource_compare,
)
from .events import EventError, format_for_path, iter_frames, read_events, write_events
from .pipeline import frames_by_time, read_records, run_ebms, run_overlap, write_records
from .render import write_overlays
from .synth import SceneError, event_rate, generate, load_scene, preset, read_ground_truth, write_ground_truth


class CliError(Exception):
    pass


def _out(args, name: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _parse_set(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise CliError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _load_config(args) -> config_mod.PipelineConfig:
    if args.config is not None and not os.path.isfile(args.config):
        raise CliError(f"config file not found: {args.config}")
    overrides = _parse_set(args.set)
    if getattr(args, "interpolate", False):
        overrides["eval.interpolate"] = True
    return config_mod.load(args.config, overrides)


def _require(path: str, what: str) -> str:
    if not os.path.isfile(path):
        raise CliError(f"{what} not found: {path}")
    return path


def _load_events(path, cfg):
    _require(path, "event file")
    return read_events(path, format_for_path(path), cfg.sensor.width, cfg.sensor.height)


def _scene(args, cfg):
    if args.scene:
        spec = load_scene(config_mod.read_toml(_require(args.scene, "scene file")))
        return dataclasses.replace(spec, seed=args.seed)
    spec = preset(args.preset, seed=args.seed, noise=args.noise, rate_scale=args.rate_scale)
    return dataclasses.replace(
        spec, width=cfg.sensor.width, height=cfg.sensor.height, frame_period_us=cfg.frame.period_us
    )


# -- subcommands ----------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    spec = _scene(args, cfg)
    events, gt = generate(spec)
    ev_path = args.events or _out(args, "events.csv")
    gt_path = args.gt or _out(args, "gt.csv")
    write_events(ev_path, events, format_for_path(ev_path))
    write_ground_truth(gt_path, gt)
    print(f"wrote {len(events)} events to {ev_path} and {len(gt)} ground-truth tracks to {gt_path}")
    return 0


def _run(args, cfg, events):
    n_frames = args.frames
    if args.tracker == "ebms":
        return run_ebms(events, cfg, n_frames), None
    frames = [] if args.overlays else None
    return run_overlap(events, cfg, n_frames, fixed=args.fixed, keep_frames=frames), frames


def cmd_track(args) -> int:
    cfg = _load_config(args)
    events = _load_events(args.events, cfg)
    res, frames = _run(args, cfg, events)
    out = args.out or _out(args, "tracks.jsonl")
    write_records(out, res.records)
    print(f"{len(res.frame_times)} frames, {len({r.id for r in res.records})} track ids, "
          f"{len(res.records)} records -> {out}")
    if args.overlays:
        if frames is None:
            frames = [f for f, _ in iter_frames(events, cfg.frame.period_us, cfg.frame.min_count,
                                                cfg.sensor.width, cfg.sensor.height, args.frames)]
        gt = read_ground_truth(_require(args.gt, "ground-truth file")) if args.gt else []
        odir = os.path.join(args.out_dir, "overlays")
        names = write_overlays(odir, frames, res.records, gt)
        print(f"wrote {len(names)} overlays to {odir}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    records = read_records(_require(args.tracks, "track file"))
    gt = read_ground_truth(_require(args.gt, "ground-truth file"))
    thresholds = parse_thresholds(args.thresholds)
    frames, _ = build_frames(records, gt, t_min=cfg.frame.period_us, interpolate_tracks=cfg.eval.interpolate)
    curve = pr_sweep(frames, thresholds)
    title = f"{os.path.basename(args.tracks)} vs {os.path.basename(args.gt)}"
    if cfg.eval.interpolate:
        title += " (interpolated at ground-truth times)"
    report = format_report(curve, title=title)
    with open(args.out or _out(args, "report.txt"), "w", newline="\n") as fh:
        fh.write(report)
    with open(args.kv or _out(args, "metrics.kv"), "w", newline="\n") as fh:
        fh.write(curve_to_kv(curve))
    sys.stdout.write(report)
    return 0


def cmd_export(args) -> int:
    cfg = _load_config(args)
    events = _load_events(args.events, cfg)
    records = read_records(_require(args.tracks, "track file"))
    frames = [f for f, _ in iter_frames(events, cfg.frame.period_us, cfg.frame.min_count,
                                        cfg.sensor.width, cfg.sensor.height, args.frames)]
    classifier = StubClassifier(seed=args.seed) if args.stub_classifier else None
    odir = os.path.join(args.out_dir, "export")
    res = export_tracks(frames_by_time(frames), records, odir, cfg.export.size, cfg.export.slots, classifier)
    waiting = sum(1 for _, _, w in res.schedule_log if w)
    print(f"exported {len(res.crops)} crops to {odir}; {waiting} frames with unscheduled tracks")
    labels = res.labels
    if args.vote:
        labels = read_labels(_require(args.vote, "label file"))
    if labels:
        path = os.path.join(odir, "track_labels.csv")
        write_track_labels(path, labels)
        print(f"per-track labels -> {path}")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    if args.events:
        events = _load_events(args.events, cfg)
        n_frames = args.frames
        label = args.events
    else:
        spec = _scene(args, cfg)
        events, _ = generate(spec)
        n_frames = spec.n_frames
        label = f"{args.preset} (seed {args.seed}, ~{event_rate(spec):.0f} object events/s)"
    a = ResourceReport.from_run(run_overlap(events, cfg, n_frames, fixed=args.fixed))
    b = ResourceReport.from_run(run_ebms(events, cfg, n_frames))
    cmp = resource_compare(a, b)
    lines = [f"# bench: {label}", "# a = overlap tracker, b = ebms; ratios are b/a"]
    lines += format_resources(cmp)
    # the binary frame feeding region proposals is not tracker state, shown for scale
    lines.append(f"frame_buffer_bytes={-(-cfg.sensor.width * cfg.sensor.height // 8)}")
    text = "\n".join(lines) + "\n"
    with open(_out(args, "bench.txt"), "w", newline="\n") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0


# -- argument parsing -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default=".", help="directory for outputs (default: .)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override, repeatable")

    # shared flags go on every subcommand (etrk track --seed 1 ...)
    p = argparse.ArgumentParser(prog="etrk", description="Event-camera overlap tracker pipeline.")
    sub = p.add_subparsers(dest="command", required=True)

    def scene_args(sp):
        sp.add_argument("--preset", default="single_const_velocity")
        sp.add_argument("--scene", help="TOML scene file instead of a preset")
        sp.add_argument("--noise", type=float, default=0.05, help="background events/s per pixel")
        sp.add_argument("--rate-scale", type=float, default=1.0, help="multiply object event rates")

    sp = sub.add_parser("synth", parents=[common], help="generate a synthetic scene")
    scene_args(sp)
    sp.add_argument("--events", help="event output (.csv or .raw)")
    sp.add_argument("--gt", help="ground-truth CSV output")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("track", parents=[common], help="run a tracker over an event file")
    sp.add_argument("--events", required=True)
    sp.add_argument("--out", help="track records (JSON lines)")
    sp.add_argument("--tracker", choices=("overlap", "ebms"), default="overlap")
    sp.add_argument("--fixed", action="store_true", help="fixed-point arithmetic")
    sp.add_argument("--frames", type=int, help="number of frames (default: cover all events)")
    sp.add_argument("--overlays", action="store_true", help="write PPM overlays to OUT_DIR/overlays")
    sp.add_argument("--gt", help="ground truth to draw on overlays")
    sp.set_defaults(func=cmd_track)

    sp = sub.add_parser("eval", parents=[common], help="precision/recall over an IoU sweep")
    sp.add_argument("--tracks", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--thresholds", default="0.1:0.9:0.1", help="lo:hi:step or comma list")
    sp.add_argument("--interpolate", action="store_true", help="sample tracks at ground-truth times")
    sp.add_argument("--out", help="report path")
    sp.add_argument("--kv", help="key=value metrics path")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("export", parents=[common], help="crops, spikes and slot schedule")
    sp.add_argument("--events", required=True)
    sp.add_argument("--tracks", required=True)
    sp.add_argument("--frames", type=int)
    sp.add_argument("--vote", help="CSV id,frame,label of per-sample labels to reduce per track")
    sp.add_argument("--stub-classifier", action="store_true", help="label crops with the seeded stub")
    sp.set_defaults(func=cmd_export)

    sp = sub.add_parser("bench", parents=[common], help="overlap tracker vs ebms resource comparison")
    scene_args(sp)
    sp.set_defaults(preset="crossing_opposite", rate_scale=3.0)
    sp.add_argument("--events", help="event file instead of a generated scene")
    sp.add_argument("--frames", type=int)
    sp.add_argument("--fixed", action="store_true")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, config_mod.ConfigError, SceneError, EventError, ValueError, OSError) as exc:
        print(f"etrk {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
