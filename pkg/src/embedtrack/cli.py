"""Command-line entry point.

Five subcommands wire the library into file-based workflows:

    simulate  config -> frames.jsonl
    train     frames.jsonl -> params.json + loss_trace.csv
    calibrate frames.jsonl + params.json -> threshold.json + sweep.csv + histogram.csv
    track     frames.jsonl + params.json + threshold -> tracks.jsonl
    eval      tracks.jsonl + frames.jsonl (or a counts fixture) -> report.json

Every subcommand writes its outputs under --out (a directory, created on
demand) plus a manifest.json recording the exact configuration, so a run
can be reproduced byte for byte from its manifest. Config values resolve as
dataclass defaults, then --config file entries, then explicit flags.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .association import distance_matrix, track_sequence
from .calibration import (
    LabeledDistance,
    PairCounts,
    distance_histogram,
    sweep_threshold,
    threshold_objective,
    write_histogram_csv,
    write_sweep_csv,
)
from .core import FrameRecord
from .datasets import (
    SimConfig,
    TrackRecord,
    build_mtmc_pairs,
    concat_neighbor_frames,
    labeled_batch_from_sample,
    load_frames,
    load_track_records,
    save_frames,
    save_track_records,
    simulate,
)
from .embedding import LossConfig, embed_batch, load_params, save_params
from .evaluation import (
    MotCounts,
    assign_predictions,
    mean_ap,
    mot_counts,
    mota,
    pair_accuracy,
    pair_counts,
)
from .training import TrainConfig, train

__all__ = ["main"]


def _add_config_flags(parser: argparse.ArgumentParser, cls) -> None:
    """One flag per dataclass field, typed from the field default.

    Flags default to None so that only explicitly passed values override the
    config file.
    """
    for f in dataclasses.fields(cls):
        flag = "--" + f.name.replace("_", "-")
        parser.add_argument(
            flag,
            dest=f.name,
            type=type(f.default),
            default=None,
            help=f"{cls.__name__}.{f.name} (default {f.default})",
        )


def _resolve_config(cls, file_values: dict, args: argparse.Namespace):
    """defaults < config file < flags, validated by the dataclass itself."""
    names = {f.name for f in dataclasses.fields(cls)}
    values = {k: v for k, v in file_values.items() if k in names}
    for name in names:
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            values[name] = flag_value
    return cls(**values)


def _load_config_file(path: Optional[str], known: set[str]) -> dict:
    if path is None:
        return {}
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown config keys in {path}: {sorted(unknown)}")
    return doc


def _config_field_names(*classes) -> set[str]:
    names: set[str] = set()
    for cls in classes:
        names |= {f.name for f in dataclasses.fields(cls)}
    return names


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(
    out: Path,
    subcommand: str,
    seed: Optional[int],
    inputs: dict[str, str],
    outputs: dict[str, str],
    config: dict,
) -> None:
    doc = {
        "subcommand": subcommand,
        "version": __version__,
        "seed": seed,
        "inputs": inputs,
        "outputs": outputs,
        "config": config,
    }
    (out / "manifest.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def cmd_simulate(args: argparse.Namespace) -> int:
    file_values = _load_config_file(args.config, _config_field_names(SimConfig))
    cfg = _resolve_config(SimConfig, file_values, args)
    out = _out_dir(args)
    frames, _ = simulate(cfg)
    save_frames(out / "frames.jsonl", frames)
    _write_manifest(
        out,
        "simulate",
        cfg.seed,
        inputs={},
        outputs={"frames": "frames.jsonl"},
        config=dataclasses.asdict(cfg),
    )
    return 0


def _consecutive_samples(frames: Sequence[FrameRecord], width: float):
    by_camera: dict[int, list[FrameRecord]] = {}
    for frame in frames:
        by_camera.setdefault(frame.camera_id, []).append(frame)
    samples = []
    for camera in sorted(by_camera):
        seq = by_camera[camera]
        for a, b in zip(seq, seq[1:]):
            if b.frame_index == a.frame_index + 1:
                samples.append(concat_neighbor_frames(a, b, width))
    return samples


def _auto_width(frames: Sequence[FrameRecord]) -> float:
    edges = [d.box.x2 for f in frames for d in f.detections]
    edges += [box.x2 for f in frames for box, _ in f.gt_boxes]
    if not edges:
        raise ValueError("cannot infer an image width from frames with no boxes")
    return float(max(edges))


def cmd_train(args: argparse.Namespace) -> int:
    file_values = _load_config_file(
        args.config, _config_field_names(LossConfig, TrainConfig)
    )
    loss_cfg = _resolve_config(LossConfig, file_values, args)
    train_cfg = _resolve_config(TrainConfig, file_values, args)
    out = _out_dir(args)

    frames = load_frames(args.frames)
    if not frames:
        raise ValueError(f"{args.frames} contains no frames")
    width = args.image_width if args.image_width is not None else _auto_width(frames)
    samples = _consecutive_samples(frames, width)
    if args.mtmc:
        samples += build_mtmc_pairs(frames, width)
    batches = []
    for sample in samples:
        batch = labeled_batch_from_sample(sample, score_threshold=loss_cfg.score_threshold)
        if batch is not None:
            batches.append(batch)
    if not batches:
        raise ValueError("no usable training batches (need frames with labeled detections)")
    identities = set()
    for batch in batches:
        identities.update(int(i) for i in batch.identities)
    if len(identities) < 2:
        raise ValueError(
            f"training needs at least two distinct identities, found {sorted(identities)}"
        )

    params, trace = train(batches, loss_cfg, train_cfg)
    save_params(out / "params.json", params, seed=train_cfg.seed, loss_config=loss_cfg)
    with (out / "loss_trace.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, loss in enumerate(trace):
            writer.writerow([epoch, repr(float(loss))])
    _write_manifest(
        out,
        "train",
        train_cfg.seed,
        inputs={"frames": args.frames},
        outputs={"params": "params.json", "loss_trace": "loss_trace.csv"},
        config={
            "loss": dataclasses.asdict(loss_cfg),
            "train": dataclasses.asdict(train_cfg),
            "image_width": width,
            "mtmc": bool(args.mtmc),
            "batch_count": len(batches),
        },
    )
    return 0


def _labeled_embeddings(
    frames: Sequence[FrameRecord], params, score_threshold: float, iou_min: float
):
    """Per frame: (embeddings, identities) of confidence-kept labeled detections."""
    out = []
    for frame in frames:
        kept = [d for d in frame.detections if d.confidence >= score_threshold]
        if all(d.gt_identity is not None for d in kept):
            labeled = [(d.feature, d.gt_identity) for d in kept]
        else:
            result = assign_predictions(
                [(d.box, d.confidence) for d in kept],
                [(box, ident, 0) for box, ident in frame.gt_boxes],
                score_threshold=score_threshold,
                iou_min=iou_min,
            )
            labeled = [
                (d.feature, assigned[0])
                for d, assigned in zip(kept, result.assignments)
                if assigned is not None
            ]
        if labeled:
            emb = embed_batch(params, np.stack([f for f, _ in labeled]))
        else:
            emb = np.zeros((0, params.embed_dim))
        out.append((emb, [ident for _, ident in labeled]))
    return out


def cmd_calibrate(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    params, _, _ = load_params(args.params)
    frames = load_frames(args.frames)

    by_camera: dict[int, list[FrameRecord]] = {}
    for frame in frames:
        by_camera.setdefault(frame.camera_id, []).append(frame)
    pairs: list[LabeledDistance] = []
    for camera in sorted(by_camera):
        per_frame = _labeled_embeddings(
            by_camera[camera], params, args.score_threshold, args.iou_min
        )
        for (emb_a, ids_a), (emb_b, ids_b) in zip(per_frame, per_frame[1:]):
            d = distance_matrix(emb_a, emb_b)
            for i, ident_a in enumerate(ids_a):
                for j, ident_b in enumerate(ids_b):
                    pairs.append(
                        LabeledDistance(distance=float(d[i, j]), is_same=ident_a == ident_b)
                    )

    sweep = sweep_threshold(pairs)
    write_sweep_csv(out / "sweep.csv", sweep)
    write_histogram_csv(out / "histogram.csv", distance_histogram(pairs, args.bins))
    same = sum(1 for p in pairs if p.is_same)
    (out / "threshold.json").write_text(
        json.dumps(
            {
                "threshold": sweep.threshold,
                "objective": sweep.objective,
                "pair_count": len(pairs),
                "same_count": same,
                "diff_count": len(pairs) - same,
            }
        )
        + "\n",
        encoding="utf-8",
    )
    _write_manifest(
        out,
        "calibrate",
        None,
        inputs={"frames": args.frames, "params": args.params},
        outputs={
            "threshold": "threshold.json",
            "sweep": "sweep.csv",
            "histogram": "histogram.csv",
        },
        config={
            "score_threshold": args.score_threshold,
            "iou_min": args.iou_min,
            "bins": args.bins,
        },
    )
    return 0


def cmd_track(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    params, _, _ = load_params(args.params)
    frames = load_frames(args.frames)
    assignments = track_sequence(
        frames, params, threshold=args.threshold, score_threshold=args.score_threshold
    )
    records = []
    for frame, frame_assignments in zip(frames, assignments):
        for det_index, track_id in frame_assignments:
            det = frame.detections[det_index]
            records.append(
                TrackRecord(
                    frame_index=frame.frame_index,
                    track_id=track_id,
                    box=det.box,
                    confidence=det.confidence,
                )
            )
    save_track_records(out / "tracks.jsonl", records)
    _write_manifest(
        out,
        "track",
        None,
        inputs={"frames": args.frames, "params": args.params},
        outputs={"tracks": "tracks.jsonl"},
        config={"threshold": args.threshold, "score_threshold": args.score_threshold},
    )
    return 0


def _counts_from_fixture(path: str) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict) or not ({"mot", "pair"} & set(doc)):
        raise ValueError(f"counts fixture {path} must hold a 'mot' and/or 'pair' object")
    report: dict = {}
    if "mot" in doc:
        counts = MotCounts(**doc["mot"])
        report["mot_counts"] = dataclasses.asdict(counts)
        report["mota"] = mota(counts)
    if "pair" in doc:
        counts = PairCounts(**doc["pair"])
        report["pair_counts"] = dataclasses.asdict(counts)
        report["pair_accuracy"] = pair_accuracy(counts)
    return report


def cmd_eval(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    if args.counts is not None:
        report = _counts_from_fixture(args.counts)
        inputs = {"counts": args.counts}
        config: dict = {}
    else:
        if args.tracks is None or args.frames is None:
            raise ValueError("eval needs either --counts or both --tracks and --frames")
        frames = load_frames(args.frames)
        cameras = {f.camera_id for f in frames}
        if len(cameras) > 1:
            raise ValueError(f"eval expects a single camera, got {sorted(cameras)}")
        records = load_track_records(args.tracks)
        known = {f.frame_index for f in frames}
        stray = sorted({r.frame_index for r in records} - known)
        if stray:
            raise ValueError(f"track records reference unknown frames {stray[:5]}")
        by_frame: dict[int, list[TrackRecord]] = {}
        for r in records:
            by_frame.setdefault(r.frame_index, []).append(r)

        gt_frames = [[(box, ident) for box, ident in f.gt_boxes] for f in frames]
        mot_pred = [
            [(r.box, r.track_id) for r in by_frame.get(f.frame_index, [])] for f in frames
        ]
        pair_pred = [
            [(r.box, r.confidence, r.track_id) for r in by_frame.get(f.frame_index, [])]
            for f in frames
        ]
        mc = mot_counts(mot_pred, gt_frames, iou_min=args.iou_min)
        pc = pair_counts(
            pair_pred, gt_frames, score_threshold=args.score_threshold, iou_min=args.iou_min
        )
        ap_preds = [(r.frame_index, r.box, r.confidence) for r in records]
        ap_gts = [(f.frame_index, box) for f in frames for box, _ in f.gt_boxes]
        report = {
            "mota": mota(mc) if mc.gt_total > 0 else None,
            "mot_counts": dataclasses.asdict(mc),
            "pair_accuracy": (
                pair_accuracy(pc) if pc.tp + pc.tn + pc.fp + pc.fn > 0 else None
            ),
            "pair_counts": dataclasses.asdict(pc),
            "mean_ap": mean_ap(ap_preds, ap_gts) if ap_gts else None,
        }
        inputs = {"tracks": args.tracks, "frames": args.frames}
        config = {"iou_min": args.iou_min, "score_threshold": args.score_threshold}
    report["config"] = config
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    _write_manifest(out, "eval", None, inputs=inputs, outputs={"report": "report.json"}, config=config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embedtrack",
        description="Train, calibrate, run, and evaluate an embedding-based tracker.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic labeled sequence")
    p.add_argument("--config", help="JSON file with config values")
    p.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p, SimConfig)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the embedding head on labeled frames")
    p.add_argument("--frames", required=True, help="training frames (JSONL)")
    p.add_argument("--config", help="JSON file with config values")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--image-width",
        type=float,
        default=None,
        help="slot offset for concatenation (default: max box x2 in the data)",
    )
    p.add_argument(
        "--mtmc",
        action="store_true",
        help="also build cross-camera samples for identities seen by several cameras",
    )
    _add_config_flags(p, LossConfig)
    _add_config_flags(p, TrainConfig)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="sweep the association distance threshold")
    p.add_argument("--frames", required=True, help="labeled dev frames (JSONL)")
    p.add_argument("--params", required=True, help="trained head parameters (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--score-threshold", type=float, default=0.5)
    p.add_argument("--iou-min", type=float, default=0.5)
    p.add_argument("--bins", type=int, default=50, help="histogram bin count")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("track", help="run the tracker over one camera's frames")
    p.add_argument("--frames", required=True, help="input frames (JSONL)")
    p.add_argument("--params", required=True, help="trained head parameters (JSON)")
    p.add_argument("--threshold", type=float, required=True, help="association gate")
    p.add_argument("--score-threshold", type=float, default=0.5)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score a track output against ground truth")
    p.add_argument("--tracks", help="tracker output (JSONL)")
    p.add_argument("--frames", help="ground-truth frames (JSONL)")
    p.add_argument("--counts", help="JSON fixture with precomputed mot/pair counts")
    p.add_argument("--score-threshold", type=float, default=0.5)
    p.add_argument("--iou-min", type=float, default=0.5)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
