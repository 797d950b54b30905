"""On-disk layout for measurement records and reconstruction outputs.

A record directory holds::

    manifest.txt          key=value: detector model, seed, frame bookkeeping
    plan.txt              key=value plan descriptor (regenerates F exactly)
    y.csv                 index,value
    mean_frame.pgm        16-bit mean frame, scaled by manifest's mean_frame_scale
    ground_truth.pgm      16-bit unit-max position intensity (optional)
    frames/frame_%06d.pgm retained frames, 16-bit
"""

from __future__ import annotations

import csv
import io
import os
from pathlib import Path

import numpy as np

from simulmeas import __version__
from simulmeas.field import Domain, Field2D
from simulmeas.forward import CcdFrame, CcdModel, MeasurementRecord
from simulmeas.kvfile import parse_bool, read_kv, write_kv
from simulmeas.pgm import quantize_unit, read_pgm, write_pgm
from simulmeas.sensing import SensingPlan

RECORD_KIND = "measurement-record"


def format_float(value: float) -> str:
    return repr(float(value))


def write_vector_csv(path: str | os.PathLike, values, header=("index", "value")) -> None:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for i, v in enumerate(values):
        writer.writerow([i, format_float(v)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def read_vector_csv(path: str | os.PathLike) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    for expected, row in enumerate(body):
        if int(row[0]) != expected:
            raise ValueError(f"{path}: index column out of order at row {expected}")
    return np.array([float(row[1]) for row in body])


def write_table_csv(path: str | os.PathLike, header, rows) -> None:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, float) else v for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def save_record(record: MeasurementRecord, directory: str | os.PathLike, extra: dict | None = None) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    ccd = record.ccd
    mean = record.frame_sum / record.frame_count
    peak = float(mean.max())
    mean_scale = 65535.0 / peak if peak > 0 else 1.0

    manifest = {
        "kind": RECORD_KIND,
        "version": __version__,
        "seed": record.seed,
        "side": record.plan.side,
        "m": record.plan.m,
        "ccd_enabled": ccd.enabled,
        "bit_depth": ccd.bit_depth,
        "dark_mean": float(ccd.dark_mean),
        "dark_std": float(ccd.dark_std),
        "gain": float(ccd.gain),
        "frame_count": record.frame_count,
        "keep_every": record.keep_every,
        "frames_retained": len(record.frames),
        "mean_frame_scale": mean_scale,
        "has_ground_truth": record.ground_truth is not None,
    }
    if record.ground_truth is not None:
        manifest["ground_truth_peak"] = float(np.max(np.abs(record.ground_truth.values) ** 2))
    manifest.update(extra or {})
    write_kv(out / "manifest.txt", manifest)
    write_kv(out / "plan.txt", record.plan.descriptor())
    write_vector_csv(out / "y.csv", record.y)
    write_pgm(out / "mean_frame.pgm", np.rint(np.clip(mean, 0, None) * mean_scale).astype(np.int64), 65535)

    if record.ground_truth is not None:
        gt = np.abs(record.ground_truth.values) ** 2
        write_pgm(out / "ground_truth.pgm", quantize_unit(gt), 65535)

    if record.frames:
        frames_dir = out / "frames"
        frames_dir.mkdir(exist_ok=True)
        for frame in record.frames:
            if frame.ideal:
                counts, maxval = np.rint(np.clip(frame.counts, 0, 65535)).astype(np.int64), 65535
            else:
                counts, maxval = frame.counts, max(ccd.max_count, 256)
            write_pgm(frames_dir / f"frame_{frame.filter_index:06d}.pgm", counts, maxval)
    return out


def load_record(directory: str | os.PathLike, load_frames: bool = False) -> MeasurementRecord:
    src = Path(directory)
    manifest = read_kv(src / "manifest.txt")
    if manifest.get("kind") != RECORD_KIND:
        raise ValueError(f"{src} is not a measurement record")
    plan = SensingPlan.from_descriptor(read_kv(src / "plan.txt"))
    ccd = CcdModel(
        bit_depth=int(manifest["bit_depth"]),
        dark_mean=float(manifest["dark_mean"]),
        dark_std=float(manifest["dark_std"]),
        gain=float(manifest["gain"]),
        enabled=parse_bool(manifest["ccd_enabled"]),
    )
    count = int(manifest["frame_count"])
    pixels, _ = read_pgm(src / "mean_frame.pgm")
    frame_sum = pixels / float(manifest["mean_frame_scale"]) * count

    ground_truth = None
    if parse_bool(manifest.get("has_ground_truth", "false")):
        gt, maxval = read_pgm(src / "ground_truth.pgm")
        peak = float(manifest["ground_truth_peak"])
        ground_truth = Field2D(np.sqrt(gt / maxval * peak).astype(np.complex128), Domain.POSITION)

    frames = []
    if load_frames and (src / "frames").is_dir():
        ideal = not ccd.enabled
        for path in sorted((src / "frames").glob("frame_*.pgm")):
            counts, _ = read_pgm(path)
            frames.append(CcdFrame(counts.astype(float) if ideal else counts, int(path.stem[6:]), ideal))

    return MeasurementRecord(
        plan=plan,
        ccd=ccd,
        seed=int(manifest["seed"]),
        y=read_vector_csv(src / "y.csv"),
        frame_sum=frame_sum,
        frame_count=count,
        frames=frames,
        keep_every=int(manifest["keep_every"]),
        ground_truth=ground_truth,
    )
