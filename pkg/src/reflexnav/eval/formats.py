"""On-disk formats: trial results, batch summaries, step logs and sensor replays.

Point-cloud replay files start with the 8-byte magic ``APRE\\0PC1`` followed by
little-endian records ``<f8 timestamp><u4 count><count*3 f4 xyz>``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
from pathlib import Path

import numpy as np

from ..core import PointCloud
from ..sensors import Detection2D
from .harness import BatchReport, TrialResult
from .metrics import StepLog

CLOUD_MAGIC = b"APRE\0PC1"
_HEADER = struct.Struct("<dI")
DETECTION_COLUMNS = ("t", "class", "u_min", "v_min", "u_max", "v_max", "conf")
STEP_COLUMNS = ("t", "px", "py", "pz", "vx", "vy", "yaw", "beta", "T_fused", "target_id", "d_clear")
SUMMARY_COLUMNS = ("variant", "n_total", "n_success", "asr", "asr_lo", "asr_hi", "d_min_mean", "d_min_std",
                   "tnl_mean", "tnl_std", "energy_mean", "energy_std", "asr_front", "asr_left", "asr_right",
                   "asr_rear", "config_digest")


class FormatError(ValueError):
    """Raised when a replay file is truncated or has the wrong header."""


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(round(x, 9)) if math.isfinite(x) else ""
    return str(x)


# -- results -------------------------------------------------------------------------

def results_to_jsonl(results: list[TrialResult]) -> str:
    return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in results)


def write_results_jsonl(path: str | Path, results: list[TrialResult]) -> None:
    Path(path).write_text(results_to_jsonl(results))


def read_results_jsonl(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def summary_csv(reports: dict[str, BatchReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for name, rep in reports.items():
        q = rep.quadrants
        w.writerow([_fmt(v) for v in (
            name, rep.n_total, rep.n_success, rep.asr, rep.asr_ci[0], rep.asr_ci[1],
            rep.d_min["mean"], rep.d_min["std"], rep.tnl["mean"], rep.tnl["std"],
            rep.energy["mean"], rep.energy["std"], q["front"]["asr"], q["left"]["asr"], q["right"]["asr"],
            q["rear"]["asr"], rep.digest)])
    return buf.getvalue()


def write_summary_csv(path: str | Path, reports: dict[str, BatchReport]) -> None:
    Path(path).write_text(summary_csv(reports))


# -- step logs -----------------------------------------------------------------------

def step_log_csv(log: StepLog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STEP_COLUMNS)
    cols = [getattr(log, name) for name in StepLog.CSV_COLUMNS]
    for row in zip(*cols):
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_step_log(path: str | Path, log: StepLog) -> None:
    Path(path).write_text(step_log_csv(log))


# -- point-cloud replay --------------------------------------------------------------

def encode_clouds(clouds: list[PointCloud]) -> bytes:
    parts = [CLOUD_MAGIC]
    for c in clouds:
        pts = np.ascontiguousarray(np.asarray(c.points, dtype="<f4").reshape(-1, 3))
        parts.append(_HEADER.pack(float(c.timestamp), len(pts)))
        parts.append(pts.tobytes())
    return b"".join(parts)


def decode_clouds(data: bytes) -> list[PointCloud]:
    if data[:len(CLOUD_MAGIC)] != CLOUD_MAGIC:
        raise FormatError("not a point-cloud replay file (bad magic)")
    out = []
    pos = len(CLOUD_MAGIC)
    while pos < len(data):
        if pos + _HEADER.size > len(data):
            raise FormatError(f"truncated record header at byte {pos}")
        t, count = _HEADER.unpack_from(data, pos)
        pos += _HEADER.size
        nbytes = 12 * count
        if pos + nbytes > len(data):
            raise FormatError(f"truncated point block at byte {pos}")
        pts = np.frombuffer(data, dtype="<f4", count=3 * count, offset=pos).reshape(count, 3)
        out.append(PointCloud(t, pts.astype(float)))
        pos += nbytes
    return out


def write_clouds(path: str | Path, clouds: list[PointCloud]) -> None:
    Path(path).write_bytes(encode_clouds(clouds))


def read_clouds(path: str | Path) -> list[PointCloud]:
    return decode_clouds(Path(path).read_bytes())


# -- detection replay ----------------------------------------------------------------

def detections_csv(frames: list[list[Detection2D]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DETECTION_COLUMNS)
    for dets in frames:
        for d in dets:
            w.writerow([repr(float(d.time)), d.label, *(repr(float(x)) for x in d.bbox), repr(float(d.confidence))])
    return buf.getvalue()


def write_detections(path: str | Path, frames: list[list[Detection2D]]) -> None:
    Path(path).write_text(detections_csv(frames))


def parse_detections(text: str) -> list[Detection2D]:
    rows = csv.DictReader(io.StringIO(text))
    if rows.fieldnames is None or tuple(rows.fieldnames) != DETECTION_COLUMNS:
        raise FormatError(f"detection CSV header must be {','.join(DETECTION_COLUMNS)}")
    return [Detection2D(r["class"], (float(r["u_min"]), float(r["v_min"]), float(r["u_max"]), float(r["v_max"])),
                        float(r["conf"]), float(r["t"])) for r in rows]


def read_detections(path: str | Path) -> list[Detection2D]:
    return parse_detections(Path(path).read_text())


def detections_by_step(dets: list[Detection2D], dt: float, n_steps: int) -> list[list[Detection2D]]:
    """Group detections into per-step frames by nearest step index; empty steps get empty lists."""
    frames: list[list[Detection2D]] = [[] for _ in range(n_steps)]
    for d in dets:
        k = int(round(d.time / dt))
        if 0 <= k < n_steps:
            frames[k].append(d)
    return frames
