"""On-disk interchange: PGM frames, raw float sequences, CSV tables.

Every writer goes through a temp file in the destination directory and
an atomic rename, so readers never observe partial output. CSV floats
are written with repr so values round-trip exactly; the report CSV is
the one place values are rounded (4 decimals, printed tables use 2).
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .data import PointAnnotation
from .errors import FormatError
from .pipeline import FrameDetection

RAW_MAGIC = b"FSQ1"

ANNOTATION_HEADER = "frame_id,track_id,x,y"
DETECTION_HEADER = "frame_id,tile_x0,tile_y0,x,y,area,score"
REPORT_HEADER = "scope,tp,fp,fn,precision,recall,f1"


def _atomic_write(path, blob: bytes):
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text(path, text: str):
    """Atomic whole-file text write."""
    _atomic_write(path, text.encode())


# ------------------------------------------------------------------- frames

def write_pgm(path, image: np.ndarray, maxval: int = 65535):
    """Binary PGM from a [0, 1] float image; 16-bit rasters are MSB-first."""
    if maxval not in (255, 65535):
        raise FormatError(f"maxval must be 255 or 65535, got {maxval}")
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise FormatError(f"image must be 2-D, got shape {img.shape}")
    levels = np.round(np.clip(img, 0.0, 1.0) * maxval)
    raster = levels.astype(np.uint8 if maxval == 255 else ">u2").tobytes()
    h, w = img.shape
    _atomic_write(path, f"P5\n{w} {h}\n{maxval}\n".encode() + raster)


def read_pgm(path) -> np.ndarray:
    """Load a binary PGM, normalized to [0, 1] float32."""
    buf = open(path, "rb").read()
    tokens, i = [], 0
    while len(tokens) < 4:
        while i < len(buf) and buf[i] in b" \t\r\n":
            i += 1
        if i >= len(buf):
            raise FormatError(f"{path}: truncated header")
        if buf[i] == ord("#"):
            while i < len(buf) and buf[i] not in b"\r\n":
                i += 1
            continue
        j = i
        while j < len(buf) and buf[j] not in b" \t\r\n":
            j += 1
        tokens.append(buf[i:j])
        i = j
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{path}: non-numeric header fields {tokens[1:]}") from None
    if not 0 < maxval < 65536:
        raise FormatError(f"{path}: maxval {maxval} out of range")
    raster = buf[i + 1:]
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    expect = h * w * dtype.itemsize if maxval >= 256 else h * w
    if len(raster) < expect:
        raise FormatError(f"{path}: raster has {len(raster)} bytes, expected {expect}")
    img = np.frombuffer(raster[:expect], dtype=dtype).reshape(h, w)
    return (img.astype(np.float32) / np.float32(maxval)).astype(np.float32)


def write_raw_sequence(path, frames: np.ndarray):
    """Planar little-endian float32 frames behind a 16-byte dims header."""
    frames = np.asarray(frames, dtype=np.float32)
    if frames.ndim != 3:
        raise FormatError(f"frames must be (T, H, W), got shape {frames.shape}")
    header = RAW_MAGIC + struct.pack("<3I", *frames.shape)
    _atomic_write(path, header + frames.astype("<f4").tobytes())


def read_raw_sequence(path) -> np.ndarray:
    buf = open(path, "rb").read()
    if len(buf) < 16 or buf[:4] != RAW_MAGIC:
        raise FormatError(f"{path}: not a raw frame sequence")
    t, h, w = struct.unpack("<3I", buf[4:16])
    expect = 16 + t * h * w * 4
    if len(buf) != expect:
        raise FormatError(f"{path}: {len(buf)} bytes, expected {expect} for {t}x{h}x{w}")
    return np.frombuffer(buf[16:], dtype="<f4").reshape(t, h, w).astype(np.float32)


# ---------------------------------------------------------------------- CSV

def _write_csv(path, header: str, rows):
    lines = [header]
    lines.extend(",".join(str(v) for v in row) for row in rows)
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def _read_csv(path, header: str, parsers):
    lines = open(path, "r", encoding="utf-8").read().splitlines()
    if not lines or lines[0] != header:
        raise FormatError(f"{path}: expected header {header!r}")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != len(parsers):
            raise FormatError(
                f"{path}: line {lineno}: {len(fields)} fields, expected {len(parsers)}")
        try:
            out.append(tuple(p(f) for p, f in zip(parsers, fields)))
        except ValueError as e:
            raise FormatError(f"{path}: line {lineno}: {e}") from None
    return out


def write_annotations_csv(path, annotations):
    _write_csv(path, ANNOTATION_HEADER,
               ((a.frame_id, a.track_id, repr(float(a.x)), repr(float(a.y)))
                for a in annotations))


def read_annotations_csv(path) -> list[PointAnnotation]:
    rows = _read_csv(path, ANNOTATION_HEADER, (int, int, float, float))
    return [PointAnnotation(*r) for r in rows]


def write_detections_csv(path, detections):
    _write_csv(path, DETECTION_HEADER,
               ((d.frame_id, d.tile_x0, d.tile_y0, repr(float(d.x)),
                 repr(float(d.y)), d.area, repr(float(d.score)))
                for d in detections))


def read_detections_csv(path) -> list[FrameDetection]:
    rows = _read_csv(path, DETECTION_HEADER,
                     (int, int, int, float, float, int, float))
    return [FrameDetection(*r) for r in rows]


def _report_cells(report):
    return (report.tp, report.fp, report.fn,
            f"{report.precision:.4f}", f"{report.recall:.4f}", f"{report.f1:.4f}")


def write_report_csv(path, scoped_reports):
    _write_csv(path, REPORT_HEADER,
               ((scope, *_report_cells(r)) for scope, r in scoped_reports))


def format_report_table(scoped_reports) -> str:
    """Human-readable fixed-width table, scores at 2 decimals."""
    rows = [("scope", "tp", "fp", "fn", "prec", "rec", "f1")]
    for scope, r in scoped_reports:
        rows.append((scope, str(r.tp), str(r.fp), str(r.fn),
                     f"{r.precision:.2f}", f"{r.recall:.2f}", f"{r.f1:.2f}"))
    widths = [max(len(row[i]) for row in rows) for i in range(7)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
             for row in rows]
    return "\n".join(lines) + "\n"


def write_manifest(path, mapping: dict):
    """Flat key=value lines; the same shape the run config uses."""
    lines = [f"{k}={mapping[k]}" for k in mapping]
    _atomic_write(path, ("\n".join(lines) + "\n").encode())
