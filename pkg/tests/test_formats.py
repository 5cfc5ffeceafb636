"""PGM frames, raw sequences, and the CSV interchange files."""

import numpy as np
import pytest

from fovea import formats
from fovea.data import PointAnnotation
from fovea.errors import FormatError
from fovea.metrics import report_from_counts
from fovea.pipeline import FrameDetection


# ---------------------------------------------------------------------- PGM

def test_pgm_roundtrip_8bit(tmp_path):
    img = np.linspace(0, 1, 12, dtype=np.float32).reshape(3, 4)
    p = tmp_path / "a.pgm"
    formats.write_pgm(p, img, maxval=255)
    back = formats.read_pgm(p)
    assert back.shape == (3, 4)
    assert back.dtype == np.float32
    np.testing.assert_allclose(back, img, atol=0.5 / 255)


def test_pgm_roundtrip_16bit(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.random((5, 7), dtype=np.float32)
    p = tmp_path / "b.pgm"
    formats.write_pgm(p, img, maxval=65535)
    np.testing.assert_allclose(formats.read_pgm(p), img, atol=0.5 / 65535)


def test_pgm_reads_comments_and_normalizes(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# a comment\n2 2\n255\n" + bytes([0, 128, 255, 64]))
    img = formats.read_pgm(p)
    assert img[0, 0] == 0.0
    assert img[0, 1] == pytest.approx(128 / 255)
    assert img[1, 0] == 1.0


def test_pgm_rejects_bad_magic(tmp_path):
    p = tmp_path / "d.pgm"
    p.write_bytes(b"P2\n2 2\n255\n0 1 2 3")
    with pytest.raises(FormatError):
        formats.read_pgm(p)


def test_pgm_rejects_short_raster(tmp_path):
    p = tmp_path / "e.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 1]))
    with pytest.raises(FormatError, match="raster"):
        formats.read_pgm(p)


def test_pgm_16bit_is_big_endian(tmp_path):
    p = tmp_path / "f.pgm"
    formats.write_pgm(p, np.array([[1.0]], dtype=np.float32), maxval=65535)
    raster = p.read_bytes().split(b"65535\n", 1)[1]
    assert raster == b"\xff\xff"
    formats.write_pgm(p, np.array([[128 / 65535]], dtype=np.float32), maxval=65535)
    raster = p.read_bytes().split(b"65535\n", 1)[1]
    assert raster == b"\x00\x80"


# ------------------------------------------------------------ raw sequences

def test_raw_sequence_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    frames = rng.random((4, 6, 5), dtype=np.float32)
    p = tmp_path / "seq.raw"
    formats.write_raw_sequence(p, frames)
    assert p.stat().st_size == 16 + frames.size * 4
    np.testing.assert_array_equal(formats.read_raw_sequence(p), frames)


def test_raw_sequence_rejects_truncation(tmp_path):
    frames = np.zeros((2, 3, 3), dtype=np.float32)
    p = tmp_path / "seq.raw"
    formats.write_raw_sequence(p, frames)
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(FormatError):
        formats.read_raw_sequence(p)


def test_raw_sequence_rejects_bad_magic(tmp_path):
    p = tmp_path / "seq.raw"
    p.write_bytes(b"XXXX" + b"\x00" * 12)
    with pytest.raises(FormatError):
        formats.read_raw_sequence(p)


# -------------------------------------------------------------- annotations

def test_annotations_roundtrip(tmp_path):
    anns = [PointAnnotation(0, 3, 1.5, 2.25),
            PointAnnotation(1, 3, 100.0, 0.0078125)]
    p = tmp_path / "ann.csv"
    formats.write_annotations_csv(p, anns)
    assert formats.read_annotations_csv(p) == anns
    assert p.read_text().splitlines()[0] == "frame_id,track_id,x,y"


def test_annotations_malformed_row_reports_line(tmp_path):
    p = tmp_path / "ann.csv"
    p.write_text("frame_id,track_id,x,y\n0,1,2.0,3.0\n0,oops,2.0\n")
    with pytest.raises(FormatError, match="line 3"):
        formats.read_annotations_csv(p)


def test_annotations_bad_header(tmp_path):
    p = tmp_path / "ann.csv"
    p.write_text("frame,track,x,y\n")
    with pytest.raises(FormatError, match="header"):
        formats.read_annotations_csv(p)


def test_annotations_empty_file_ok(tmp_path):
    p = tmp_path / "ann.csv"
    formats.write_annotations_csv(p, [])
    assert formats.read_annotations_csv(p) == []


# --------------------------------------------------------------- detections

def test_detections_roundtrip(tmp_path):
    dets = [FrameDetection(5, 0, 64, 12.5, 70.25, 8, 0.09375),
            FrameDetection(6, 64, 0, 100.0, 3.0, 4, 0.125)]
    p = tmp_path / "det.csv"
    formats.write_detections_csv(p, dets)
    assert formats.read_detections_csv(p) == dets
    header = p.read_text().splitlines()[0]
    assert header == "frame_id,tile_x0,tile_y0,x,y,area,score"


def test_detections_malformed_reports_line(tmp_path):
    p = tmp_path / "det.csv"
    p.write_text("frame_id,tile_x0,tile_y0,x,y,area,score\n1,2\n")
    with pytest.raises(FormatError, match="line 2"):
        formats.read_detections_csv(p)


# ------------------------------------------------------------------ reports

def test_report_csv_four_decimals(tmp_path):
    rep = report_from_counts(2, 1, 1)
    p = tmp_path / "rep.csv"
    formats.write_report_csv(p, [("aggregate", rep)])
    lines = p.read_text().splitlines()
    assert lines[0] == "scope,tp,fp,fn,precision,recall,f1"
    assert lines[1] == "aggregate,2,1,1,0.6667,0.6667,0.6667"


def test_report_table_two_decimals():
    rep = report_from_counts(2, 1, 1)
    table = formats.format_report_table([("aggregate", rep)])
    assert "0.67" in table
    assert "0.6667" not in table
    assert "aggregate" in table


# ----------------------------------------------------------------- manifest

def test_manifest_roundtrip(tmp_path):
    p = tmp_path / "manifest.txt"
    formats.write_manifest(p, {"profile": "satellite", "seed": "3"})
    text = p.read_text()
    assert "profile=satellite" in text
    assert "seed=3" in text
