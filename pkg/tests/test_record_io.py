import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecgc.record_io import (CLASSES, LabelFile, Record, RecordFormatError, header_path,
                            list_records, parse_labels_text, read_labels, read_record,
                            write_labels, write_record)

samples = st.lists(st.integers(-32768, 32767), min_size=1, max_size=300)


@settings(max_examples=60, deadline=None)
@given(samples, st.sampled_from(["i16le", "text"]), st.sampled_from(CLASSES + (None,)))
def test_round_trip(tmp_path_factory, xs, enc, label):
    d = tmp_path_factory.mktemp("rt")
    r = Record("R1", 300, 1000.0, np.array(xs), label)
    write_record(r, d / "R1", enc)
    assert read_record(d / "R1") == r
    assert read_record(header_path(d / "R1")) == r


def test_header_is_json_with_declared_count(tmp_path):
    r = Record("A7", 250, 200.0, np.arange(10))
    hdr = write_record(r, tmp_path / "A7")
    meta = json.loads(hdr.read_text())
    assert meta["sample_count"] == 10 and meta["fs"] == 250 and meta["encoding"] == "i16le"
    assert (tmp_path / "A7.dat").stat().st_size == 20


def test_truncated_payload_rejected(tmp_path):
    write_record(Record("X", 300, 1.0, np.arange(8)), tmp_path / "X")
    p = tmp_path / "X.dat"
    p.write_bytes(p.read_bytes()[:-2])
    with pytest.raises(RecordFormatError, match="declares"):
        read_record(tmp_path / "X")


def test_corrupt_header_and_unknown_encoding(tmp_path):
    (tmp_path / "B.hdr.json").write_text("{not json")
    with pytest.raises(RecordFormatError):
        read_record(tmp_path / "B")
    (tmp_path / "C.hdr.json").write_text(json.dumps(
        {"id": "C", "fs": 300, "gain": 1, "sample_count": 1, "encoding": "f32"}))
    with pytest.raises(RecordFormatError, match="encoding"):
        read_record(tmp_path / "C")


def test_missing_file_raises_filenotfound(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_record(tmp_path / "nope")


def test_record_validation():
    with pytest.raises(RecordFormatError):
        Record("x", 0, 1.0, np.arange(3))
    with pytest.raises(RecordFormatError):
        Record("x", 300, 1.0, np.array([]))
    with pytest.raises(RecordFormatError):
        Record("x", 300, 1.0, np.array([40000]))
    with pytest.raises(RecordFormatError):
        Record("x", 300, 1.0, np.arange(3), "Z")


def test_negation_is_total():
    r = Record("x", 300, 1.0, np.array([-32768, -1, 0, 5, 32767], dtype=np.int16))
    assert r.negated().samples.tolist() == [32767, 1, 0, -5, -32767]


def test_labels_tilde_token(tmp_path):
    lf = parse_labels_text("A1,N\nA2,~\nA3,NOISE\n")
    assert lf.as_dict() == {"A1": "N", "A2": "NOISE", "A3": "NOISE"}
    write_labels([("b", "NOISE"), ("a", "A")], tmp_path / "l.csv")
    assert (tmp_path / "l.csv").read_bytes() == b"a,A\nb,~\n"
    assert read_labels(tmp_path / "l.csv").as_dict() == {"a": "A", "b": "NOISE"}


def test_labels_errors():
    with pytest.raises(RecordFormatError):
        parse_labels_text("a,N\na,A\n")
    with pytest.raises(RecordFormatError):
        parse_labels_text("a,Q\n")
    with pytest.raises(RecordFormatError):
        parse_labels_text("a\n")
    with pytest.raises(RecordFormatError):
        LabelFile([("a", "bad")])


def test_list_records_sorted(tmp_path):
    for rid in ("Z2", "A1", "M5"):
        write_record(Record(rid, 300, 1.0, np.arange(3)), tmp_path / rid)
    assert [p.name for p in list_records(tmp_path)] == ["A1.hdr.json", "M5.hdr.json", "Z2.hdr.json"]
