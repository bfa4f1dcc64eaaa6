"""On-disk ECG records and label files.

A record is a UTF-8 JSON header ``<id>.hdr.json`` plus a sibling payload that
holds exactly ``sample_count`` signed 16-bit samples, either little-endian
binary (``<id>.dat``, encoding ``"i16le"``) or one integer per line
(``<id>.txt``, encoding ``"text"``). Label files are headerless two-column
CSV (``id,class``) with LF line endings.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

CLASSES = ("N", "A", "O", "NOISE")
# "~" is the noise token used by the original challenge answer files.
_TOKEN_TO_CLASS = {"N": "N", "A": "A", "O": "O", "NOISE": "NOISE", "~": "NOISE"}
_CLASS_TO_TOKEN = {"N": "N", "A": "A", "O": "O", "NOISE": "~"}

HEADER_SUFFIX = ".hdr.json"
ENCODINGS = {"i16le": ".dat", "text": ".txt"}
DEFAULT_FS = 300


class RecordFormatError(ValueError):
    """Raised for malformed headers, payloads or label files."""


@dataclass(frozen=True, eq=False)
class Record:
    """Single-lead ECG record held as raw ADC samples."""

    id: str
    fs: int
    gain: float
    samples: np.ndarray
    label: Optional[str] = None

    def __post_init__(self):
        if int(self.fs) != self.fs or self.fs <= 0:
            raise RecordFormatError(f"{self.id}: fs must be a positive integer, got {self.fs}")
        if not (self.gain > 0 and np.isfinite(self.gain)):
            raise RecordFormatError(f"{self.id}: gain must be positive, got {self.gain}")
        samples = np.asarray(self.samples)
        if samples.ndim != 1 or samples.size == 0:
            raise RecordFormatError(f"{self.id}: samples must be a non-empty 1-D sequence")
        if samples.dtype != np.int16:
            if np.any(samples != np.round(samples)) or samples.min() < -32768 or samples.max() > 32767:
                raise RecordFormatError(f"{self.id}: samples do not fit in int16")
            samples = samples.astype(np.int16)
        else:
            samples = samples.copy()
        samples.setflags(write=False)
        object.__setattr__(self, "fs", int(self.fs))
        object.__setattr__(self, "gain", float(self.gain))
        object.__setattr__(self, "samples", samples)
        if self.label is not None and self.label not in CLASSES:
            raise RecordFormatError(f"{self.id}: unknown class {self.label!r}")

    @property
    def duration_ms(self) -> float:
        return 1000.0 * len(self.samples) / self.fs

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.fs

    def mv(self) -> np.ndarray:
        """Samples in millivolts as float64."""
        return self.samples.astype(np.float64) / self.gain

    def with_samples(self, samples) -> "Record":
        return Record(self.id, self.fs, self.gain, samples, self.label)

    def negated(self) -> "Record":
        # -(-32768) does not fit; clip keeps the negation total
        neg = -np.clip(self.samples.astype(np.int32), -32767, 32767)
        return self.with_samples(neg.astype(np.int16))

    def __eq__(self, other):
        if not isinstance(other, Record):
            return NotImplemented
        return (self.id == other.id and self.fs == other.fs and self.gain == other.gain
                and self.label == other.label and np.array_equal(self.samples, other.samples))


@dataclass
class LabelFile:
    entries: list = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for rid, cls in self.entries:
            if rid in seen:
                raise RecordFormatError(f"duplicate record id {rid!r}")
            if cls not in CLASSES:
                raise RecordFormatError(f"unknown class {cls!r} for {rid!r}")
            seen.add(rid)

    def as_dict(self) -> dict:
        return dict(self.entries)

    def __len__(self):
        return len(self.entries)


def _stem(path) -> Path:
    path = Path(path)
    name = path.name
    if name.endswith(HEADER_SUFFIX):
        return path.with_name(name[: -len(HEADER_SUFFIX)])
    return path


def header_path(path) -> Path:
    return _stem(path).with_name(_stem(path).name + HEADER_SUFFIX)


def read_record(path) -> Record:
    """Read a record from its header path (or the common path stem)."""
    hdr = header_path(path)
    try:
        meta = json.loads(hdr.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise RecordFormatError(f"{hdr}: corrupt header ({exc})") from exc
    if not isinstance(meta, dict):
        raise RecordFormatError(f"{hdr}: header must be a JSON object")
    missing = {"id", "fs", "gain", "sample_count", "encoding"} - meta.keys()
    if missing:
        raise RecordFormatError(f"{hdr}: header missing keys {sorted(missing)}")
    encoding = meta["encoding"]
    if encoding not in ENCODINGS:
        raise RecordFormatError(f"{hdr}: unknown encoding {encoding!r}")
    fs = meta["fs"]
    if not isinstance(fs, (int, float)) or fs <= 0:
        raise RecordFormatError(f"{hdr}: fs must be positive, got {fs!r}")
    count = int(meta["sample_count"])
    payload = _stem(hdr).with_name(_stem(hdr).name + ENCODINGS[encoding])
    if encoding == "i16le":
        raw = payload.read_bytes()
        if len(raw) % 2:
            raise RecordFormatError(f"{payload}: odd byte count {len(raw)}")
        samples = np.frombuffer(raw, dtype="<i2").astype(np.int16)
    else:
        lines = [ln for ln in payload.read_text(encoding="utf-8").split("\n") if ln.strip()]
        try:
            values = [int(ln) for ln in lines]
        except ValueError as exc:
            raise RecordFormatError(f"{payload}: non-integer sample ({exc})") from exc
        samples = np.asarray(values, dtype=np.int64)
    if samples.size != count:
        raise RecordFormatError(
            f"{payload}: payload has {samples.size} samples, header declares {count}")
    label = meta.get("label")
    return Record(str(meta["id"]), fs, float(meta["gain"]), samples, label)


def write_record(r: Record, path, encoding: str = "i16le") -> Path:
    """Write ``r`` as header + payload; returns the header path."""
    if encoding not in ENCODINGS:
        raise RecordFormatError(f"unknown encoding {encoding!r}")
    hdr = header_path(path)
    payload = _stem(hdr).with_name(_stem(hdr).name + ENCODINGS[encoding])
    meta = {"id": r.id, "fs": r.fs, "gain": r.gain,
            "sample_count": int(r.samples.size), "encoding": encoding}
    if r.label is not None:
        meta["label"] = r.label
    if encoding == "i16le":
        payload.write_bytes(r.samples.astype("<i2").tobytes())
    else:
        payload.write_text("".join(f"{int(v)}\n" for v in r.samples), encoding="utf-8", newline="\n")
    hdr.write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
    return hdr


def list_records(directory) -> list:
    """Header paths in ``directory`` sorted by record id."""
    return sorted(Path(directory).glob("*" + HEADER_SUFFIX), key=lambda p: p.name)


def parse_labels_text(text: str, source: str = "<labels>") -> LabelFile:
    entries = []
    for lineno, line in enumerate(text.split("\n"), 1):
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2 or not parts[0]:
            raise RecordFormatError(f"{source}:{lineno}: expected 'id,class'")
        rid, token = parts
        if token not in _TOKEN_TO_CLASS:
            raise RecordFormatError(f"{source}:{lineno}: unknown class token {token!r}")
        entries.append((rid, _TOKEN_TO_CLASS[token]))
    return LabelFile(entries)


def read_labels(path) -> LabelFile:
    return parse_labels_text(Path(path).read_text(encoding="utf-8"), str(path))


def write_labels(labels, path) -> None:
    """Write ``(id, class)`` pairs or a LabelFile, sorted by id."""
    entries = labels.entries if isinstance(labels, LabelFile) else list(labels)
    LabelFile(list(entries))  # validates
    body = "".join(f"{rid},{_CLASS_TO_TOKEN[cls]}\n" for rid, cls in sorted(entries))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(body)

