"""File formats: dataset manifests (CSV), the `TNS1` binary tensor
container, and 88-column acoustic feature CSVs.

Readers reject malformed input outright; nothing is silently repaired.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"TNS1"
_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_FOR_KIND = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}

N_ACOUSTIC_FEATURES = 88

MANIFEST_FIELDS = ["subject_id", "label", "text_emb", "image_emb", "acoustic_row", "split"]
LABELS = {"AD": 1, "nonAD": 0}


class FormatError(ValueError):
    pass


def write_tensor(path, x: np.ndarray) -> None:
    x = np.asarray(x)
    if x.dtype not in _CODE_FOR_KIND:
        raise FormatError(f"unsupported dtype {x.dtype}")
    if any(d > 0xFFFFFFFF for d in x.shape):
        raise FormatError("dimension does not fit in u32")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<BB", _CODE_FOR_KIND[x.dtype], x.ndim))
        f.write(struct.pack(f"<{x.ndim}I", *x.shape))
        f.write(np.ascontiguousarray(x, dtype=x.dtype.newbyteorder("<")).tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 6:
        raise FormatError(f"{path}: truncated header")
    code, ndim = struct.unpack_from("<BB", blob, 4)
    if code not in _DTYPE_CODES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    dtype = _DTYPE_CODES[code]
    head = 6 + 4 * ndim
    if len(blob) < head:
        raise FormatError(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{ndim}I", blob, 6)
    expected = head + int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(blob) != expected:
        raise FormatError(f"{path}: payload is {len(blob) - head} bytes, expected {expected - head}")
    arr = np.frombuffer(blob[head:], dtype=dtype).reshape(dims)
    return arr.astype(dtype.newbyteorder("="))


@dataclass
class ManifestRecord:
    subject_id: str
    label: int  # AD=1, nonAD=0
    text_emb: str
    image_emb: str        # empty when modality absent
    acoustic_row: str     # "<csv_path>#<row_id>", empty when absent
    split: str            # train | test


@dataclass
class Manifest:
    records: list
    base_dir: Path

    def split(self, name: str) -> list:
        return [r for r in self.records if r.split == name]


def read_manifest(path, check_files: bool = True) -> Manifest:
    path = Path(path)
    base = path.parent
    records, seen = [], set()
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != MANIFEST_FIELDS:
            raise FormatError(f"{path}: expected header {','.join(MANIFEST_FIELDS)}")
        for lineno, row in enumerate(reader, start=2):
            if any(v is None for v in row.values()):
                raise FormatError(f"{path}:{lineno}: wrong column count")
            sid = row["subject_id"]
            if sid in seen:
                raise FormatError(f"{path}:{lineno}: duplicate subject_id {sid!r}")
            seen.add(sid)
            if row["label"] not in LABELS:
                raise FormatError(f"{path}:{lineno}: label {row['label']!r} not in {{AD, nonAD}}")
            if row["split"] not in ("train", "test"):
                raise FormatError(f"{path}:{lineno}: split {row['split']!r} not in {{train, test}}")
            records.append(ManifestRecord(
                subject_id=sid, label=LABELS[row["label"]],
                text_emb=row["text_emb"], image_emb=row["image_emb"],
                acoustic_row=row["acoustic_row"], split=row["split"]))
    manifest = Manifest(records=records, base_dir=base)
    if check_files:
        missing = []
        for r in manifest.records:
            for ref in (r.text_emb, r.image_emb):
                if ref and not (base / ref).exists():
                    missing.append(f"{r.subject_id}: {ref}")
            if r.acoustic_row:
                csv_path = r.acoustic_row.split("#", 1)[0]
                if not (base / csv_path).exists():
                    missing.append(f"{r.subject_id}: {csv_path}")
        if missing:
            raise FormatError(f"{path}: missing referenced files: " + "; ".join(missing))
    return manifest


def write_manifest(path, records) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(MANIFEST_FIELDS)
        inv = {v: k for k, v in LABELS.items()}
        for r in records:
            writer.writerow([r.subject_id, inv[r.label], r.text_emb,
                             r.image_emb, r.acoustic_row, r.split])


def read_acoustic_csv(path) -> dict:
    """Map subject_id -> float32 vector of the 88 acoustic functionals."""
    out = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or len(header) != N_ACOUSTIC_FEATURES + 1:
            got = 0 if header is None else len(header) - 1
            raise FormatError(
                f"{path}: expected id column + {N_ACOUSTIC_FEATURES} feature columns, got {got}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != N_ACOUSTIC_FEATURES + 1:
                raise FormatError(
                    f"{path}:{lineno}: expected {N_ACOUSTIC_FEATURES} feature columns, got {len(row) - 1}")
            sid = row[0]
            if sid in out:
                raise FormatError(f"{path}:{lineno}: duplicate subject_id {sid!r}")
            try:
                vec = np.array([float(v) for v in row[1:]], dtype=np.float32)
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: non-numeric cell ({e})") from None
            out[sid] = vec
    return out


def write_acoustic_csv(path, features: dict) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["subject_id"] + [f"f{i}" for i in range(N_ACOUSTIC_FEATURES)])
        for sid, vec in features.items():
            writer.writerow([sid] + [repr(float(v)) for v in vec])
