"""Binary dataset container (``SGB1``).

Layout, all little-endian::

    header   magic "SGB1" | version u16 | fs u32 | n_records u32 | n_channels u8
    record   record_id u64 | n_samples u32 | fault_line u8 (0 = none)
             | fault_start f64 | params_len u32 | params (UTF-8 JSON)
             | samples float32[n_channels * n_samples], channel-major

Records are written in ascending ``record_id`` order.  Channel-major storage
means a record's sample block maps straight onto ``samples[channel, n]``.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .gridsim import N_CHANNELS, ScenarioParams, WaveformRecord

MAGIC = b"SGB1"
VERSION = 1
_HEADER = struct.Struct("<4sHIIB")
_RECORD = struct.Struct("<QIBdI")


class DatasetFormatError(ValueError):
    pass


class RecordNotFound(KeyError):
    pass


@dataclass(frozen=True)
class DatasetHeader:
    version: int
    fs: int
    n_records: int
    n_channels: int


def _params_blob(meta: ScenarioParams) -> bytes:
    return json.dumps(meta.to_dict(), sort_keys=True, separators=(",", ":")).encode()


def _write_record(fh: BinaryIO, rec: WaveformRecord) -> int:
    if rec.samples.shape[0] != N_CHANNELS:
        raise DatasetFormatError(f"record {rec.record_id}: expected 48 channels")
    blob = _params_blob(rec.meta)
    fault_line = rec.meta.fault_line or 0
    head = _RECORD.pack(rec.record_id, rec.n_samples, fault_line, rec.meta.fault_start, len(blob))
    data = np.ascontiguousarray(rec.samples, dtype="<f4").tobytes()
    fh.write(head)
    fh.write(blob)
    fh.write(data)
    return len(head) + len(blob) + len(data)


def write_dataset(
    path, records: Iterable[WaveformRecord], fs: float, n_records: int
) -> int:
    """Stream ``records`` into ``path``; returns the file size in bytes.

    The file is assembled under a temporary name and renamed on success, so a
    failed run never leaves a truncated dataset behind.
    """
    path = Path(path)
    if int(fs) != fs:
        raise DatasetFormatError(f"fs must be a whole number of Hz, got {fs}")
    tmp = path.with_name(path.name + ".part")
    written = 0
    last_id = -1
    count = 0
    try:
        with open(tmp, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, int(fs), n_records, N_CHANNELS))
            written += _HEADER.size
            for rec in records:
                if rec.fs != fs:
                    raise DatasetFormatError(f"record {rec.record_id} has fs {rec.fs}, file {fs}")
                if rec.record_id <= last_id:
                    raise DatasetFormatError("records must come in ascending record_id order")
                last_id = rec.record_id
                written += _write_record(fh, rec)
                count += 1
        if count != n_records:
            raise DatasetFormatError(f"header announces {n_records} records, got {count}")
        os.replace(tmp, path)
    except BaseException:
        if tmp.exists():
            tmp.unlink()
        raise
    return written


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DatasetFormatError("unexpected end of file")
    return buf


def read_header(fh: BinaryIO) -> DatasetHeader:
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise DatasetFormatError("file too short for header")
    magic, version, fs, n_records, n_channels = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}")
    if version > VERSION or version == 0:
        raise DatasetFormatError(f"unsupported dataset version {version}")
    if n_channels != N_CHANNELS:
        raise DatasetFormatError(f"expected 48 channels, header says {n_channels}")
    return DatasetHeader(version, fs, n_records, n_channels)


def _read_record(fh: BinaryIO, header: DatasetHeader, load_samples: bool = True):
    record_id, n_samples, fault_line, fault_start, blob_len = _RECORD.unpack(
        _read_exact(fh, _RECORD.size)
    )
    meta = ScenarioParams.from_dict(json.loads(_read_exact(fh, blob_len)))
    if (meta.fault_line or 0) != fault_line or meta.fault_start != fault_start:
        raise DatasetFormatError(f"record {record_id}: header and params disagree")
    nbytes = header.n_channels * n_samples * 4
    if not load_samples:
        fh.seek(nbytes, os.SEEK_CUR)
        return record_id, meta, None
    data = np.frombuffer(_read_exact(fh, nbytes), dtype="<f4")
    samples = data.reshape(header.n_channels, n_samples).astype(np.float32)
    return record_id, meta, samples


def iter_dataset(path) -> Iterator[WaveformRecord]:
    with open(path, "rb") as fh:
        header = read_header(fh)
        for _ in range(header.n_records):
            rid, meta, samples = _read_record(fh, header)
            yield WaveformRecord(fs=float(header.fs), samples=samples, meta=meta, record_id=rid)
        if fh.read(1):
            raise DatasetFormatError("trailing bytes after last record")


def read_dataset(path) -> list[WaveformRecord]:
    """Load every record; the whole file is validated before returning."""
    return list(iter_dataset(path))


def read_record(path, record_id: int) -> WaveformRecord:
    with open(path, "rb") as fh:
        header = read_header(fh)
        for _ in range(header.n_records):
            pos = fh.tell()
            rid, _, _ = _read_record(fh, header, load_samples=False)
            if rid == record_id:
                fh.seek(pos)
                rid, meta, samples = _read_record(fh, header)
                return WaveformRecord(float(header.fs), samples, meta, rid)
    raise RecordNotFound(f"record {record_id} not in {path}")
