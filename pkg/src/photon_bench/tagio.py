"""Time-tag files.

Binary (little-endian): a 16-byte header ``b"PTAG"``, ``u32`` version (1),
``u32`` channel count, ``u32`` reserved (0); then 12-byte records of
``u64`` time in ps followed by ``u32`` channel.

CSV: header ``time_ps,channel`` and one record per line.
"""
from __future__ import annotations

import io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .timesim import EventStream

MAGIC = b"PTAG"
VERSION = 1
HEADER = struct.Struct("<4sIII")
RECORD = np.dtype([("time", "<u8"), ("channel", "<u4")])
assert RECORD.itemsize == 12


class TagFileError(ValueError):
    pass


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_ptag(stream: EventStream, channel_count: int | None = None) -> bytes:
    if channel_count is None:
        channel_count = int(stream.channels.max()) + 1 if len(stream) else 0
    if len(stream) and int(stream.channels.max()) >= channel_count:
        raise TagFileError("stream uses a channel beyond channel_count")
    rec = np.empty(len(stream), dtype=RECORD)
    rec["time"] = stream.times
    rec["channel"] = stream.channels
    return HEADER.pack(MAGIC, VERSION, channel_count, 0) + rec.tobytes()


def decode_ptag(data: bytes) -> tuple[EventStream, int]:
    """Parse a binary time-tag file; returns (stream, channel_count).

    The format has no duration field; the stream duration is the last tag time.
    """
    if len(data) < HEADER.size:
        raise TagFileError("file shorter than the 16-byte header")
    magic, version, channel_count, _ = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TagFileError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TagFileError(f"unsupported version {version}")
    body = memoryview(data)[HEADER.size:]
    if len(body) % RECORD.itemsize:
        raise TagFileError("truncated record")
    rec = np.frombuffer(body, dtype=RECORD)
    times = rec["time"].astype(np.int64)
    chans = rec["channel"].astype(np.int64)
    if chans.size and chans.max() >= channel_count:
        raise TagFileError("record channel exceeds header channel count")
    duration = int(times.max()) if times.size else 0
    try:
        return EventStream(times, chans, duration), channel_count
    except ValueError as exc:
        raise TagFileError(str(exc)) from None


def write_ptag(path, stream: EventStream, channel_count: int | None = None) -> None:
    atomic_write_bytes(path, encode_ptag(stream, channel_count))


def read_ptag(path) -> tuple[EventStream, int]:
    return decode_ptag(Path(path).read_bytes())


def encode_csv(stream: EventStream) -> bytes:
    buf = io.StringIO()
    buf.write("time_ps,channel\n")
    for t, c in zip(stream.times.tolist(), stream.channels.tolist()):
        buf.write(f"{t},{c}\n")
    return buf.getvalue().encode()


def decode_csv(data: bytes | str) -> EventStream:
    text = data.decode() if isinstance(data, bytes) else data
    lines = text.splitlines()
    if not lines or lines[0].strip() != "time_ps,channel":
        raise TagFileError("CSV must start with the header 'time_ps,channel'")
    rows = [ln.split(",") for ln in lines[1:] if ln.strip()]
    try:
        times = np.array([int(r[0]) for r in rows], dtype=np.int64)
        chans = np.array([int(r[1]) for r in rows], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise TagFileError(f"malformed CSV record: {exc}") from None
    duration = int(times.max()) if times.size else 0
    return EventStream(times, chans, duration)


def write_csv(path, stream: EventStream) -> None:
    atomic_write_bytes(path, encode_csv(stream))


def read_csv(path) -> EventStream:
    return decode_csv(Path(path).read_bytes())


def read_any(path) -> EventStream:
    """Dispatch on content: PTAG magic means binary, otherwise CSV."""
    data = Path(path).read_bytes()
    if data[:4] == MAGIC:
        return decode_ptag(data)[0]
    return decode_csv(data)
