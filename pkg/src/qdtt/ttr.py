"""Bit-exact reader/writer for the QDTT time-tag stream format.

Layout (all little-endian):

    header, 32 bytes:
        magic         4 bytes  b"QDTT"
        version       u32      = 1
        tick_fs       u64      femtoseconds per tick (1000 -> 1 ps ticks)
        channel_count u32
        record_count  u64
        reserved      4 bytes  zero
    records, 16 bytes each:
        timestamp     u64      ticks since run start
        channel       u8
        flags         u8       bit 0 = sync marker
        reserved      6 bytes  zero

Fixed 16-byte records keep scanning vectorizable; u64 picosecond ticks
cover runs of 200+ days.  Files always total 32 + 16 * record_count bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"QDTT"
VERSION = 1
TICK_FS = 1000
HEADER_SIZE = 32
RECORD_SIZE = 16

_HEADER = struct.Struct("<4sIQIQ4x")

RECORD_DTYPE = np.dtype([
    ("timestamp", "<u8"),
    ("channel", "u1"),
    ("flags", "u1"),
    ("reserved", "V6"),
])
assert RECORD_DTYPE.itemsize == RECORD_SIZE


class TtrError(Exception):
    """Malformed or corrupt time-tag file."""


@dataclass
class TtrHeader:
    channel_count: int
    record_count: int
    tick_fs: int = TICK_FS
    version: int = VERSION

    def pack(self) -> bytes:
        return _HEADER.pack(MAGIC, self.version, self.tick_fs,
                            self.channel_count, self.record_count)

    @classmethod
    def unpack(cls, raw: bytes) -> "TtrHeader":
        if len(raw) < HEADER_SIZE:
            raise TtrError("file shorter than the 32-byte header")
        magic, version, tick_fs, channel_count, record_count = _HEADER.unpack(raw[:HEADER_SIZE])
        if magic != MAGIC:
            raise TtrError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise TtrError(f"unsupported version {version}")
        if tick_fs <= 0:
            raise TtrError("tick_fs must be positive")
        return cls(channel_count=channel_count, record_count=record_count,
                   tick_fs=tick_fs, version=version)


def make_records(timestamps, channels, flags=None) -> np.ndarray:
    """Assemble a structured record array from plain arrays."""
    timestamps = np.asarray(timestamps)
    channels = np.asarray(channels)
    if timestamps.shape != channels.shape:
        raise ValueError("timestamps and channels must have the same length")
    if timestamps.size and timestamps.min() < 0:
        raise ValueError("timestamps must be non-negative")
    rec = np.zeros(timestamps.size, dtype=RECORD_DTYPE)
    rec["timestamp"] = timestamps.astype(np.uint64)
    rec["channel"] = channels.astype(np.uint8)
    if flags is not None:
        rec["flags"] = np.asarray(flags).astype(np.uint8)
    return rec


def write_stream(path, records: np.ndarray, channel_count: int = 4) -> int:
    """Write a sorted record array; returns the number of bytes written."""
    records = np.ascontiguousarray(records, dtype=RECORD_DTYPE)
    ts = records["timestamp"]
    if ts.size > 1 and np.any(np.diff(ts.astype(np.int64)) < 0):
        raise ValueError("records must be sorted by timestamp")
    if records.size and int(records["channel"].max()) >= channel_count:
        raise ValueError("record channel exceeds channel_count")
    header = TtrHeader(channel_count=channel_count, record_count=records.size)
    with open(path, "wb") as fh:
        n = fh.write(header.pack())
        n += fh.write(records.tobytes())
    return n


def read_header(path) -> TtrHeader:
    with open(path, "rb") as fh:
        header = TtrHeader.unpack(fh.read(HEADER_SIZE))
    size = Path(path).stat().st_size
    expected = HEADER_SIZE + RECORD_SIZE * header.record_count
    if size != expected:
        raise TtrError(
            f"file size {size} does not match header record_count "
            f"{header.record_count} (expected {expected}); file is corrupt"
        )
    return header


def read_stream(path) -> tuple[TtrHeader, np.ndarray]:
    """Read the whole file into memory."""
    header = read_header(path)
    with open(path, "rb") as fh:
        fh.seek(HEADER_SIZE)
        records = np.fromfile(fh, dtype=RECORD_DTYPE, count=header.record_count)
    if records.size != header.record_count:
        raise TtrError("short read: file is corrupt")
    return header, records


def read_chunks(path, chunk_size: int):
    """Iterate over the stream in blocks of at most ``chunk_size`` records.

    Memory use is constant in the stream length; the concatenation of the
    yielded blocks equals the full record array.
    """
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    header = read_header(path)
    remaining = header.record_count
    with open(path, "rb") as fh:
        fh.seek(HEADER_SIZE)
        while remaining > 0:
            n = min(chunk_size, remaining)
            block = np.fromfile(fh, dtype=RECORD_DTYPE, count=n)
            if block.size != n:
                raise TtrError("short read: file is corrupt")
            remaining -= n
            yield block
