"""Minimal OpenEXR scanline codec: uncompressed, single-part, FLOAT
storage (HALF accepted on read).

Covers exactly what the pipeline needs — lossless linear-radiometric
float I/O for renders and irradiance images — without pulling in an
EXR binding. Files written here load in standard OpenEXR readers;
reading supports the same uncompressed scanline subset.
"""
from __future__ import annotations

import struct

import numpy as np

__all__ = ["read_exr", "write_exr"]

_MAGIC = 20000630
_VERSION = 2
_PT_UINT, _PT_HALF, _PT_FLOAT = 0, 1, 2
_NO_COMPRESSION = 0
_INCREASING_Y = 0


def _attr(name: str, kind: str, payload: bytes) -> bytes:
    return name.encode() + b"\0" + kind.encode() + b"\0" + struct.pack("<i", len(payload)) + payload


def _channel_entry(name: str) -> bytes:
    # pixel type FLOAT, pLinear 0 + reserved, sampling 1x1
    return name.encode() + b"\0" + struct.pack("<i", _PT_FLOAT) + b"\0\0\0\0" + struct.pack("<ii", 1, 1)


def write_exr(path, data: np.ndarray) -> None:
    """Write (H, W, 1|3) float data as an uncompressed FLOAT EXR.

    3-channel data is stored as R, G, B (file order B, G, R per the
    alphabetical-channel convention); 1-channel as Y. Values are stored
    as float32, so a float32 roundtrip is bitwise exact.
    """
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError("expected (H, W, 1|3) data")
    h, w, c = arr.shape
    file_channels = ["Y"] if c == 1 else ["B", "G", "R"]
    source_index = {"Y": 0, "R": 0, "G": 1, "B": 2}

    header = b""
    chlist = b"".join(_channel_entry(n) for n in file_channels) + b"\0"
    header += _attr("channels", "chlist", chlist)
    header += _attr("compression", "compression", bytes([_NO_COMPRESSION]))
    box = struct.pack("<iiii", 0, 0, w - 1, h - 1)
    header += _attr("dataWindow", "box2i", box)
    header += _attr("displayWindow", "box2i", box)
    header += _attr("lineOrder", "lineOrder", bytes([_INCREASING_Y]))
    header += _attr("pixelAspectRatio", "float", struct.pack("<f", 1.0))
    header += _attr("screenWindowCenter", "v2f", struct.pack("<ff", 0.0, 0.0))
    header += _attr("screenWindowWidth", "float", struct.pack("<f", 1.0))
    header += b"\0"

    preamble = struct.pack("<ii", _MAGIC, _VERSION) + header
    table_start = len(preamble)
    line_bytes = 8 + c * w * 4  # y + size prefix + channel-planar pixels
    first_chunk = table_start + 8 * h

    out = bytearray(preamble)
    for y in range(h):
        out += struct.pack("<Q", first_chunk + y * line_bytes)
    for y in range(h):
        out += struct.pack("<ii", y, c * w * 4)
        for name in file_channels:
            out += arr[y, :, source_index[name]].tobytes()
    with open(path, "wb") as f:
        f.write(bytes(out))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ValueError("truncated EXR file")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def cstring(self, limit: int = 256) -> str:
        end = self.blob.index(b"\0", self.pos, self.pos + limit)
        out = self.blob[self.pos:end].decode()
        self.pos = end + 1
        return out


def _parse_channels(payload: bytes):
    r = _Reader(payload)
    channels = []
    while payload[r.pos] != 0:
        name = r.cstring()
        ptype, = struct.unpack("<i", r.take(4))
        r.take(4)  # pLinear + reserved
        r.take(8)  # sampling
        if ptype not in (_PT_HALF, _PT_FLOAT):
            raise ValueError(f"unsupported pixel type {ptype} for channel {name!r}")
        channels.append((name, ptype))
    return channels


def read_exr(path) -> np.ndarray:
    """Read an uncompressed scanline EXR into (H, W, C) float64.

    Supports FLOAT and HALF channels; 3-channel files must carry R, G,
    B, single-channel files load as-is.
    """
    with open(path, "rb") as f:
        blob = f.read()
    r = _Reader(blob)
    magic, version = struct.unpack("<ii", r.take(8))
    if magic != _MAGIC:
        raise ValueError("not an EXR file")
    if version & 0x3F != _VERSION or version & ~0x3F:
        raise ValueError("unsupported EXR version/flags (single-part scanline only)")

    attrs = {}
    while blob[r.pos] != 0:
        name = r.cstring()
        r.cstring()  # attribute type, unused beyond the known set
        size, = struct.unpack("<i", r.take(4))
        attrs[name] = r.take(size)
    r.take(1)

    for needed in ("channels", "compression", "dataWindow", "lineOrder"):
        if needed not in attrs:
            raise ValueError(f"missing EXR attribute {needed!r}")
    if attrs["compression"][0] != _NO_COMPRESSION:
        raise ValueError("only uncompressed EXR files are supported")
    if attrs["lineOrder"][0] != _INCREASING_Y:
        raise ValueError("only increasing-Y line order is supported")
    x0, y0, x1, y1 = struct.unpack("<iiii", attrs["dataWindow"])
    w, h = x1 - x0 + 1, y1 - y0 + 1
    channels = _parse_channels(attrs["channels"])

    names = [n for n, _ in channels]
    if len(channels) == 3 and sorted(names) == ["B", "G", "R"]:
        order = [names.index(n) for n in ("R", "G", "B")]
    elif len(channels) == 1:
        order = [0]
    else:
        raise ValueError(f"unsupported channel set {names!r}")

    r.take(8 * h)  # line offset table; chunks follow in order
    out = np.empty((h, w, len(channels)), dtype=np.float64)
    for row in range(h):
        y, size = struct.unpack("<ii", r.take(8))
        if y != y0 + row:
            raise ValueError("unexpected scanline order")
        expected = sum(w * (2 if pt == _PT_HALF else 4) for _, pt in channels)
        if size != expected:
            raise ValueError("scanline size mismatch")
        planes = []
        for _name, ptype in channels:
            dtype = np.float16 if ptype == _PT_HALF else np.float32
            raw = r.take(w * dtype().itemsize)
            planes.append(np.frombuffer(raw, dtype=dtype).astype(np.float64))
        for c_out, c_in in enumerate(order):
            out[row, :, c_out] = planes[c_in]
    return out
