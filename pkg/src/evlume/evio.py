"""Binary file formats: event records, voxel grids, weight tables, PGM
images, and key=value configs.

Everything is little-endian with fixed-width fields (except PGM's
big-endian 16-bit samples, which are pinned by the PGM convention).
Writers are deterministic — identical inputs give byte-identical files —
and readers reject malformed input with `FormatError`s that name the
byte offset of the problem.

Event file (magic ``EVT1``)::

    header  16 B   magic 4s | width u16 | height u16 | count u64
    records 16 B   t u64 µs | x u16 | y u16 | p i8 | 3 zero pad bytes

Records must be sorted by (t, y, x) with no exact duplicates, lie inside
the sensor, have polarity ±1, and zero padding.

Voxel file (magic ``VOX1``)::

    header  28 B   magic 4s | B u16 | H u16 | W u16 | pad u16 zero | t0 u64 | t1 u64
    payload        B*H*W float32, index order (bin, row, col)

Weight table file (magic ``WGT1``)::

    header   8 B   magic 4s | resolution u16 | B u16
    payload        resolution*B float32, row-major; each row sums to 1 ± 1e-4
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .events import EventStream, SensorGeometry, validate
from .voxel import VoxelGrid, WeightTable

_EVT1_HEADER = struct.Struct("<4sHHQ")
_VOX1_HEADER = struct.Struct("<4sHHHHQQ")
_WGT1_HEADER = struct.Struct("<4sHH")

_EVT1_RECORD = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1"), ("pad", "u1", (3,))]
)
assert _EVT1_RECORD.itemsize == 16


class FormatError(Exception):
    """A file failed to parse or violated a format invariant."""

    def __init__(self, offset: int, message: str, path=None):
        self.offset = int(offset)
        self.path = str(path) if path is not None else None
        where = f"{self.path}: " if self.path else ""
        super().__init__(f"{where}{message} (byte offset {self.offset})")


# --- events (EVT1) -------------------------------------------------------

def write_events(path, stream: EventStream) -> None:
    """Serialize a valid stream, canonically ordered, to an EVT1 file.

    The file's record order is the canonical (t, y, x) order, so two
    streams equal up to same-timestamp tie order produce identical bytes.
    """
    bad = validate(stream)
    if bad is not None:
        raise ValueError(f"refusing to write invalid stream: event {bad.index} violates {bad.reason}")
    s = stream.canonical()
    rec = np.zeros(len(s), dtype=_EVT1_RECORD)
    rec["t"] = s.t
    rec["x"] = s.x
    rec["y"] = s.y
    rec["p"] = s.p
    g = s.geometry
    header = _EVT1_HEADER.pack(b"EVT1", g.width, g.height, len(s))
    Path(path).write_bytes(header + rec.tobytes())


def read_events(path) -> EventStream:
    buf = Path(path).read_bytes()
    if len(buf) < _EVT1_HEADER.size:
        raise FormatError(len(buf), "truncated EVT1 header", path)
    magic, width, height, count = _EVT1_HEADER.unpack_from(buf)
    if magic != b"EVT1":
        raise FormatError(0, f"bad magic {magic!r}, expected b'EVT1'", path)
    if width < 1 or height < 1:
        raise FormatError(4, f"degenerate sensor geometry {width}x{height}", path)
    expected = _EVT1_HEADER.size + 16 * count
    if len(buf) < expected:
        raise FormatError(len(buf), f"truncated payload: header declares {count} records", path)
    if len(buf) > expected:
        raise FormatError(expected, f"{len(buf) - expected} trailing bytes after {count} records", path)

    rec = np.frombuffer(buf, dtype=_EVT1_RECORD, count=count, offset=_EVT1_HEADER.size)
    t, x, y, p = rec["t"], rec["x"], rec["y"], rec["p"]

    def record_offset(i: int) -> int:
        return _EVT1_HEADER.size + 16 * int(i)

    checks = []  # (record index, reason), lowest offset wins
    bad = np.flatnonzero(rec["pad"].any(axis=1))
    if bad.size:
        checks.append((bad[0], "nonzero pad bytes"))
    bad = np.flatnonzero((p != 1) & (p != -1))
    if bad.size:
        checks.append((bad[0], f"polarity {int(p[bad[0]])} not in {{+1, -1}}"))
    bad = np.flatnonzero((x >= width) | (y >= height))
    if bad.size:
        checks.append((bad[0], "coordinates outside sensor geometry"))
    if count > 1:
        key_prev = (t[:-1], y[:-1], x[:-1])
        key_next = (t[1:], y[1:], x[1:])
        later = (
            (key_next[0] > key_prev[0])
            | ((key_next[0] == key_prev[0]) & (key_next[1] > key_prev[1]))
            | ((key_next[0] == key_prev[0]) & (key_next[1] == key_prev[1]) & (key_next[2] > key_prev[2]))
        )
        equal = (
            (key_next[0] == key_prev[0]) & (key_next[1] == key_prev[1]) & (key_next[2] == key_prev[2])
        )
        bad = np.flatnonzero(~later & ~equal)
        if bad.size:
            checks.append((bad[0] + 1, "records not sorted by (t, y, x)"))
        bad = np.flatnonzero(equal)
        if bad.size:
            checks.append((bad[0] + 1, "duplicate (t, y, x) record"))
    if checks:
        i, reason = min(checks, key=lambda c: c[0])
        raise FormatError(record_offset(i), f"record {int(i)}: {reason}", path)

    return EventStream(SensorGeometry(width, height), t.copy(), x.copy(), y.copy(), p.copy())


# --- voxel grids (VOX1) --------------------------------------------------

def write_voxel(path, grid: VoxelGrid) -> None:
    g = grid.geometry
    header = _VOX1_HEADER.pack(b"VOX1", grid.bins, g.height, g.width, 0, grid.t0, grid.t1)
    payload = np.ascontiguousarray(grid.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_voxel(path) -> VoxelGrid:
    buf = Path(path).read_bytes()
    if len(buf) < _VOX1_HEADER.size:
        raise FormatError(len(buf), "truncated VOX1 header", path)
    magic, bins, height, width, pad, t0, t1 = _VOX1_HEADER.unpack_from(buf)
    if magic != b"VOX1":
        raise FormatError(0, f"bad magic {magic!r}, expected b'VOX1'", path)
    if bins < 1 or height < 1 or width < 1:
        raise FormatError(4, f"degenerate dimensions B={bins} H={height} W={width}", path)
    if pad != 0:
        raise FormatError(10, f"nonzero header pad {pad}", path)
    expected = _VOX1_HEADER.size + 4 * bins * height * width
    if len(buf) < expected:
        raise FormatError(len(buf), f"truncated payload: need {expected} bytes total", path)
    if len(buf) > expected:
        raise FormatError(expected, f"{len(buf) - expected} trailing bytes", path)
    data = (
        np.frombuffer(buf, dtype="<f4", count=bins * height * width, offset=_VOX1_HEADER.size)
        .reshape(bins, height, width)
        .astype(np.float64)
    )
    return VoxelGrid(bins, SensorGeometry(width, height), t0, t1, data)


# --- weight tables (WGT1) ------------------------------------------------

def write_weights(path, table: WeightTable) -> None:
    header = _WGT1_HEADER.pack(b"WGT1", table.resolution, table.bins)
    payload = np.ascontiguousarray(table.weights, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_weights(path) -> WeightTable:
    buf = Path(path).read_bytes()
    if len(buf) < _WGT1_HEADER.size:
        raise FormatError(len(buf), "truncated WGT1 header", path)
    magic, resolution, bins = _WGT1_HEADER.unpack_from(buf)
    if magic != b"WGT1":
        raise FormatError(0, f"bad magic {magic!r}, expected b'WGT1'", path)
    if resolution < 2 or bins < 1:
        raise FormatError(4, f"degenerate table {resolution}x{bins}", path)
    expected = _WGT1_HEADER.size + 4 * resolution * bins
    if len(buf) != expected:
        raise FormatError(
            min(len(buf), expected), f"payload must be exactly {expected - _WGT1_HEADER.size} bytes", path
        )
    w = np.frombuffer(buf, dtype="<f4", count=resolution * bins, offset=_WGT1_HEADER.size)
    w = w.reshape(resolution, bins)
    sums = w.sum(axis=1, dtype=np.float64)
    bad = np.flatnonzero(np.abs(sums - 1.0) > WeightTable.ROW_SUM_TOL)
    if bad.size:
        row = int(bad[0])
        raise FormatError(
            _WGT1_HEADER.size + 4 * bins * row,
            f"weight row {row} sums to {sums[row]:.6f}, outside 1 +/- {WeightTable.ROW_SUM_TOL}",
            path,
        )
    return WeightTable(w.copy())


# --- PGM images ----------------------------------------------------------

_PGM_WHITESPACE = frozenset(b" \t\r\n\v\f")


def _pgm_token(buf: bytes, pos: int, path) -> tuple[bytes, int, int]:
    """Next header token after whitespace/comments: (token, start, end)."""
    n = len(buf)
    while pos < n:
        c = buf[pos]
        if c in _PGM_WHITESPACE:
            pos += 1
        elif c == 0x23:  # '#' comment runs to end of line
            while pos < n and buf[pos] not in (0x0A, 0x0D):
                pos += 1
        else:
            break
    if pos >= n:
        raise FormatError(n, "unexpected end of PGM header", path)
    start = pos
    while pos < n and buf[pos] not in _PGM_WHITESPACE:
        pos += 1
    return buf[start:pos], start, pos


def _pgm_int(buf: bytes, pos: int, what: str, path) -> tuple[int, int]:
    token, start, end = _pgm_token(buf, pos, path)
    try:
        value = int(token)
    except ValueError:
        raise FormatError(start, f"bad PGM {what} {token!r}", path) from None
    if value < 1:
        raise FormatError(start, f"PGM {what} must be positive, got {value}", path)
    return value, end


def read_pgm(path) -> np.ndarray:
    """Load a binary (P5) PGM as float64 in [0, 1]; maxval 255 or 65535."""
    buf = Path(path).read_bytes()
    if buf[:2] == b"P2":
        raise FormatError(0, "ASCII PGM (P2) unsupported, need binary P5", path)
    if buf[:2] != b"P5":
        raise FormatError(0, f"bad magic {buf[:2]!r}, expected b'P5'", path)
    width, pos = _pgm_int(buf, 2, "width", path)
    height, pos = _pgm_int(buf, pos, "height", path)
    maxval, pos = _pgm_int(buf, pos, "maxval", path)
    if maxval not in (255, 65535):
        raise FormatError(pos - len(str(maxval)), f"maxval {maxval} unsupported (255 or 65535)", path)
    if pos >= len(buf) or buf[pos] not in _PGM_WHITESPACE:
        raise FormatError(pos, "expected single whitespace before PGM payload", path)
    start = pos + 1
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    expected = start + width * height * dtype.itemsize
    if len(buf) < expected:
        raise FormatError(len(buf), f"truncated payload: need {expected} bytes total", path)
    if len(buf) > expected:
        raise FormatError(expected, f"{len(buf) - expected} trailing bytes", path)
    samples = np.frombuffer(buf, dtype=dtype, count=width * height, offset=start)
    return samples.reshape(height, width).astype(np.float64) / maxval


def write_pgm(path, image) -> None:
    """Write values (clipped to [0, 1]) as a 16-bit binary PGM."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {arr.shape}")
    h, w = arr.shape
    q = np.rint(np.clip(arr, 0.0, 1.0) * 65535.0).astype(">u2")
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + q.tobytes())


# --- key=value configs ---------------------------------------------------

def read_config(path) -> dict[str, str]:
    """Parse UTF-8 key=value lines; blank lines and #-comment lines skipped."""
    out: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def write_config(path, mapping) -> None:
    """Write key=value lines, keys sorted for byte determinism."""
    lines = [f"{k} = {mapping[k]}" for k in sorted(mapping)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
