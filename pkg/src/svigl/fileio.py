"""File formats: PGM images, Middlebury .flo flow fields, ASCII PLY point
clouds, and trace/summary CSVs.

All writes are atomic (temp file + rename) so interrupted runs never leave
truncated artifacts. Malformed inputs raise FileFormatError carrying the byte
offset of the problem.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .flow import FlowField

FLO_MAGIC = b"PIEH"


class FileFormatError(ValueError):
    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


def atomic_write_bytes(path, payload: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def _format_sig(v):
    return f"{float(v):.9g}"


# ---------------------------------------------------------------- PGM images

def _next_token(data, pos):
    n = len(data)
    while pos < n:
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < n and data[pos : pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise FileFormatError("truncated header", n)
    start = pos
    while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
        pos += 1
    return data[start:pos], start, pos


def read_pgm(path):
    """Load a P5 (binary) or P2 (ASCII) PGM as floats in [0, 1]."""
    data = Path(path).read_bytes()
    if data[:2] not in (b"P5", b"P2"):
        raise FileFormatError(f"unsupported magic {data[:2]!r}", 0)
    binary = data[:2] == b"P5"
    pos = 2
    header = []
    for _ in range(3):
        token, start, pos = _next_token(data, pos)
        try:
            value = int(token)
        except ValueError:
            raise FileFormatError(f"non-integer header token {token!r}", start) from None
        header.append((value, start))
    (width, w_off), (height, h_off), (maxval, m_off) = header
    if width <= 0 or height <= 0:
        raise FileFormatError("non-positive image dimensions", w_off if width <= 0 else h_off)
    if not 0 < maxval <= 65535:
        raise FileFormatError(f"unsupported maxval {maxval}", m_off)
    count = width * height
    if binary:
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        if len(data) - pos < need:
            raise FileFormatError("truncated pixel data", len(data))
        values = np.frombuffer(data[pos : pos + need], dtype=dtype).astype(float)
    else:
        values = np.empty(count)
        for i in range(count):
            token, start, pos = _next_token(data, pos)
            try:
                values[i] = int(token)
            except ValueError:
                raise FileFormatError(f"non-integer pixel token {token!r}", start) from None
    if values.max(initial=0.0) > maxval:
        raise FileFormatError("pixel value exceeds maxval", pos)
    return values.reshape(height, width) / maxval


def write_pgm(path, image, maxval=255):
    """Store an image with values in [0, 1] as binary P5."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("image must be 2-D")
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    q = np.round(np.clip(image, 0.0, 1.0) * maxval)
    q = q.astype(">u2" if maxval > 255 else "u1")
    height, width = image.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    atomic_write_bytes(path, header + q.tobytes())


# ----------------------------------------------------------- Middlebury .flo

def read_flo(path):
    data = Path(path).read_bytes()
    if data[:4] != FLO_MAGIC:
        raise FileFormatError(f"bad magic {data[:4]!r}", 0)
    if len(data) < 12:
        raise FileFormatError("truncated header", len(data))
    width = int(np.frombuffer(data[4:8], dtype="<i4")[0])
    height = int(np.frombuffer(data[8:12], dtype="<i4")[0])
    if width <= 0 or height <= 0:
        raise FileFormatError(f"invalid dimensions {width} x {height}", 4)
    need = width * height * 2 * 4
    if len(data) - 12 < need:
        raise FileFormatError("truncated flow payload", len(data))
    uv = np.frombuffer(data[12 : 12 + need], dtype="<f4").reshape(height, width, 2)
    return FlowField.from_uv(uv[:, :, 0].astype(float), uv[:, :, 1].astype(float))


def write_flo(path, field: FlowField):
    header = FLO_MAGIC + np.array([field.width, field.height], dtype="<i4").tobytes()
    uv = np.stack([field.u, field.v], axis=-1).astype("<f4")
    atomic_write_bytes(path, header + uv.tobytes())


# ------------------------------------------------------------------ASCII PLY

def read_ply(path):
    """Load an ASCII PLY with float x/y/z vertex properties as an (N, 3) array."""
    data = Path(path).read_bytes()
    lines = []
    pos = 0
    for raw in data.split(b"\n"):
        lines.append((raw.strip(), pos))
        pos += len(raw) + 1
    idx = 0

    def next_line():
        nonlocal idx
        while idx < len(lines) and not lines[idx][0]:
            idx += 1
        if idx >= len(lines):
            raise FileFormatError("unexpected end of file", len(data))
        idx += 1
        return lines[idx - 1]

    line, off = next_line()
    if line != b"ply":
        raise FileFormatError("missing 'ply' signature", off)
    line, off = next_line()
    if line != b"format ascii 1.0":
        raise FileFormatError(f"unsupported format {line.decode(errors='replace')!r}", off)
    count = None
    props = []
    while True:
        line, off = next_line()
        if line == b"end_header":
            break
        parts = line.split()
        if parts[0] == b"comment":
            continue
        if parts[0] == b"element":
            if count is not None or len(parts) != 3 or parts[1] != b"vertex":
                raise FileFormatError("only a single vertex element is supported", off)
            try:
                count = int(parts[2])
            except ValueError:
                raise FileFormatError("non-integer vertex count", off) from None
        elif parts[0] == b"property":
            if len(parts) != 3 or parts[1] not in (b"float", b"float32", b"double"):
                raise FileFormatError("unsupported property declaration", off)
            props.append(parts[2])
        else:
            raise FileFormatError(f"unsupported header line {line.decode(errors='replace')!r}", off)
    if count is None or props != [b"x", b"y", b"z"]:
        raise FileFormatError("vertex element must declare float x, y, z", 0)
    points = np.empty((count, 3))
    for i in range(count):
        line, off = next_line()
        parts = line.split()
        if len(parts) != 3:
            raise FileFormatError(f"expected 3 coordinates, got {len(parts)}", off)
        try:
            points[i] = [float(p) for p in parts]
        except ValueError:
            raise FileFormatError("non-numeric coordinate", off) from None
    return points


def write_ply(path, points):
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("points must form an (N, 3) array")
    out = ["ply", "format ascii 1.0", f"element vertex {points.shape[0]}",
           "property float x", "property float y", "property float z",
           "end_header"]
    out.extend(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}" for p in points)
    atomic_write_bytes(path, ("\n".join(out) + "\n").encode("ascii"))


# ------------------------------------------------------------------------CSV

def write_trace_csv(path, trace):
    """Header `iter,kl,seconds`, one row per record, 9 significant digits."""
    rows = ["iter,kl,seconds"]
    rows.extend(
        f"{r.iteration},{_format_sig(r.objective)},{_format_sig(r.seconds)}"
        for r in trace
    )
    atomic_write_bytes(path, ("\n".join(rows) + "\n").encode("ascii"))


def read_trace_csv(path):
    """Return (iterations, objectives, seconds) arrays from a trace CSV."""
    text = Path(path).read_text(encoding="ascii")
    lines = text.strip().split("\n")
    if lines[0] != "iter,kl,seconds":
        raise FileFormatError(f"unexpected trace header {lines[0]!r}", 0)
    iters, kls, secs = [], [], []
    for line in lines[1:]:
        i, k, s = line.split(",")
        iters.append(int(i))
        kls.append(float(k))
        secs.append(float(s))
    return np.array(iters), np.array(kls), np.array(secs)


def write_summary_csv(path, rows):
    """Rows of (optimizer, final_kl, psnr_or_aepe, seconds_total)."""
    out = ["optimizer,final_kl,psnr_or_aepe,seconds_total"]
    for name, kl, metric, seconds in rows:
        out.append(f"{name},{_format_sig(kl)},{_format_sig(metric)},{_format_sig(seconds)}")
    atomic_write_bytes(path, ("\n".join(out) + "\n").encode("ascii"))
