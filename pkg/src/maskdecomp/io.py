"""File formats used by the command line tool.

Signals are CSV with one real per line, masks are binary PGM (P5, 0/255)
or CSV of 0/1, flow is CSV with header ``x,y,u,v`` in row-major pixel
order.  Any malformed input raises :class:`FormatError`.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import MaskDecompError
from .motion import FlowField


class FormatError(MaskDecompError):
    pass


def read_signal(path) -> np.ndarray:
    values = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: not a number: {line!r}") from None
    if not values:
        raise FormatError(f"{path}: empty signal")
    arr = np.array(values)
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{path}: non-finite values")
    return arr


def write_signal(path, values, fmt="%.17g"):
    np.savetxt(path, np.asarray(values, dtype=float).ravel(), fmt=fmt)


def write_mask_csv(path, mask):
    np.savetxt(path, np.asarray(mask).ravel().astype(int), fmt="%d")


def _pgm_tokens(data, count):
    """First ``count`` header tokens of a PNM file and the offset after them."""
    tokens = []
    i = 0
    while len(tokens) < count:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise FormatError("truncated PGM header")
        tokens.append(data[i:j])
        i = j
    return tokens, i + 1


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit P5 (binary) or P2 (ASCII) graymap as a uint8 array."""
    data = Path(path).read_bytes()
    if data[:2] not in (b"P5", b"P2"):
        raise FormatError(f"{path}: not a PGM file")
    try:
        tokens, offset = _pgm_tokens(data, 4)
        width, height, maxval = (int(t) for t in tokens[1:])
    except (ValueError, IndexError):
        raise FormatError(f"{path}: malformed PGM header") from None
    if width < 1 or height < 1 or not 0 < maxval < 256:
        raise FormatError(f"{path}: unsupported PGM geometry or depth")
    if tokens[0] == b"P5":
        body = data[offset : offset + width * height]
        if len(body) != width * height:
            raise FormatError(f"{path}: truncated pixel data")
        img = np.frombuffer(body, dtype=np.uint8).reshape(height, width)
    else:
        vals = data[offset:].split()
        if len(vals) < width * height:
            raise FormatError(f"{path}: truncated pixel data")
        img = np.array([int(v) for v in vals[: width * height]], dtype=np.uint8).reshape(height, width)
    if np.any(img > maxval):
        raise FormatError(f"{path}: pixel value above maxval")
    return img.copy()


def write_pgm(path, img):
    img = np.asarray(img)
    if img.ndim != 2:
        raise FormatError("PGM needs a 2D array")
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def write_mask_pgm(path, mask):
    write_pgm(path, (np.asarray(mask) > 0).astype(np.uint8) * 255)


def luma_bt601(rgb) -> np.ndarray:
    """Integer BT.601 luma: (299 R + 587 G + 114 B + 500) // 1000."""
    rgb = np.asarray(rgb, dtype=np.int64)
    y = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return y.astype(np.uint8)


def read_image(path) -> np.ndarray:
    """Grayscale image as uint8.  PGM is parsed directly; PNG goes through Pillow."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(8)
    if magic[:2] in (b"P5", b"P2"):
        return read_pgm(path)
    if magic != b"\x89PNG\r\n\x1a\n":
        raise FormatError(f"{path}: expected a PGM or PNG image")
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("L", "1"):
            return np.asarray(im.convert("L"), dtype=np.uint8).copy()
        if im.mode in ("I;16", "I", "F"):
            raise FormatError(f"{path}: only 8-bit images are supported")
        return luma_bt601(np.asarray(im.convert("RGB")))


def read_mask(path) -> np.ndarray:
    """A 0/1 float mask from PGM (nonzero = 1) or CSV (one 0/1 per line)."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic in (b"P5", b"P2"):
        return (read_pgm(path) > 0).astype(float)
    vals = read_signal(path)
    if not np.all((vals == 0) | (vals == 1)):
        raise FormatError(f"{path}: mask CSV must contain only 0 and 1")
    return vals


def read_flow(path) -> FlowField:
    """Flow CSV with header ``x,y,u,v``; rows must cover the grid in row-major order."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x", "y", "u", "v"]:
            raise FormatError(f"{path}: header must be x,y,u,v")
        rows = []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 fields")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: not a number") from None
    if not rows:
        raise FormatError(f"{path}: no flow rows")
    arr = np.array(rows)
    xs, ys = arr[:, 0], arr[:, 1]
    width = int(xs.max()) + 1
    height = int(ys.max()) + 1
    if arr.shape[0] != width * height:
        raise FormatError(f"{path}: {arr.shape[0]} rows do not fill a {width}x{height} grid")
    yy, xx = np.mgrid[0:height, 0:width]
    if not (np.array_equal(xs, xx.ravel()) and np.array_equal(ys, yy.ravel())):
        raise FormatError(f"{path}: pixels are not in row-major order")
    if not np.all(np.isfinite(arr[:, 2:])):
        raise FormatError(f"{path}: non-finite flow values")
    try:
        return FlowField(arr[:, 2].reshape(height, width), arr[:, 3].reshape(height, width))
    except MaskDecompError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_flow(path, flow: FlowField):
    yy, xx = np.mgrid[0 : flow.height, 0 : flow.width]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "u", "v"])
        for x, y, u, v in zip(xx.ravel(), yy.ravel(), flow.u.ravel(), flow.v.ravel()):
            w.writerow([int(x), int(y), repr(float(u)), repr(float(v))])


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
