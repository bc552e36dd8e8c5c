"""Frame ingestion and image file I/O.

Supported inputs: a directory of 8-bit binary PGM (P5) files consumed in
lexicographic order, or a YUV4MPEG2 (.y4m) stream of which only the luma
plane is used. 8-bit values map to [0, 1] by division by 255. Binary PPM
(P6) files are also accepted and converted with BT.601 luma weights.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import IO, Iterator

import numpy as np

from .imaging import Frame, rgb_to_luma


class FormatError(ValueError):
    """Raised for unparseable image or stream files."""


def _next_token(f: IO[bytes], path) -> bytes:
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            if tok:
                return tok
            raise FormatError(f"{path}: unexpected end of header")
        if c == b"#":
            while c and c != b"\n":
                c = f.read(1)
            if tok:
                return tok
            continue
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def _read_pnm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = _next_token(f, path)
        if magic not in (b"P5", b"P6"):
            raise FormatError(f"{path}: not a binary PGM/PPM file "
                              f"(magic {magic!r})")
        try:
            width = int(_next_token(f, path))
            height = int(_next_token(f, path))
            maxval = int(_next_token(f, path))
        except ValueError:
            raise FormatError(f"{path}: malformed header") from None
        if width <= 0 or height <= 0:
            raise FormatError(f"{path}: invalid dimensions {width}x{height}")
        if not 0 < maxval <= 255:
            raise FormatError(f"{path}: only 8-bit data supported "
                              f"(maxval {maxval})")
        channels = 1 if magic == b"P5" else 3
        count = width * height * channels
        raw = f.read(count)
        if len(raw) != count:
            raise FormatError(f"{path}: truncated pixel data "
                              f"({len(raw)} of {count} bytes)")
    pixels = np.frombuffer(raw, dtype=np.uint8)
    if channels == 1:
        return pixels.reshape(height, width)
    return pixels.reshape(height, width, 3)


def read_pgm(path) -> np.ndarray:
    """Read a P5 PGM (or P6 PPM, reduced to luma) as a uint8 array."""
    img = _read_pnm(path)
    if img.ndim == 3:
        img = np.clip(np.rint(rgb_to_luma(img.astype(np.float64))),
                      0, 255).astype(np.uint8)
    return img


def write_pgm(path, img: np.ndarray) -> None:
    """Write a uint8 or [0, 1] float image as binary PGM."""
    img = np.asarray(img)
    if img.dtype != np.uint8:
        img = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(np.ascontiguousarray(img).tobytes())


def read_frame(path, index: int = 0) -> Frame:
    return Frame.from_gray8(read_pgm(path), index=index)


def iter_pgm_dir(path) -> Iterator[Frame]:
    """Frames from *.pgm / *.ppm files in a directory, lexicographic order."""
    directory = Path(path)
    files = sorted(p for p in directory.iterdir()
                   if p.suffix.lower() in (".pgm", ".ppm"))
    if not files:
        raise FormatError(f"{directory}: no .pgm/.ppm files found")
    for index, p in enumerate(files):
        yield read_frame(p, index=index)


_Y4M_CHROMA = {
    # luma-plane size multiplier for the two chroma planes combined
    "420": 0.5, "420jpeg": 0.5, "420paldv": 0.5, "420mpeg2": 0.5,
    "422": 1.0, "444": 2.0, "mono": 0.0,
}


def iter_y4m(path) -> Iterator[Frame]:
    """Luma-plane frames from a YUV4MPEG2 stream."""
    with open(path, "rb") as f:
        header = f.readline()
        if not header.startswith(b"YUV4MPEG2"):
            raise FormatError(f"{path}: missing YUV4MPEG2 signature")
        width = height = None
        chroma = "420"
        for field in header.split()[1:]:
            tag, value = field[:1], field[1:]
            if tag == b"W":
                width = int(value)
            elif tag == b"H":
                height = int(value)
            elif tag == b"C":
                chroma = value.decode("ascii")
        if not width or not height:
            raise FormatError(f"{path}: stream header lacks W/H")
        if chroma not in _Y4M_CHROMA:
            raise FormatError(f"{path}: unsupported colorspace C{chroma}")
        luma_bytes = width * height
        if chroma.startswith("420"):
            chroma_bytes = 2 * ((width + 1) // 2) * ((height + 1) // 2)
        elif chroma == "422":
            chroma_bytes = 2 * ((width + 1) // 2) * height
        elif chroma == "444":
            chroma_bytes = 2 * width * height
        else:
            chroma_bytes = 0
        index = 0
        while True:
            marker = f.readline()
            if not marker:
                return
            if not marker.startswith(b"FRAME"):
                raise FormatError(f"{path}: bad frame marker at frame {index}")
            luma = f.read(luma_bytes)
            if len(luma) != luma_bytes:
                raise FormatError(f"{path}: truncated frame {index}")
            skipped = f.read(chroma_bytes)
            if len(skipped) != chroma_bytes:
                raise FormatError(f"{path}: truncated chroma in frame {index}")
            data = np.frombuffer(luma, dtype=np.uint8).reshape(height, width)
            yield Frame.from_gray8(data, index=index)
            index += 1


def load_frames(path) -> Iterator[Frame]:
    """Dispatch on the input path: directory of PGMs or a .y4m file."""
    p = Path(path)
    if p.is_dir():
        return iter_pgm_dir(p)
    if p.suffix.lower() == ".y4m":
        return iter_y4m(p)
    if re.search(r"\.p[gp]m$", p.name, re.IGNORECASE):
        return iter(f for f in [read_frame(p)])
    raise FormatError(f"{path}: expected a directory of PGM files or a "
                      f".y4m stream")
