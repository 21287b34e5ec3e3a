"""Frame sequence input/output.

Supported containers: numbered image sequences (8/16-bit grayscale or RGB,
PNG or PGM/PPM) and Y4M streams (8-bit, mono, 4:2:0 or 4:4:4).  Frames are
returned as luma in [0, 1] plus, for colour input, two chroma planes
(Cb, Cr) in [0, 1] centred on 0.5.
"""
from __future__ import annotations

import glob
import os
import re
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import InvalidInputError

IMAGE_EXTS = (".png", ".pgm", ".ppm", ".pnm", ".tif", ".tiff")

# BT.601 full-range YCbCr
_RGB2YCC = np.array([[0.299, 0.587, 0.114],
                     [-0.168736, -0.331264, 0.5],
                     [0.5, -0.418688, -0.081312]])
_YCC2RGB = np.linalg.inv(_RGB2YCC)


def rgb_to_ycc(rgb):
    """(H, W, 3) RGB in [0, 1] -> luma (H, W), chroma (2, H, W)."""
    ycc = np.asarray(rgb, dtype=np.float64) @ _RGB2YCC.T
    return ycc[..., 0], np.moveaxis(ycc[..., 1:], -1, 0) + 0.5


def ycc_to_rgb(luma, chroma):
    ycc = np.stack([luma, chroma[0] - 0.5, chroma[1] - 0.5], axis=-1)
    return np.clip(ycc @ _YCC2RGB.T, 0.0, 1.0)


@dataclass
class Frame:
    luma: np.ndarray
    chroma: np.ndarray | None = None


@dataclass
class SequenceSource:
    """Lazily readable, ordered frame sequence."""

    kind: str  # "images" or "y4m"
    paths: list
    shape: tuple
    color: bool
    bit_depth: int = 8
    ext: str = ".png"
    y4m: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.paths) if self.kind == "images" else self.y4m["count"]

    @property
    def count(self):
        return len(self)

    def __iter__(self):
        for i in range(len(self)):
            yield self.read(i)

    def read(self, index) -> Frame:
        if not 0 <= index < len(self):
            raise IndexError(index)
        if self.kind == "images":
            return _read_image(self.paths[index], index, self.shape, self.color)
        return _read_y4m_frame(self, index)

    def luma(self):
        for f in self:
            yield f.luma

    def chroma(self):
        for f in self:
            yield f.chroma


# ---------------------------------------------------------------------------
# numbered image sequences
# ---------------------------------------------------------------------------

def _frame_number(path):
    nums = re.findall(r"\d+", os.path.basename(path))
    return int(nums[-1]) if nums else -1


def _expand(pattern):
    if os.path.isdir(pattern):
        paths = [p for p in glob.glob(os.path.join(pattern, "*"))
                 if p.lower().endswith(IMAGE_EXTS)]
    elif re.search(r"%0?\d*d", pattern):
        paths = glob.glob(re.sub(r"%0?\d*d", "*", pattern))
    elif any(c in pattern for c in "*?["):
        paths = glob.glob(pattern)
    else:
        paths = [pattern] if os.path.isfile(pattern) else []
    return sorted(paths, key=lambda p: (_frame_number(p), p))


def _depth(mode):
    if mode in ("L", "RGB", "P", "1"):
        return 8
    if mode.startswith("I"):
        return 16
    raise InvalidInputError(f"unsupported image mode {mode}")


def _read_image(path, index, shape, color) -> Frame:
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            arr = np.asarray(im)
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"frame {index} ({path}) cannot be read: {exc}") from exc
    if arr.shape[:2] != shape:
        raise InvalidInputError(f"frame {index} ({path}) is {arr.shape[:2]}, expected {shape}")
    scale = 255.0 if _depth(mode) == 8 else 65535.0
    if mode == "P":
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"))
    if arr.ndim == 3:
        rgb = arr[..., :3].astype(np.float64) / scale
        if not color:
            raise InvalidInputError(f"frame {index} ({path}) is colour in a grayscale sequence")
        luma, chroma = rgb_to_ycc(rgb)
        return Frame(luma, chroma)
    if color:
        raise InvalidInputError(f"frame {index} ({path}) is grayscale in a colour sequence")
    return Frame(arr.astype(np.float64) / scale)


def _image_source(pattern):
    paths = _expand(pattern)
    if not paths:
        raise InvalidInputError(f"no frames match {pattern!r}")
    info = []
    for i, p in enumerate(paths):
        try:
            with Image.open(p) as im:
                info.append((im.size[::-1], im.mode))
        except (OSError, ValueError) as exc:
            raise InvalidInputError(f"frame {i} ({p}) cannot be read: {exc}") from exc
    shape, mode = info[0]
    for i, (s, m) in enumerate(info):
        if s != shape:
            raise InvalidInputError(f"frame {i} ({paths[i]}) is {s}, expected {shape}")
    color = mode in ("RGB", "RGBA", "P")
    ext = os.path.splitext(paths[0])[1].lower()
    return SequenceSource("images", paths, tuple(shape), color, _depth(mode), ext)


# ---------------------------------------------------------------------------
# Y4M
# ---------------------------------------------------------------------------

def _y4m_layout(chroma, h, w):
    if chroma.startswith("mono"):
        return 0, (0, 0)
    if chroma.startswith("420"):
        return 2, ((h + 1) // 2, (w + 1) // 2)
    if chroma.startswith("444") and not chroma[3:]:
        return 2, (h, w)
    raise InvalidInputError(f"unsupported Y4M chroma format C{chroma}")


def _y4m_source(path):
    try:
        with open(path, "rb") as fh:
            header = fh.readline()
            start = fh.tell()
            fh.seek(0, os.SEEK_END)
            size = fh.tell()
    except OSError as exc:
        raise InvalidInputError(f"cannot open {path}: {exc}") from exc
    if not header.startswith(b"YUV4MPEG2"):
        raise InvalidInputError(f"{path} is not a Y4M stream")
    params = {}
    for tok in header.decode("ascii", "replace").split()[1:]:
        params[tok[0]] = tok[1:]
    try:
        w, h = int(params["W"]), int(params["H"])
    except (KeyError, ValueError):
        raise InvalidInputError(f"{path}: Y4M header lacks W/H") from None
    chroma = params.get("C", "420jpeg")
    planes, cshape = _y4m_layout(chroma, h, w)
    frame_bytes = h * w + planes * cshape[0] * cshape[1]
    # every frame is "FRAME" [params] "\n" + data; assume no frame parameters
    count = (size - start) // (frame_bytes + 6)
    if count < 1:
        raise InvalidInputError(f"{path}: Y4M stream has no frames")
    meta = dict(header=header, start=start, frame_bytes=frame_bytes, count=count,
                chroma=chroma, cshape=cshape, planes=planes)
    return SequenceSource("y4m", [path], (h, w), planes > 0, 8, ".y4m", meta)


def _read_y4m_frame(src, index) -> Frame:
    meta = src.y4m
    h, w = src.shape
    with open(src.paths[0], "rb") as fh:
        fh.seek(meta["start"] + index * (meta["frame_bytes"] + 6))
        tag = fh.read(6)
        data = fh.read(meta["frame_bytes"])
    if not tag.startswith(b"FRAME") or len(data) != meta["frame_bytes"]:
        raise InvalidInputError(f"frame {index} of {src.paths[0]} is truncated or corrupt")
    buf = np.frombuffer(data, dtype=np.uint8)
    luma = buf[:h * w].reshape(h, w) / 255.0
    if not meta["planes"]:
        return Frame(luma)
    ch, cw = meta["cshape"]
    c = buf[h * w:].reshape(2, ch, cw) / 255.0
    if (ch, cw) != (h, w):
        c = np.repeat(np.repeat(c, 2, axis=1), 2, axis=2)[:, :h, :w]
    return Frame(luma, c)


def load_sequence(path) -> SequenceSource:
    """Open a numbered image sequence (directory, glob or %0Nd pattern) or a Y4M file."""
    path = os.fspath(path)
    if path.lower().endswith(".y4m"):
        if not os.path.isfile(path):
            raise InvalidInputError(f"no such file: {path}")
        return _y4m_source(path)
    return _image_source(path)


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------

def _quantise(x, depth):
    top = 255 if depth == 8 else 65535
    q = np.rint(np.clip(x, 0.0, 1.0) * top)
    return q.astype(np.uint8 if depth == 8 else np.uint16)


def write_image(path, luma, chroma=None, bit_depth=8):
    if chroma is None:
        Image.fromarray(_quantise(luma, bit_depth)).save(path)
        return
    if bit_depth != 8:
        raise InvalidInputError("colour output is written at 8 bits")
    Image.fromarray(_quantise(ycc_to_rgb(luma, chroma), 8), "RGB").save(path)


class SequenceWriter:
    """Writes frames in the same container and depth as a source (or as asked)."""

    def __init__(self, out, like: SequenceSource | None = None, kind=None, color=False,
                 bit_depth=8, ext=".png", name="frame_%05d", y4m_name="frames.y4m"):
        self.kind = kind or (like.kind if like else "images")
        self.color = like.color if like else color
        self.bit_depth = like.bit_depth if like else bit_depth
        self.ext = like.ext if like else ext
        if self.ext == ".pgm" and self.color:
            self.ext = ".ppm"
        self.name = name
        self.index = 0
        self._fh = None
        self.like = like
        if self.kind == "y4m":
            out = out if out.lower().endswith(".y4m") else os.path.join(out, y4m_name)
            os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
            self.path = out
        else:
            os.makedirs(out, exist_ok=True)
            self.path = out

    def _y4m_header(self, shape):
        if self.like is not None and self.like.kind == "y4m":
            return self.like.y4m["header"]
        h, w = shape
        c = "C444" if self.color else "Cmono"
        return f"YUV4MPEG2 W{w} H{h} F25:1 Ip A1:1 {c}\n".encode("ascii")

    def write(self, luma, chroma=None):
        if self.kind == "y4m":
            if self._fh is None:
                self._fh = open(self.path, "wb")
                self._fh.write(self._y4m_header(luma.shape))
            self._fh.write(b"FRAME\n")
            self._fh.write(_quantise(luma, 8).tobytes())
            if chroma is not None:
                cshape = self.like.y4m["cshape"] if self.like is not None else luma.shape
                for c in chroma:
                    if cshape != c.shape:
                        c = _pool2(c)[:cshape[0], :cshape[1]]
                    self._fh.write(_quantise(c, 8).tobytes())
        else:
            path = os.path.join(self.path, (self.name % self.index) + self.ext)
            write_image(path, luma, chroma, self.bit_depth)
        self.index += 1

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _pool2(c):
    h, w = c.shape
    c = np.pad(c, ((0, h % 2), (0, w % 2)), mode="edge")
    return c.reshape(c.shape[0] // 2, 2, c.shape[1] // 2, 2).mean(axis=(1, 3))


def write_sequence(out, frames, like=None, **kwargs):
    """Write an iterable of luma frames or (luma, chroma) pairs; returns the output path."""
    with SequenceWriter(out, like, **kwargs) as w:
        for f in frames:
            if isinstance(f, tuple):
                w.write(*f)
            else:
                w.write(f)
    return w.path
