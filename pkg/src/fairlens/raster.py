"""Raster image container and PNG / plain-PPM codecs.

PNG handles the CLI and service surface (8-bit RGB/RGBA via Pillow); P3 PPM
is a text format used for bit-exact test goldens.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IoFailure


@dataclass(frozen=True)
class RasterImage:
    """8-bit image, row-major (height, width, channels) with 3 or 4 channels."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.dtype != np.uint8 or self.data.ndim != 3:
            raise ValueError("image data must be uint8 with shape (h, w, c)")
        if self.data.shape[2] not in (3, 4):
            raise ValueError("channels must be 3 (RGB) or 4 (RGBA)")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError("width and height must be >= 1")
        self.data.flags.writeable = False

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def from_png_bytes(blob: bytes) -> RasterImage:
    with Image.open(io.BytesIO(blob)) as im:
        if im.mode not in ("RGB", "RGBA"):
            im = im.convert("RGBA" if "A" in im.getbands() else "RGB")
        return RasterImage(np.asarray(im, dtype=np.uint8).copy())


def to_png_bytes(img: RasterImage) -> bytes:
    mode = "RGB" if img.channels == 3 else "RGBA"
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img.data), mode).save(buf, format="PNG")
    return buf.getvalue()


def parse_ppm(text: str) -> RasterImage:
    """Parse a plain (P3) PPM; comments allowed, max value must be 255."""
    tokens: list[str] = []
    for line in text.split("\n"):
        hash_pos = line.find("#")
        if hash_pos != -1:
            line = line[:hash_pos]
        tokens.extend(line.split())
    if not tokens or tokens[0] != "P3":
        raise ValueError("not a plain P3 PPM")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"unsupported max value {maxval}")
    values = [int(t) for t in tokens[4:]]
    if len(values) != width * height * 3:
        raise ValueError("pixel count mismatch")
    data = np.array(values, dtype=np.uint8).reshape(height, width, 3)
    return RasterImage(data)


def dump_ppm(img: RasterImage) -> str:
    if img.channels != 3:
        raise ValueError("PPM supports RGB only")
    lines = ["P3", f"{img.width} {img.height}", "255"]
    for row in img.data:
        lines.append(" ".join(str(int(v)) for v in row.reshape(-1)))
    return "\n".join(lines) + "\n"


def load_image(path) -> RasterImage:
    p = Path(path)
    try:
        if p.suffix.lower() == ".ppm":
            return parse_ppm(p.read_text(encoding="utf-8"))
        return from_png_bytes(p.read_bytes())
    except OSError as exc:
        raise IoFailure(str(path), str(exc)) from exc
    except ValueError as exc:
        raise IoFailure(str(path), str(exc)) from exc


def save_image(img: RasterImage, path) -> None:
    p = Path(path)
    try:
        if p.suffix.lower() == ".ppm":
            p.write_text(dump_ppm(img), encoding="utf-8")
        else:
            p.write_bytes(to_png_bytes(img))
    except OSError as exc:
        raise IoFailure(str(path), str(exc)) from exc
