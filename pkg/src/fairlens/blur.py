"""Gaussian-blur anonymization of face regions.

The blur is a separable convolution applied to the expanded, clipped face
box with clamp-to-region-edge boundaries, so nothing outside the region
leaks in and every pixel outside it stays bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import BadRadius, BadSigma, EmptyIntersection
from .ingest import FORMAT_VERSION, _dump
from .types import BoundingBox
from .raster import RasterImage


@dataclass(frozen=True)
class BlurConfig:
    sigma: Optional[float] = None   # None: max(2, 0.1 * box diagonal)
    margin: float = 0.1

    def __post_init__(self):
        if self.sigma is not None and self.sigma <= 0:
            raise BadSigma(self.sigma)
        if self.margin < 0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")

    def sigma_for(self, box: BoundingBox) -> float:
        if self.sigma is not None:
            return self.sigma
        return max(2.0, 0.1 * math.hypot(box.width, box.height))


def kernel_radius(sigma: float) -> int:
    # ceil(3*sigma) keeps >99.7% of the kernel mass
    return max(1, math.ceil(3.0 * sigma))


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """1-D Gaussian tap weights of length 2*radius+1, normalized to sum 1."""
    if sigma <= 0:
        raise BadSigma(sigma)
    if radius < 1:
        raise BadRadius(radius)
    half = np.exp(-np.arange(radius + 1, dtype=np.float64) ** 2 / (2.0 * sigma * sigma))
    k = np.concatenate([half[:0:-1], half])  # mirror: exact symmetry
    return k / k.sum()


def expand_box(box: BoundingBox, margin: float, width: float, height: float) -> BoundingBox:
    """Grow each side by margin * side length, then clip to the image."""
    dx = margin * box.width
    dy = margin * box.height
    return BoundingBox(
        max(0.0, box.x_min - dx),
        max(0.0, box.y_min - dy),
        min(float(width), box.x_max + dx),
        min(float(height), box.y_max + dy),
    )


def _pixel_bounds(box: BoundingBox, width: int, height: int) -> tuple[int, int, int, int]:
    """Integer pixel window rounded outward and clipped to the image."""
    x0 = max(0, math.floor(box.x_min))
    y0 = max(0, math.floor(box.y_min))
    x1 = min(width, math.ceil(box.x_max))
    y1 = min(height, math.ceil(box.y_max))
    return x0, y0, x1, y1


def blur_region(img: RasterImage, box: BoundingBox, config: BlurConfig) -> RasterImage:
    """Blur one face box; returns a new image, alpha channel untouched."""
    intersect_w = min(box.x_max, img.width) - max(box.x_min, 0.0)
    intersect_h = min(box.y_max, img.height) - max(box.y_min, 0.0)
    if intersect_w <= 0 or intersect_h <= 0:
        raise EmptyIntersection()
    expanded = expand_box(box, config.margin, img.width, img.height)
    x0, y0, x1, y1 = _pixel_bounds(expanded, img.width, img.height)
    if x1 <= x0 or y1 <= y0:
        raise EmptyIntersection()
    sigma = config.sigma_for(box)
    kernel = gaussian_kernel(sigma, kernel_radius(sigma))

    out = np.array(img.data, copy=True)
    color_channels = 3  # alpha, when present, is left untouched
    region = out[y0:y1, x0:x1, :color_channels].astype(np.float64)
    blurred = _kernels.convolve_region(region, kernel)
    # round half away from zero exactly once, at the end
    out[y0:y1, x0:x1, :color_channels] = np.clip(
        np.floor(blurred + 0.5), 0.0, 255.0).astype(np.uint8)
    return RasterImage(out)


@dataclass(frozen=True)
class AuditEntry:
    original: BoundingBox
    expanded: BoundingBox
    sigma: float


@dataclass(frozen=True)
class AnonymizationAudit:
    image_id: str
    entries: tuple[AuditEntry, ...]
    timestamp: str

    def to_lines(self) -> str:
        lines = [_dump({"format": FORMAT_VERSION, "kind": "audit"})]
        lines.append(_dump({"record": "meta", "image_id": self.image_id,
                            "timestamp": self.timestamp}))
        for e in self.entries:
            lines.append(_dump({"record": "region", "original": e.original.as_dict(),
                                "expanded": e.expanded.as_dict(), "sigma": e.sigma}))
        return "\n".join(lines) + "\n"


def anonymize(
    img: RasterImage,
    boxes: Sequence[BoundingBox],
    config: BlurConfig = BlurConfig(),
    image_id: str = "",
    timestamp: Optional[str] = None,
) -> tuple[RasterImage, AnonymizationAudit]:
    """Blur every box in input order; overlapping boxes compose in order."""
    if timestamp is None:
        timestamp = datetime.now(timezone.utc).isoformat()
    out = img
    entries = []
    for box in boxes:
        out = blur_region(out, box, config)
        expanded = expand_box(box, config.margin, img.width, img.height)
        entries.append(AuditEntry(box, expanded, config.sigma_for(box)))
    return out, AnonymizationAudit(image_id, tuple(entries), timestamp)
