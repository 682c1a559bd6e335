"""Polygon rasterization and pixel-set overlap."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegeneratePolygonError, ShapeError
from .polygon import Polygon, as_vertex_array, is_collinear

__all__ = [
    "DEFAULT_RESOLUTION",
    "PixelMask",
    "rasterize",
    "mask_iou",
    "intersection_union",
]

DEFAULT_RESOLUTION = (640, 480)


@dataclass(frozen=True, eq=False)
class PixelMask:
    """Binary raster, row-major, ``bits[r, c]`` for row ``r`` and column ``c``."""

    width: int
    height: int
    bits: np.ndarray

    def __init__(self, width: int, height: int, bits=None):
        width, height = int(width), int(height)
        if width < 1 or height < 1:
            raise ShapeError(f"mask dimensions must be positive, got {width}x{height}")
        if bits is None:
            arr = np.zeros((height, width), dtype=np.uint8)
        else:
            arr = np.asarray(bits)
            if arr.ndim == 2 and arr.shape != (height, width):
                raise ShapeError(f"bits of shape {arr.shape} for a {width}x{height} mask")
            if arr.size != width * height:
                raise ShapeError(f"{arr.size} bits for a {width}x{height} mask")
            arr = (arr.reshape(height, width) != 0).astype(np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "height", height)
        object.__setattr__(self, "bits", arr)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PixelMask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.bits, other.bits)
        )

    def __hash__(self) -> int:
        return hash((self.width, self.height, self.bits.tobytes()))

    def count(self) -> int:
        return int(self.bits.sum(dtype=np.int64))

    def to_rle(self) -> list[int]:
        """Run lengths over the row-major bits, alternating zeros and ones,
        starting with a (possibly empty) run of zeros."""
        flat = self.bits.ravel()
        change = np.flatnonzero(np.diff(flat)) + 1
        bounds = np.concatenate([[0], change, [flat.size]])
        runs = np.diff(bounds).tolist()
        if flat.size and flat[0]:
            runs.insert(0, 0)
        return runs

    @classmethod
    def from_rle(cls, width: int, height: int, runs) -> "PixelMask":
        runs = [int(r) for r in runs]
        if any(r < 0 for r in runs):
            raise ValueError("run lengths must be non-negative")
        if sum(runs) != width * height:
            raise ShapeError(f"runs cover {sum(runs)} pixels, mask has {width * height}")
        values = np.arange(len(runs)) % 2
        flat = np.repeat(values.astype(np.uint8), runs)
        return cls(width, height, flat)

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "rle": self.to_rle()}

    @classmethod
    def from_dict(cls, obj: dict) -> "PixelMask":
        return cls.from_rle(obj["width"], obj["height"], obj["rle"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PixelMask":
        return cls.from_dict(json.loads(text))


def rasterize(p: Polygon, width: int, height: int) -> PixelMask:
    """Scanline even-odd fill sampled at pixel centers.

    Pixel ``(r, c)`` is set iff ``((c + 0.5) / width, (r + 0.5) / height)``
    is inside ``p``.  Rows use a half-open ``[ymin, ymax)`` test per edge and
    spans are left-closed, so a center exactly on a left edge is inside and
    one on a right edge is outside.  A polygon whose vertices all lie on one
    line yields an empty mask, even where that line runs through centers.
    """
    if width < 1 or height < 1:
        raise ShapeError(f"raster dimensions must be positive, got {width}x{height}")
    pts = as_vertex_array(p)
    if len(pts) < 3:
        raise DegeneratePolygonError(f"cannot rasterize a polygon with {len(pts)} vertices")
    if is_collinear(pts):
        return PixelMask(width, height)
    xs = pts[:, 0] * width
    ys = pts[:, 1] * height
    bits = kernels.scanline_fill(xs, ys, int(width), int(height))
    return PixelMask(width, height, bits)


def intersection_union(a: PixelMask, b: PixelMask) -> tuple[int, int]:
    if (a.width, a.height) != (b.width, b.height):
        raise ShapeError(f"mask sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}")
    inter = int(np.count_nonzero(a.bits & b.bits))
    union = int(np.count_nonzero(a.bits | b.bits))
    return inter, union


def mask_iou(a: PixelMask, b: PixelMask) -> float:
    """Intersection over union of the set pixels; 0 when both are empty."""
    inter, union = intersection_union(a, b)
    return inter / union if union else 0.0
