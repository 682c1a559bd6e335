"""Polygon values and vertex-order utilities.

Coordinates are normalized image coordinates: ``x`` grows rightward, ``y``
grows downward, and the visible frame is ``[0, 1]^2``.  Conversion to pixel
units happens only in :mod:`polyot.raster`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import DegeneratePolygonError, InvalidPermutationError

__all__ = [
    "Polygon",
    "VertexPermutation",
    "as_vertex_array",
    "signed_area",
    "perimeter",
    "resample",
    "rotate_vertices",
    "apply_permutation",
    "is_collinear",
]


def _collapse_duplicates(pts: np.ndarray) -> np.ndarray:
    if len(pts) < 2:
        return pts
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
    pts = pts[keep]
    # closing vertex repeated at the end of the ring
    while len(pts) > 1 and np.array_equal(pts[-1], pts[0]):
        pts = pts[:-1]
    return pts


@dataclass(frozen=True, eq=False)
class Polygon:
    """Immutable ordered vertex list.

    Consecutive duplicate vertices (including a repeated closing vertex) are
    collapsed on construction.  Derived polygons from the vertex-order
    operations and ``resample`` keep their exact length instead, so a
    permutation can always be undone.  Polygons with fewer than three vertices are
    allowed because the matching losses act on plain vertex sets; operations
    that need an interior check the count themselves.
    """

    vertices: np.ndarray

    def __init__(self, vertices: Union[Iterable[Sequence[float]], np.ndarray]):
        pts = np.array(vertices, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 2)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"expected a list of (x, y) pairs, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("polygon coordinates must be finite")
        pts = _collapse_duplicates(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "vertices", pts)

    @classmethod
    def _exact(cls, pts: np.ndarray) -> "Polygon":
        """Wrap an already validated array without collapsing duplicates."""
        pts = np.array(pts, dtype=np.float64)
        pts.setflags(write=False)
        obj = object.__new__(cls)
        object.__setattr__(obj, "vertices", pts)
        return obj

    def __len__(self) -> int:
        return len(self.vertices)

    def __iter__(self):
        return (tuple(v) for v in self.vertices.tolist())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Polygon):
            return NotImplemented
        return np.array_equal(self.vertices, other.vertices)

    def __hash__(self) -> int:
        return hash(self.vertices.tobytes())

    def __repr__(self) -> str:
        return f"Polygon({self.vertices.tolist()!r})"

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def reversed(self) -> "Polygon":
        return Polygon._exact(self.vertices[::-1])

    def translated(self, dx: float, dy: float) -> "Polygon":
        return Polygon(self.vertices + np.array([dx, dy]))

    def to_list(self) -> list[list[float]]:
        return self.vertices.tolist()

    def to_json(self) -> str:
        return json.dumps(self.to_list())

    @classmethod
    def from_json(cls, text: str) -> "Polygon":
        return cls(json.loads(text))


@dataclass(frozen=True)
class VertexPermutation:
    """Bijection on ``0..n-1``; ``apply_permutation`` puts old vertex
    ``mapping[i]`` at position ``i``."""

    mapping: tuple[int, ...]

    def __init__(self, mapping: Iterable[int]):
        m = tuple(int(i) for i in mapping)
        if sorted(m) != list(range(len(m))):
            raise InvalidPermutationError(f"{list(m)} is not a permutation of 0..{len(m) - 1}")
        object.__setattr__(self, "mapping", m)

    def __len__(self) -> int:
        return len(self.mapping)

    def inverse(self) -> "VertexPermutation":
        inv = [0] * len(self.mapping)
        for i, j in enumerate(self.mapping):
            inv[j] = i
        return VertexPermutation(inv)

    @classmethod
    def identity(cls, n: int) -> "VertexPermutation":
        return cls(range(n))


def as_vertex_array(p: Union[Polygon, np.ndarray, Sequence[Sequence[float]]]) -> np.ndarray:
    """Return an ``(n, 2)`` float array view of ``p`` without collapsing duplicates."""
    if isinstance(p, Polygon):
        return p.vertices
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) vertex array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vertex coordinates must be finite")
    return arr


def is_collinear(p) -> bool:
    """Exact test in rationals: every vertex on the line through the first
    vertex and the one farthest from it."""
    pts = as_vertex_array(p)
    if len(pts) == 0:
        return True
    d = np.abs(pts - pts[0]).sum(axis=1)
    far = int(np.argmax(d))
    if d[far] == 0:
        return True
    x0, y0 = (Fraction(v) for v in pts[0])
    dx, dy = Fraction(pts[far][0]) - x0, Fraction(pts[far][1]) - y0
    return all(dx * (Fraction(y) - y0) == dy * (Fraction(x) - x0) for x, y in pts.tolist())


def _require_ring(p: Polygon, what: str) -> np.ndarray:
    pts = as_vertex_array(p)
    if len(pts) < 3:
        raise DegeneratePolygonError(f"{what} needs at least 3 distinct vertices, got {len(pts)}")
    return pts


def signed_area(p: Polygon) -> float:
    """Shoelace area ``0.5 * sum(x_i * y_{i+1} - x_{i+1} * y_i)``.

    Positive for counter-clockwise traversal in a y-up frame.  Because image
    coordinates point y downward, a positive value here means the vertices run
    clockwise as drawn on screen.
    """
    pts = _require_ring(p, "signed_area")
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * math.fsum(x * yn - xn * y)


def perimeter(p: Polygon) -> float:
    pts = as_vertex_array(p)
    if len(pts) < 2:
        return 0.0
    seg = np.roll(pts, -1, axis=0) - pts
    return math.fsum(np.hypot(seg[:, 0], seg[:, 1]))


def resample(p: Polygon, n: int) -> Polygon:
    """Place ``n`` points at equal arc-length spacing around the closed
    boundary, starting at the first vertex."""
    if n < 3:
        raise ValueError(f"resample needs n >= 3, got {n}")
    pts = as_vertex_array(p)
    if len(pts) < 2:
        raise DegeneratePolygonError("zero-perimeter polygon cannot be resampled")
    nxt = np.roll(pts, -1, axis=0)
    seg_len = np.hypot(*(nxt - pts).T)
    total = float(np.sum(seg_len))
    if total == 0.0:
        raise DegeneratePolygonError("zero-perimeter polygon cannot be resampled")
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    targets = np.arange(n) * (total / n)
    idx = np.searchsorted(cum, targets, side="right") - 1
    idx = np.clip(idx, 0, len(pts) - 1)
    # zero-length segments never occur after duplicate collapsing, but arrays
    # passed straight in may still carry them
    span = np.where(seg_len[idx] > 0, seg_len[idx], 1.0)
    t = np.clip((targets - cum[idx]) / span, 0.0, 1.0)
    out = pts[idx] + t[:, None] * (nxt[idx] - pts[idx])
    return Polygon._exact(out)


def rotate_vertices(p: Polygon, k: int) -> Polygon:
    """Cyclically shift the vertex list so vertex ``k`` comes first."""
    pts = as_vertex_array(p)
    if len(pts) == 0:
        return Polygon._exact(pts)
    return Polygon._exact(np.roll(pts, -k, axis=0))


def apply_permutation(p: Polygon, sigma: Union[VertexPermutation, Sequence[int]]) -> Polygon:
    if not isinstance(sigma, VertexPermutation):
        sigma = VertexPermutation(sigma)
    pts = as_vertex_array(p)
    if len(sigma) != len(pts):
        raise InvalidPermutationError(
            f"permutation of length {len(sigma)} applied to {len(pts)} vertices"
        )
    return Polygon._exact(pts[list(sigma.mapping)])
