"""Fit a polygon's vertices to a reference by moment-based gradient descent.

This is the desk-scale stand-in for training a vertex predictor: the
"network output" is the vertex array itself, and the scheduled loss drives
it toward the reference.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ShapeError
from .pml import LossSchedule, DEFAULT_WARMUP_FRACTION, scheduled_loss
from .polygon import Polygon, as_vertex_array
from .raster import mask_iou, rasterize
from .transport import SinkhornConfig

__all__ = [
    "FitConfig",
    "FitStep",
    "FitTrace",
    "fit_polygon",
    "random_convex_polygon",
    "is_strictly_convex",
    "perturb",
    "make_perturbed_suite",
]


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings.  Defaults follow the reference training run:
    learning rate 5e-4, betas (0.9, 0.999), no weight decay.

    ``loss_schedule=None`` maps the 79/90 L1 warmup onto ``steps``.
    """

    steps: int = 500
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    loss_schedule: Optional[LossSchedule] = None
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    init_noise_sigma: float = 0.05
    iou_resolution: tuple[int, int] = (256, 256)

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {b}")
        if self.init_noise_sigma < 0:
            raise ValueError("init_noise_sigma must be >= 0")
        if self.loss_schedule is not None and self.loss_schedule.total_steps != self.steps:
            raise ValueError(
                f"loss_schedule covers {self.loss_schedule.total_steps} steps, fit runs {self.steps}"
            )

    @property
    def schedule(self) -> LossSchedule:
        if self.loss_schedule is not None:
            return self.loss_schedule
        return LossSchedule(DEFAULT_WARMUP_FRACTION, self.steps)

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_epsilon": self.adam_epsilon,
            "seed": self.seed,
            "loss_schedule": self.schedule.to_dict(),
            "sinkhorn": self.sinkhorn.to_dict(),
            "init_noise_sigma": self.init_noise_sigma,
            "iou_resolution": list(self.iou_resolution),
        }


@dataclass(frozen=True)
class FitStep:
    step: int
    phase: str
    loss: float
    grad_norm: float


@dataclass(frozen=True)
class FitTrace:
    records: tuple[FitStep, ...]
    final_polygon: Polygon
    final_iou: float
    resolution: tuple[int, int]

    @property
    def initial_loss(self) -> float:
        return self.records[0].loss

    @property
    def final_loss(self) -> float:
        return self.records[-1].loss

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps({"step": r.step, "phase": r.phase, "loss": r.loss, "grad_norm": r.grad_norm}) + "\n"
            for r in self.records
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "phase", "loss", "grad_norm"])
        for r in self.records:
            w.writerow([r.step, r.phase, repr(r.loss), repr(r.grad_norm)])
        return buf.getvalue()


def _polygon_iou(a: np.ndarray, ref: np.ndarray, resolution) -> float:
    w, h = resolution
    poly = Polygon(a)
    if len(poly) < 3:
        return 0.0
    return mask_iou(rasterize(poly, w, h), rasterize(Polygon(ref), w, h))


def fit_polygon(ref, init, cfg: Optional[FitConfig] = None) -> FitTrace:
    """Bias-corrected Adam on the vertex coordinates, clamped to the unit
    square after every update.  Each record holds the loss and gradient norm
    evaluated before that step's update."""
    cfg = cfg or FitConfig()
    r = np.array(as_vertex_array(ref))
    x = np.array(as_vertex_array(init), dtype=np.float64)
    schedule = cfg.schedule
    if schedule.warmup_steps > 0 and x.shape != r.shape:
        raise ShapeError(
            f"L1 phase needs equal vertex counts, got init {len(x)} and reference {len(r)}"
        )

    m = np.zeros_like(x)
    v = np.zeros_like(x)
    b1, b2 = cfg.beta1, cfg.beta2
    records = []
    for step in range(cfg.steps):
        value, grad = scheduled_loss(step, schedule, x, r, cfg.sinkhorn)
        g = grad.per_vertex
        records.append(FitStep(step, schedule.phase(step), float(value), grad.norm()))
        t = step + 1
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        x = np.clip(x - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_epsilon), 0.0, 1.0)

    return FitTrace(
        records=tuple(records),
        final_polygon=Polygon(x),
        final_iou=_polygon_iou(x, r, cfg.iou_resolution),
        resolution=tuple(cfg.iou_resolution),
    )


def is_strictly_convex(p) -> bool:
    """All cross products of consecutive edges are nonzero with one sign."""
    pts = as_vertex_array(p)
    if len(pts) < 3:
        return False
    e = np.roll(pts, -1, axis=0) - pts
    en = np.roll(e, -1, axis=0)
    cross = e[:, 0] * en[:, 1] - e[:, 1] * en[:, 0]
    return bool(np.all(cross > 0) or np.all(cross < 0))


def random_convex_polygon(rng: np.random.Generator, n: int) -> Polygon:
    """Random convex ``n``-gon inside the unit square.

    Sorted angles with bounded gaps on a circle of random radius, each vertex
    pulled inward by up to 15%; draws whose hull would drop a vertex are
    rejected, so the result always has exactly ``n`` vertices.  The inward
    pull halves every 20 rejections, which matters only for large ``n``.
    """
    if n < 3:
        raise ValueError(f"need at least 3 vertices, got {n}")
    attempt = 0
    while True:
        jitter = 0.15 * 0.5 ** (attempt // 20)
        attempt += 1
        radius = rng.uniform(0.15, 0.3)
        cx, cy = rng.uniform(radius + 0.02, 1.0 - radius - 0.02, size=2)
        gaps = rng.uniform(0.5, 1.5, size=n)
        angles = rng.uniform(0, 2 * math.pi) + np.cumsum(gaps) * (2 * math.pi / gaps.sum())
        radii = radius * rng.uniform(1.0 - jitter, 1.0, size=n)
        pts = np.column_stack([cx + radii * np.cos(angles), cy + radii * np.sin(angles)])
        if is_strictly_convex(pts):
            return Polygon(pts)


def perturb(rng: np.random.Generator, ref, sigma: float, rotate: bool = True) -> Polygon:
    """Gaussian jitter on every coordinate, clamped to the unit square, then
    an optional random cyclic relabelling of the vertices."""
    pts = as_vertex_array(ref)
    noisy = np.clip(pts + rng.normal(0.0, sigma, size=pts.shape), 0.0, 1.0)
    if rotate:
        noisy = np.roll(noisy, -int(rng.integers(len(pts))), axis=0)
    return Polygon(noisy)


def make_perturbed_suite(
    seed: int, count: int, n_vertices: int = 10, sigma: float = 0.05, rotate: bool = True
) -> list[tuple[Polygon, Polygon]]:
    """``count`` seeded ``(reference, initialization)`` pairs."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if n_vertices < 3:
        raise ValueError(f"n_vertices must be >= 3, got {n_vertices}")
    rng = np.random.default_rng(seed)
    suite = []
    for _ in range(count):
        ref = random_convex_polygon(rng, n_vertices)
        init = perturb(rng, ref, sigma, rotate)
        # clamping or jitter can merge vertices; redraw so counts stay equal
        while len(init) != n_vertices:
            init = perturb(rng, ref, sigma, rotate)
        suite.append((ref, init))
    return suite
