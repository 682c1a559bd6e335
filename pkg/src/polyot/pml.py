"""Polygon matching loss, its gradient, the ordered L1 baseline, and the
two-phase schedule that switches from one to the other.

The matching loss treats both polygons as uniform point clouds and measures
the optimal transport cost between them, so it does not care which vertex
comes first.  Training uses the entropic value, whose gradient with respect
to the cost matrix is exactly the optimal plan; the unregularized ``sharp``
value is reported alongside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NonConvergenceError, ShapeError
from .polygon import as_vertex_array
from .transport import (
    SinkhornConfig,
    TransportPlan,
    build_cost,
    sharp_value,
    sinkhorn,
    uniform_marginals,
)

__all__ = [
    "DEFAULT_WARMUP_FRACTION",
    "LossValue",
    "LossGradient",
    "LossSchedule",
    "pml_loss",
    "pml_gradient",
    "pml_value_and_gradient",
    "l1_loss",
    "l1_gradient",
    "scheduled_loss",
]

# 79 of 90 epochs on L1 before switching to the matching loss
DEFAULT_WARMUP_FRACTION = 79 / 90


@dataclass(frozen=True, eq=False)
class LossValue:
    sharp: float
    entropic: float
    epsilon_used: float
    plan: TransportPlan

    @property
    def converged(self) -> bool:
        return self.plan.converged

    def to_dict(self) -> dict:
        return {
            "sharp": self.sharp,
            "entropic": self.entropic,
            "epsilon_used": self.epsilon_used,
            "converged": self.converged,
        }


@dataclass(frozen=True, eq=False)
class LossGradient:
    """``per_vertex[i] = (dL/dx_i, dL/dy_i)`` for each predicted vertex."""

    per_vertex: np.ndarray

    def __post_init__(self):
        g = np.array(self.per_vertex, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(g)):
            raise ValueError("gradient has non-finite entries")
        g.setflags(write=False)
        object.__setattr__(self, "per_vertex", g)

    def __len__(self) -> int:
        return len(self.per_vertex)

    def norm(self) -> float:
        return float(np.linalg.norm(self.per_vertex))

    def vertex_norms(self) -> np.ndarray:
        return np.hypot(self.per_vertex[:, 0], self.per_vertex[:, 1])


@dataclass(frozen=True)
class LossSchedule:
    """Steps ``0 .. warmup_steps - 1`` use ordered L1, the rest use the
    matching loss."""

    warmup_fraction: float = DEFAULT_WARMUP_FRACTION
    total_steps: int = 90

    def __post_init__(self):
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ValueError(f"warmup_fraction must be in [0, 1], got {self.warmup_fraction}")
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")

    @property
    def warmup_steps(self) -> int:
        # rounding first keeps 79/90 * 90 from landing a hair above 79
        return math.ceil(round(self.warmup_fraction * self.total_steps, 9))

    def phase(self, step: int) -> str:
        if not 0 <= step < self.total_steps:
            raise ValueError(f"step {step} outside [0, {self.total_steps})")
        return "l1" if step < self.warmup_steps else "pml"

    @classmethod
    def pure_pml(cls, total_steps: int) -> "LossSchedule":
        return cls(0.0, total_steps)

    @classmethod
    def pure_l1(cls, total_steps: int) -> "LossSchedule":
        return cls(1.0, total_steps)

    def to_dict(self) -> dict:
        return {"warmup_fraction": self.warmup_fraction, "total_steps": self.total_steps}


def pml_loss(pred, ref, cfg: Optional[SinkhornConfig] = None, *, epsilon: Optional[float] = None) -> LossValue:
    """Optimal transport cost between the two vertex sets under uniform weights.

    ``epsilon`` pins the absolute regularization instead of deriving it from
    the mean cost.
    """
    p = as_vertex_array(pred)
    r = as_vertex_array(ref)
    if len(p) == 0 or len(r) == 0:
        raise ShapeError("matching loss needs at least one vertex on each side")
    C = build_cost(p, r)
    m = uniform_marginals(len(p), len(r))
    plan = sinkhorn(C, m, cfg, epsilon=epsilon)
    return LossValue(
        sharp=sharp_value(C, plan),
        entropic=plan.dual_value(m),
        epsilon_used=plan.epsilon,
        plan=plan,
    )


def _plan_gradient(p: np.ndarray, r: np.ndarray, P: np.ndarray) -> np.ndarray:
    diff = p[:, None, :] - r[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    # coincident points contribute the zero subgradient
    scale = np.divide(P, dist, out=np.zeros_like(P), where=dist > 0)
    return np.einsum("ij,ijk->ik", scale, diff)


def pml_value_and_gradient(pred, ref, cfg: Optional[SinkhornConfig] = None, *, epsilon=None):
    """One solve, both outputs.  Raises :class:`NonConvergenceError` when the
    plan misses the marginal tolerance, since the gradient is only valid at
    the fixed point."""
    p = as_vertex_array(pred)
    r = as_vertex_array(ref)
    value = pml_loss(p, r, cfg, epsilon=epsilon)
    if not value.converged:
        plan = value.plan
        raise NonConvergenceError(
            f"Sinkhorn stopped after {plan.iterations_used} iterations with marginal "
            f"residuals {plan.row_residual:.3g}/{plan.col_residual:.3g}"
        )
    return value, LossGradient(_plan_gradient(p, r, value.plan.entries))


def pml_gradient(pred, ref, cfg: Optional[SinkhornConfig] = None, *, epsilon=None) -> LossGradient:
    """``dL/dpred_i = sum_j P_ij (pred_i - ref_j) / |pred_i - ref_j|``.

    The plan is held fixed (envelope gradient) and so is epsilon, even though
    the default rule derives epsilon from the mean cost.
    """
    return pml_value_and_gradient(pred, ref, cfg, epsilon=epsilon)[1]


def _same_shape(pred, ref):
    p = as_vertex_array(pred)
    r = as_vertex_array(ref)
    if p.shape != r.shape:
        raise ShapeError(f"ordered L1 needs equal vertex counts, got {len(p)} and {len(r)}")
    if len(p) == 0:
        raise ShapeError("ordered L1 needs at least one vertex")
    return p, r


def l1_loss(pred, ref) -> float:
    """Mean absolute coordinate difference, vertices paired in listed order."""
    p, r = _same_shape(pred, ref)
    return math.fsum(np.abs(p - r).ravel()) / p.size


def l1_gradient(pred, ref) -> LossGradient:
    p, r = _same_shape(pred, ref)
    return LossGradient(np.sign(p - r) / p.size)


def scheduled_loss(step: int, schedule: LossSchedule, pred, ref, cfg: Optional[SinkhornConfig] = None):
    """``(value, gradient)`` from L1 during warmup, from the entropic
    matching loss afterwards."""
    if schedule.phase(step) == "l1":
        return l1_loss(pred, ref), l1_gradient(pred, ref)
    value, grad = pml_value_and_gradient(pred, ref, cfg)
    return value.entropic, grad
