"""Single-head cross-attention.

Operands are row-major token matrices: ``x_a`` is ``(n_a, d_in)`` and
``x_b`` is ``(n_b, d_in)``.  Each projection ``W`` has shape
``(d_out, d_in)`` and acts on the feature axis, i.e. ``x @ W.T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

__all__ = ["AttentionWeights", "softmax_rows", "attention_matrix", "cross_attention"]


@dataclass(frozen=True, eq=False)
class AttentionWeights:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    d: float

    def __post_init__(self):
        mats = []
        for name in ("w_q", "w_k", "w_v"):
            w = np.array(getattr(self, name), dtype=np.float64)
            if w.ndim != 2:
                raise ShapeError(f"{name} must be a matrix, got shape {w.shape}")
            if not np.all(np.isfinite(w)):
                raise ValueError(f"{name} has non-finite entries")
            w.setflags(write=False)
            object.__setattr__(self, name, w)
            mats.append(w)
        w_q, w_k, w_v = mats
        if w_q.shape[0] != w_k.shape[0]:
            raise ShapeError(
                f"query and key projections differ in output size: {w_q.shape[0]} vs {w_k.shape[0]}"
            )
        if not (w_q.shape[1] == w_k.shape[1] == w_v.shape[1]):
            raise ShapeError("projections must share the input feature size")
        if not (np.isfinite(self.d) and self.d > 0):
            raise ValueError(f"scaling factor d must be a positive number, got {self.d}")

    @property
    def d_in(self) -> int:
        return self.w_q.shape[1]


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _operand(x, w: AttentionWeights, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeError(f"{name} must be a non-empty matrix, got shape {x.shape}")
    if x.shape[1] != w.d_in:
        raise ShapeError(f"{name} has {x.shape[1]} features, projections expect {w.d_in}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    return x


def attention_matrix(x_a, x_b, w: AttentionWeights) -> np.ndarray:
    """Row-stochastic ``(n_a, n_b)`` weights ``softmax(Q K^T / sqrt(d))``."""
    x_a = _operand(x_a, w, "x_a")
    x_b = _operand(x_b, w, "x_b")
    q = x_a @ w.w_q.T
    k = x_b @ w.w_k.T
    return softmax_rows(q @ k.T / np.sqrt(w.d))


def cross_attention(x_a, x_b, w: AttentionWeights) -> np.ndarray:
    """``softmax((x_a W_q^T)(x_b W_k^T)^T / sqrt(d)) (x_b W_v^T)``, softmax over keys."""
    attn = attention_matrix(x_a, x_b, w)
    return attn @ (np.asarray(x_b, dtype=np.float64) @ w.w_v.T)
