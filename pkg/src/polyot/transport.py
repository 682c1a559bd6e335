"""Entropy-regularized optimal transport between vertex sets.

Cost matrices are plain ``(n_pred, n_ref)`` float arrays.  The solver works on
dual potentials in the log domain, so small regularization does not underflow
the Gibbs kernel.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import kernels
from .errors import ShapeError
from .polygon import Polygon, as_vertex_array

__all__ = [
    "EPSILON_FLOOR",
    "SinkhornConfig",
    "Marginals",
    "TransportPlan",
    "build_cost",
    "uniform_marginals",
    "resolve_epsilon",
    "sinkhorn",
    "sharp_value",
    "brute_force_assignment",
    "hungarian_assignment",
    "exact_assignment_value",
]

EPSILON_FLOOR = 1e-9

# epsilon-scaling: warm-start potentials from coarser problems
_SCALING_FACTOR = 0.25
_STAGE_ITERATIONS = 25
# plain sweeps at the target epsilon before switching to Newton steps
_WARM_ITERATIONS = 50


@dataclass(frozen=True)
class SinkhornConfig:
    """Regularization is ``epsilon_rel * mean(cost)``, floored at
    :data:`EPSILON_FLOOR`."""

    epsilon_rel: float = 0.01
    max_iterations: int = 1000
    marginal_tolerance: float = 1e-9

    def __post_init__(self):
        if not self.epsilon_rel > 0:
            raise ValueError(f"epsilon_rel must be > 0, got {self.epsilon_rel}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError(f"max_iterations must be an integer >= 1, got {self.max_iterations}")
        if not self.marginal_tolerance > 0:
            raise ValueError(f"marginal_tolerance must be > 0, got {self.marginal_tolerance}")

    def to_dict(self) -> dict:
        return {
            "epsilon_rel": self.epsilon_rel,
            "max_iterations": self.max_iterations,
            "marginal_tolerance": self.marginal_tolerance,
        }


@dataclass(frozen=True, eq=False)
class Marginals:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64).ravel()
        b = np.asarray(self.b, dtype=np.float64).ravel()
        for name, w in (("a", a), ("b", b)):
            if w.size == 0:
                raise ValueError(f"marginal {name} is empty")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValueError(f"marginal {name} must be finite and non-negative")
            if abs(math.fsum(w) - 1.0) > 1e-12:
                raise ValueError(f"marginal {name} sums to {math.fsum(w)!r}, expected 1")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Sinkhorn output.

    ``f`` and ``g`` are the dual potentials; the plan is
    ``exp((f_i + g_j - C_ij) / epsilon)``.  Residuals are the infinity norms
    of ``P 1 - a`` and ``P^T 1 - b``.
    """

    entries: np.ndarray
    converged: bool
    iterations_used: int
    epsilon: float
    f: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)
    row_residual: float
    col_residual: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def dual_value(self, marginals: Marginals) -> float:
        """``<f, a> + <g, b> - epsilon * sum(P)``.

        Equals the entropic objective ``<C, P> + epsilon * sum(P (log P - 1))``
        at the fixed point, and unlike the primal form its error is second
        order in the marginal residuals.
        """
        fa = np.where(marginals.a > 0, self.f * marginals.a, 0.0)
        gb = np.where(marginals.b > 0, self.g * marginals.b, 0.0)
        return math.fsum(fa) + math.fsum(gb) - self.epsilon * math.fsum(self.entries.ravel())


def build_cost(pred: Union[Polygon, np.ndarray], ref: Union[Polygon, np.ndarray]) -> np.ndarray:
    """Pairwise Euclidean distances, ``C[i, j] = |pred_i - ref_j|``."""
    p = as_vertex_array(pred)
    r = as_vertex_array(ref)
    diff = p[:, None, :] - r[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def uniform_marginals(n_pred: int, n_ref: int) -> Marginals:
    if n_pred < 1 or n_ref < 1:
        raise ValueError(f"vertex counts must be positive, got ({n_pred}, {n_ref})")
    return Marginals(np.full(n_pred, 1.0 / n_pred), np.full(n_ref, 1.0 / n_ref))


def _check_cost(cost) -> np.ndarray:
    C = np.ascontiguousarray(cost, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] == 0 or C.shape[1] == 0:
        raise ShapeError(f"cost must be a non-empty 2-D matrix, got shape {C.shape}")
    if np.any(np.isnan(C)):
        raise ValueError("cost matrix contains NaN")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix contains infinite entries")
    if np.any(C < 0):
        raise ValueError("cost matrix contains negative entries")
    return C


def resolve_epsilon(cost, cfg: SinkhornConfig) -> float:
    return max(cfg.epsilon_rel * float(np.mean(cost)), EPSILON_FLOOR)


def sinkhorn(
    cost,
    marginals: Marginals,
    cfg: Optional[SinkhornConfig] = None,
    *,
    epsilon: Optional[float] = None,
) -> TransportPlan:
    """Solve entropic OT with log-domain Sinkhorn.

    A few sweeps at geometrically shrinking epsilon warm-start the
    potentials, then sweeps at the target epsilon run until the marginal
    tolerance is met; if they stall, damped Newton steps on the dual finish
    the job.  Every sweep and Newton step counts against ``max_iterations``.

    ``epsilon`` overrides the relative rule in ``cfg`` with an absolute
    value.  Running out of iterations is not an error: the plan comes back
    with ``converged=False`` and the caller decides.
    """
    cfg = cfg or SinkhornConfig()
    C = _check_cost(cost)
    n, m = C.shape
    if marginals.a.size != n or marginals.b.size != m:
        raise ShapeError(
            f"marginals ({marginals.a.size}, {marginals.b.size}) do not match cost {C.shape}"
        )
    eps = resolve_epsilon(C, cfg) if epsilon is None else float(epsilon)
    if not eps > 0:
        raise ValueError(f"epsilon must be > 0, got {eps}")

    # zero-weight points carry no mass: solve on the support and scatter back
    rows = np.flatnonzero(marginals.a > 0)
    cols = np.flatnonzero(marginals.b > 0)
    Cs = np.ascontiguousarray(C[np.ix_(rows, cols)])
    log_a = np.log(marginals.a[rows])
    log_b = np.log(marginals.b[cols])
    tol = cfg.marginal_tolerance
    budget = int(cfg.max_iterations)

    f = np.zeros(len(rows))
    g = np.zeros(len(cols))
    used = 0
    stage_eps = max(float(Cs.max()), eps)
    while stage_eps > eps and used < budget:
        steps = min(_STAGE_ITERATIONS, budget - used)
        f, g, it, _, _ = kernels.sinkhorn_log(Cs, log_a, log_b, stage_eps, f, g, steps, 0.0)
        used += it
        stage_eps *= _SCALING_FACTOR

    a_s = marginals.a[rows]
    b_s = marginals.b[cols]
    steps = min(_WARM_ITERATIONS, budget - used)
    f, g, it, _, _ = kernels.sinkhorn_log(Cs, log_a, log_b, eps, f, g, steps, tol)
    used += it
    Ps, row_res, col_res = _plan_and_residuals(Cs, a_s, b_s, eps, f, g)
    if max(row_res, col_res) > tol and used < budget:
        f, g, it = _newton_polish(Cs, a_s, b_s, eps, f, g, budget - used, tol)
        used += it
        Ps, row_res, col_res = _plan_and_residuals(Cs, a_s, b_s, eps, f, g)
    converged = row_res <= tol and col_res <= tol

    P = np.zeros((n, m))
    P[np.ix_(rows, cols)] = Ps
    f_full = np.zeros(n)
    g_full = np.zeros(m)
    f_full[rows] = f
    g_full[cols] = g
    for arr in (P, f_full, g_full):
        arr.setflags(write=False)
    return TransportPlan(
        entries=P,
        converged=bool(converged),
        iterations_used=int(used),
        epsilon=eps,
        f=f_full,
        g=g_full,
        row_residual=row_res,
        col_residual=col_res,
    )


def _plan_and_residuals(C, a, b, eps, f, g):
    with np.errstate(over="ignore"):
        P = np.exp((f[:, None] + g[None, :] - C) / eps)
    row_res = float(np.max(np.abs(P.sum(axis=1) - a)))
    col_res = float(np.max(np.abs(P.sum(axis=0) - b)))
    return P, row_res, col_res


def _newton_polish(C, a, b, eps, f, g, max_steps, tol):
    """Damped Newton ascent on the entropic dual.

    Plain Sinkhorn slows to a sublinear crawl when two assignments nearly
    tie at small epsilon; Newton on the same dual reaches the fixed point in
    a handful of steps.  The last column potential is pinned to remove the
    constant shift ``(f + t, g - t)``.  Steps that fail the ascent line
    search fall back to one Sinkhorn sweep.
    """
    n, m = C.shape
    log_a, log_b = np.log(a), np.log(b)
    k = n + m - 1

    def dual(f, g):
        with np.errstate(over="ignore"):
            P = np.exp((f[:, None] + g[None, :] - C) / eps)
        return f @ a + g @ b - eps * P.sum(), P

    D, P = dual(f, g)
    steps = 0
    while steps < max_steps:
        r = P.sum(axis=1)
        c = P.sum(axis=0)
        if max(np.max(np.abs(a - r)), np.max(np.abs(b - c))) <= tol:
            break
        steps += 1
        H = np.empty((k, k))
        H[:n, :n] = np.diag(r)
        H[:n, n:] = P[:, : m - 1]
        H[n:, :n] = P[:, : m - 1].T
        H[n:, n:] = np.diag(c[: m - 1])
        # disconnected support (underflowed entries) makes H singular
        H[np.diag_indices_from(H)] += 1e-13
        rhs = eps * np.concatenate([a - r, (b - c)[: m - 1]])
        try:
            d = np.linalg.solve(H, rhs)
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(H, rhs, rcond=None)[0]
        df = d[:n]
        dg = np.append(d[n:], 0.0)
        t = 1.0
        for _ in range(40):
            f2, g2 = f + t * df, g + t * dg
            D2, P2 = dual(f2, g2)
            if np.isfinite(D2) and D2 >= D - 1e-14 * (abs(D) + eps):
                f, g, D, P = f2, g2, D2, P2
                break
            t *= 0.5
        else:
            f, g, _, _, _ = kernels.sinkhorn_log(C, log_a, log_b, eps, f, g, 1, 0.0)
            D, P = dual(f, g)
    return f, g, steps


def sharp_value(cost, plan: Union[TransportPlan, np.ndarray]) -> float:
    """Transport objective ``sum_ij C_ij P_ij`` without the entropy term."""
    P = plan.entries if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    C = np.asarray(cost, dtype=np.float64)
    if C.shape != P.shape:
        raise ShapeError(f"cost {C.shape} and plan {P.shape} differ in shape")
    return math.fsum((C * P).ravel())


def _square(cost) -> np.ndarray:
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] == 0:
        raise ShapeError(f"assignment needs a non-empty square matrix, got shape {C.shape}")
    return C


def brute_force_assignment(cost) -> tuple[float, tuple[int, ...]]:
    """Minimum ``sum_i C[i, sigma(i)]`` by enumerating all permutations."""
    C = _square(cost)
    n = C.shape[0]
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    totals = C[np.arange(n), perms].sum(axis=1)
    best = int(np.argmin(totals))
    sigma = tuple(int(j) for j in perms[best])
    return math.fsum(C[np.arange(n), perms[best]]), sigma


def hungarian_assignment(cost) -> tuple[float, tuple[int, ...]]:
    """Minimum-cost perfect matching by the O(n^3) potential method."""
    C = _square(cost)
    n = C.shape[0]
    inf = math.inf
    # 1-based rows/columns; column 0 is the virtual root of each search
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    match = [0] * (n + 1)  # match[col] = row
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = C[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    sigma = [0] * n
    for j in range(1, n + 1):
        sigma[match[j] - 1] = j - 1
    return math.fsum(C[i, sigma[i]] for i in range(n)), tuple(sigma)


def exact_assignment_value(cost) -> float:
    """Unregularized OT value for uniform square marginals.

    With equal uniform weights the optimum sits on a permutation matrix
    scaled by ``1/n``, so the value is the minimum matching cost over ``n``.
    Enumeration for ``n <= 8``, Hungarian above.
    """
    C = _square(cost)
    n = C.shape[0]
    total, _ = brute_force_assignment(C) if n <= 8 else hungarian_assignment(C)
    return total / n
