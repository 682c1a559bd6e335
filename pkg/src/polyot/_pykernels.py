"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation.  The raster kernel
must agree bit for bit with the compiled one; the Sinkhorn kernel agrees to
rounding.
"""

import numpy as np


def sinkhorn_log(C, log_a, log_b, eps, f, g, max_iter, tol):
    """Run log-domain Sinkhorn sweeps at a fixed ``eps``.

    ``f`` and ``g`` are dual potentials (updated copies are returned).  Each
    sweep sets ``f`` to fix the row sums, then ``g`` to fix the column sums,
    so after any sweep the column marginals are exact and the row residual
    is measured at the start of the next sweep.  Returns
    ``(f, g, iterations, converged, row_residual)``.
    """
    f = np.array(f, dtype=np.float64)
    g = np.array(g, dtype=np.float64)
    a = np.exp(log_a)
    inv = 1.0 / eps
    it = 0
    residual = np.inf
    while True:
        z = (g[None, :] - C) * inv
        zmax = z.max(axis=1)
        f_new = eps * (log_a - zmax - np.log(np.exp(z - zmax[:, None]).sum(axis=1)))
        if it > 0:
            residual = float(np.max(a * np.abs(np.expm1((f - f_new) * inv))))
            if residual <= tol:
                return f, g, it, True, residual
        if it >= max_iter:
            return f, g, it, False, residual
        f = f_new
        z = (f[:, None] - C) * inv
        zmax = z.max(axis=0)
        g = eps * (log_b - zmax - np.log(np.exp(z - zmax[None, :]).sum(axis=0)))
        it += 1


def scanline_fill(xs, ys, width, height):
    """Even-odd fill of a closed polygon given in pixel units.

    Pixel ``(r, c)`` is set iff its center ``(c + 0.5, r + 0.5)`` lies inside.
    An edge contributes a crossing to row ``r`` when ``min(y) <= r + 0.5 <
    max(y)``; a span between crossings ``xa <= xb`` covers centers with
    ``xa <= c + 0.5 < xb``.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    x0, y0 = xs, ys
    x1, y1 = np.roll(xs, -1), np.roll(ys, -1)
    dx = x1 - x0
    dy = y1 - y0
    ylo = np.minimum(y0, y1)
    yhi = np.maximum(y0, y1)

    yc = np.arange(height, dtype=np.float64)[:, None] + 0.5
    hit = (ylo[None, :] <= yc) & (yc < yhi[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = x0[None, :] + (yc - y0[None, :]) * dx[None, :] / dy[None, :]
    xc = np.where(hit, xc, np.inf)
    xc.sort(axis=1)
    counts = hit.sum(axis=1)
    max_pairs = int(counts.max()) // 2 if len(counts) else 0

    mask = np.zeros((height, width), dtype=np.uint8)
    if max_pairs == 0:
        return mask
    xa = xc[:, 0 : 2 * max_pairs : 2]
    xb = xc[:, 1 : 2 * max_pairs : 2]
    valid = np.isfinite(xb)
    start = np.clip(np.ceil(np.where(valid, xa, 0.0) - 0.5), 0, width).astype(np.intp)
    stop = np.clip(np.ceil(np.where(valid, xb, 0.0) - 0.5), 0, width).astype(np.intp)
    stop = np.maximum(stop, start)

    diff = np.zeros((height, width + 1), dtype=np.int32)
    rows = np.broadcast_to(np.arange(height)[:, None], start.shape)
    np.add.at(diff, (rows[valid], start[valid]), 1)
    np.add.at(diff, (rows[valid], stop[valid]), -1)
    mask[:] = np.cumsum(diff[:, :width], axis=1) > 0
    return mask
