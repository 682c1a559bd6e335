"""Kernel backend selection.

The compiled extension ``polyot._ckernels`` is used when it imports; the
numpy fallback otherwise.  Set ``POLYOT_PURE_PYTHON=1`` to force the
fallback.
"""

import logging
import os

from . import _pykernels

logger = logging.getLogger(__name__)

python = _pykernels

try:
    if os.environ.get("POLYOT_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("POLYOT_PURE_PYTHON is set")
    from . import _ckernels as compiled
except ImportError as exc:  # pragma: no cover - depends on the build
    logger.debug("compiled kernels unavailable (%s); using numpy fallback", exc)
    compiled = None

active = compiled if compiled is not None else python
BACKEND = "cython" if compiled is not None else "python"

# above this many cost entries numpy's vectorized exp beats the scalar loop
COMPILED_SINKHORN_MAX_ENTRIES = 2048


def sinkhorn_log(C, log_a, log_b, eps, f, g, max_iter, tol):
    if compiled is not None and C.size <= COMPILED_SINKHORN_MAX_ENTRIES:
        return compiled.sinkhorn_log(C, log_a, log_b, eps, f, g, max_iter, tol)
    return python.sinkhorn_log(C, log_a, log_b, eps, f, g, max_iter, tol)


scanline_fill = active.scanline_fill
