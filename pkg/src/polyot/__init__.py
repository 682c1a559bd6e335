"""Optimal-transport polygon matching loss with polygon rasterization,
mask metrics and a small fitting harness."""

__version__ = "0.1.0"

from .attention import AttentionWeights, cross_attention
from .errors import (
    DegeneratePolygonError,
    InvalidPermutationError,
    MissingPredictionError,
    NonConvergenceError,
    PolyOTError,
    SampleParseError,
    ShapeError,
)
from .evalkit import (
    MetricsReport,
    SampleRecord,
    compute_miou,
    compute_precision_at,
    evaluate_dataset,
    load_samples,
    save_samples,
)
from .fit import FitConfig, FitTrace, fit_polygon, make_perturbed_suite
from .kernels import BACKEND
from .pml import (
    LossGradient,
    LossSchedule,
    LossValue,
    l1_gradient,
    l1_loss,
    pml_gradient,
    pml_loss,
    scheduled_loss,
)
from .polygon import (
    Polygon,
    VertexPermutation,
    apply_permutation,
    resample,
    rotate_vertices,
    signed_area,
)
from .raster import PixelMask, mask_iou, rasterize
from .transport import (
    Marginals,
    SinkhornConfig,
    TransportPlan,
    build_cost,
    exact_assignment_value,
    sharp_value,
    sinkhorn,
    uniform_marginals,
)

__all__ = [
    "__version__",
    "AttentionWeights",
    "cross_attention",
    "DegeneratePolygonError",
    "InvalidPermutationError",
    "MissingPredictionError",
    "NonConvergenceError",
    "PolyOTError",
    "SampleParseError",
    "ShapeError",
    "MetricsReport",
    "SampleRecord",
    "compute_miou",
    "compute_precision_at",
    "evaluate_dataset",
    "load_samples",
    "save_samples",
    "FitConfig",
    "FitTrace",
    "fit_polygon",
    "make_perturbed_suite",
    "BACKEND",
    "LossGradient",
    "LossSchedule",
    "LossValue",
    "l1_gradient",
    "l1_loss",
    "pml_gradient",
    "pml_loss",
    "scheduled_loss",
    "Polygon",
    "VertexPermutation",
    "apply_permutation",
    "resample",
    "rotate_vertices",
    "signed_area",
    "PixelMask",
    "mask_iou",
    "rasterize",
    "Marginals",
    "SinkhornConfig",
    "TransportPlan",
    "build_cost",
    "exact_assignment_value",
    "sharp_value",
    "sinkhorn",
    "uniform_marginals",
]
