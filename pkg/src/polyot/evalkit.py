"""Dataset ingestion and mask metrics (mIoU, precision at IoU threshold)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import MissingPredictionError, SampleParseError, ShapeError
from .polygon import Polygon
from .raster import PixelMask, mask_iou, rasterize

__all__ = [
    "THRESHOLDS",
    "SampleRecord",
    "MetricsReport",
    "parse_sample",
    "load_samples",
    "dump_samples",
    "save_samples",
    "load_predictions",
    "attach_predictions",
    "compute_miou",
    "compute_precision_at",
    "evaluate_dataset",
]

THRESHOLDS = (0.5, 0.7)


@dataclass(frozen=True)
class SampleRecord:
    id: str
    width: int
    height: int
    instruction: str
    reference_polygon: Polygon
    predicted_polygon: Optional[Polygon] = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        if len(self.reference_polygon) < 3:
            raise ValueError(
                f"reference polygon needs at least 3 distinct vertices, got {len(self.reference_polygon)}"
            )

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "width": self.width,
            "height": self.height,
            "instruction": self.instruction,
            "reference_polygon": self.reference_polygon.to_list(),
        }
        if self.predicted_polygon is not None:
            out["predicted_polygon"] = self.predicted_polygon.to_list()
        return out


@dataclass(frozen=True)
class MetricsReport:
    n_samples: int
    miou: float
    p_at: dict[float, float]
    per_sample_iou: list[tuple[str, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "miou": self.miou,
            "p_at": {str(k): v for k, v in sorted(self.p_at.items())},
            "per_sample_iou": [[sid, iou] for sid, iou in self.per_sample_iou],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _polygon_field(obj: dict, key: str) -> Polygon:
    raw = obj[key]
    if not isinstance(raw, list) or not all(
        isinstance(v, list) and len(v) == 2 and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v)
        for v in raw
    ):
        raise ValueError(f"{key} must be a list of [x, y] number pairs")
    if not all(math.isfinite(c) for v in raw for c in v):
        raise ValueError(f"{key} has a non-finite coordinate")
    return Polygon(raw)


def _int_field(obj: dict, key: str) -> int:
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, int):
        raise ValueError(f"{key} must be an integer")
    return val


def parse_sample(obj) -> SampleRecord:
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    for key in ("id", "width", "height", "reference_polygon"):
        if key not in obj:
            raise ValueError(f"missing required field {key!r}")
    if not isinstance(obj["id"], str):
        raise ValueError("id must be a string")
    instruction = obj.get("instruction", "")
    if not isinstance(instruction, str):
        raise ValueError("instruction must be a string")
    pred = _polygon_field(obj, "predicted_polygon") if obj.get("predicted_polygon") is not None else None
    return SampleRecord(
        id=obj["id"],
        width=_int_field(obj, "width"),
        height=_int_field(obj, "height"),
        instruction=instruction,
        reference_polygon=_polygon_field(obj, "reference_polygon"),
        predicted_polygon=pred,
    )


def _parse_jsonl(lines: Iterable[str], parse):
    out, errors = [], []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            out.append(parse(json.loads(line, parse_constant=_reject_constant)))
        except (ValueError, TypeError) as exc:
            errors.append((lineno, str(exc)))
    if errors:
        raise SampleParseError(errors)
    return out


def _reject_constant(name):
    raise ValueError(f"non-finite number {name}")


def load_samples(path: Union[str, Path]) -> list[SampleRecord]:
    """Read a JSONL sample file.  Every bad line is collected and reported
    together in one :class:`SampleParseError`; blank lines are skipped."""
    with open(path, encoding="utf-8") as fh:
        return _parse_jsonl(fh, parse_sample)


def dump_samples(samples: Iterable[SampleRecord]) -> str:
    return "".join(json.dumps(s.to_dict()) + "\n" for s in samples)


def save_samples(samples: Iterable[SampleRecord], path: Union[str, Path]) -> None:
    Path(path).write_text(dump_samples(samples), encoding="utf-8")


def _parse_prediction(obj) -> tuple[str, Polygon]:
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    for key in ("id", "predicted_polygon"):
        if key not in obj:
            raise ValueError(f"missing required field {key!r}")
    if not isinstance(obj["id"], str):
        raise ValueError("id must be a string")
    return obj["id"], _polygon_field(obj, "predicted_polygon")


def load_predictions(path: Union[str, Path]) -> dict[str, Polygon]:
    with open(path, encoding="utf-8") as fh:
        return dict(_parse_jsonl(fh, _parse_prediction))


def attach_predictions(samples: Sequence[SampleRecord], predictions: Mapping[str, Polygon]) -> list[SampleRecord]:
    """Replace each record's prediction with the one keyed by its id."""
    missing = [s.id for s in samples if s.id not in predictions]
    if missing:
        raise MissingPredictionError(missing)
    return [replace(s, predicted_polygon=predictions[s.id]) for s in samples]


def _ious(pairs: Sequence[tuple[PixelMask, PixelMask]]) -> list[float]:
    if len(pairs) == 0:
        raise ValueError("metrics need at least one sample")
    return [mask_iou(ref, pred) for ref, pred in pairs]


def _precision(ious: Sequence[float], k: float) -> float:
    return sum(1 for v in ious if v > k) / len(ious)


def compute_miou(samples: Sequence[tuple[PixelMask, PixelMask]]) -> float:
    ious = _ious(samples)
    return math.fsum(ious) / len(ious)


def compute_precision_at(samples: Sequence[tuple[PixelMask, PixelMask]], k: float) -> float:
    """Fraction of samples whose IoU is strictly greater than ``k``."""
    if not 0.0 < k < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {k}")
    return _precision(_ious(samples), k)


def _sample_iou(s: SampleRecord, resolution) -> float:
    w, h = resolution if resolution is not None else (s.width, s.height)
    ref = rasterize(s.reference_polygon, w, h)
    if len(s.predicted_polygon) < 3:
        return mask_iou(ref, PixelMask(w, h))
    return mask_iou(ref, rasterize(s.predicted_polygon, w, h))


def evaluate_dataset(
    samples: Sequence[SampleRecord],
    resolution_override: Optional[tuple[int, int]] = None,
    predictions: Optional[Mapping[str, Polygon]] = None,
    thresholds: Sequence[float] = THRESHOLDS,
) -> MetricsReport:
    """Rasterize each reference/prediction pair and aggregate.

    ``predictions`` (keyed by id) overrides predictions stored in the
    records.  A prediction with fewer than 3 distinct vertices rasterizes to
    an empty mask.  Aggregates use exactly rounded sums, so record order does
    not change them.
    """
    if predictions is not None:
        samples = attach_predictions(samples, predictions)
    missing = [s.id for s in samples if s.predicted_polygon is None]
    if missing:
        raise MissingPredictionError(missing)
    if len(samples) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    if resolution_override is not None:
        w, h = resolution_override
        if w < 1 or h < 1:
            raise ShapeError(f"resolution must be positive, got {w}x{h}")
    ious = [_sample_iou(s, resolution_override) for s in samples]
    return MetricsReport(
        n_samples=len(ious),
        miou=math.fsum(ious) / len(ious),
        p_at={float(k): _precision(ious, k) for k in thresholds},
        per_sample_iou=[(s.id, v) for s, v in zip(samples, ious)],
    )
