"""Command-line front end.

Configuration precedence is flags, then the JSON config file (``--config``
or ``$POLYOT_CONFIG``), then built-in defaults.  The effective config is
echoed to stderr before a command runs.  Output files are written to a
temporary sibling and renamed into place.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import DegeneratePolygonError, MissingPredictionError, SampleParseError
from .evalkit import SampleRecord, dump_samples, evaluate_dataset, load_predictions, load_samples
from .fit import FitConfig, fit_polygon, make_perturbed_suite, perturb
from .pml import DEFAULT_WARMUP_FRACTION, LossSchedule
from .polygon import Polygon, is_collinear, rotate_vertices
from .raster import DEFAULT_RESOLUTION, rasterize
from .transport import SinkhornConfig, sharp_value, sinkhorn, uniform_marginals

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MISSING_PREDICTIONS = 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.code = code


def write_atomic(path, text: str) -> None:
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise CliError(f"cannot write {path}: {exc}") from exc


def parse_resolution(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError(f"resolution must be positive, got {text!r}")
    return w, h


def _read_json(path, what: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh, parse_constant=lambda c: float("nan"))
    except OSError as exc:
        raise CliError(f"cannot read {what} {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"{what} {path} is not valid JSON: {exc}") from exc


def _read_polygon(path) -> Polygon:
    raw = _read_json(path, "polygon file")
    try:
        poly = Polygon(raw)
    except (ValueError, TypeError) as exc:
        raise CliError(f"invalid polygon in {path}: {exc}") from exc
    if len(poly) < 3:
        raise CliError(f"degenerate polygon in {path}: {len(poly)} distinct vertices")
    if is_collinear(poly):
        raise CliError(f"degenerate polygon in {path}: all vertices on one line")
    return poly


# -- configuration ---------------------------------------------------------

def load_config_file(path: Optional[str]) -> dict:
    path = path or os.environ.get("POLYOT_CONFIG")
    if not path:
        return {}
    cfg = _read_json(path, "config file")
    if not isinstance(cfg, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    unknown = set(cfg) - {"sinkhorn", "fit", "resolution"}
    if unknown:
        raise CliError(f"unknown config sections: {', '.join(sorted(unknown))}")
    return cfg


def _merge(defaults: dict, file_values: Optional[dict], flags: dict) -> dict:
    out = dict(defaults)
    out.update(file_values or {})
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def effective_config(args, file_cfg: dict) -> dict:
    """Merge the three config layers and validate every section."""
    sk = _merge(
        SinkhornConfig().to_dict(),
        file_cfg.get("sinkhorn"),
        {
            "epsilon_rel": getattr(args, "epsilon_rel", None),
            "max_iterations": getattr(args, "max_iterations", None),
            "marginal_tolerance": getattr(args, "tolerance", None),
        },
    )
    fit_defaults = {
        "steps": 500,
        "learning_rate": 5e-4,
        "beta1": 0.9,
        "beta2": 0.999,
        "seed": 0,
        "init_noise_sigma": 0.05,
        "warmup_fraction": DEFAULT_WARMUP_FRACTION,
    }
    fit = _merge(
        fit_defaults,
        file_cfg.get("fit"),
        {
            "steps": getattr(args, "steps", None),
            "learning_rate": getattr(args, "lr", None),
            "seed": getattr(args, "seed", None),
            "init_noise_sigma": getattr(args, "sigma", None),
        },
    )
    resolution = getattr(args, "resolution", None) or file_cfg.get("resolution") or DEFAULT_RESOLUTION
    cfg = {"sinkhorn": sk, "fit": fit, "resolution": list(resolution)}
    try:
        cfg["_sinkhorn"] = SinkhornConfig(**sk)
        fit_kwargs = {k: v for k, v in fit.items() if k != "warmup_fraction"}
        LossSchedule(fit["warmup_fraction"], fit["steps"])
        cfg["_fit"] = FitConfig(sinkhorn=cfg["_sinkhorn"], **fit_kwargs)
        w, h = (int(v) for v in resolution)
        if w < 1 or h < 1:
            raise ValueError(f"resolution must be positive, got {resolution}")
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid configuration: {exc}") from exc
    return cfg


def _echo_config(cfg: dict) -> None:
    public = {k: v for k, v in cfg.items() if not k.startswith("_")}
    print(f"effective config: {json.dumps(public, sort_keys=True)}", file=sys.stderr)


# -- commands --------------------------------------------------------------

def _pct(x: float) -> str:
    return f"{100.0 * x:.2f}"


def cmd_eval(args, cfg) -> int:
    try:
        samples = load_samples(args.samples)
        predictions = load_predictions(args.predictions) if args.predictions else None
    except OSError as exc:
        raise CliError(f"cannot read input: {exc}") from exc
    except SampleParseError as exc:
        for lineno, msg in exc.errors:
            print(f"error: line {lineno}: {msg}", file=sys.stderr)
        return EXIT_ERROR
    if not samples:
        raise CliError("sample file holds no records")
    resolution = tuple(args.resolution) if args.resolution else None
    try:
        report = evaluate_dataset(samples, resolution, predictions)
    except MissingPredictionError as exc:
        print(f"error: missing predictions for ids: {' '.join(exc.ids)}", file=sys.stderr)
        return EXIT_MISSING_PREDICTIONS
    if args.out:
        write_atomic(args.out, report.to_json())
    print(f"samples {report.n_samples}")
    print(f"mIoU {_pct(report.miou)}")
    for k, v in sorted(report.p_at.items()):
        print(f"P@{k} {_pct(v)}")
    return EXIT_OK


def cmd_fit(args, cfg) -> int:
    ref = _read_polygon(args.ref_polygon)
    base: FitConfig = cfg["_fit"]
    steps = base.steps
    if args.loss == "pml":
        schedule = LossSchedule.pure_pml(steps)
    elif args.loss == "l1":
        schedule = LossSchedule.pure_l1(steps)
    else:
        schedule = LossSchedule(cfg["fit"]["warmup_fraction"], steps)
    fit_cfg = replace(base, loss_schedule=schedule)
    if args.init == "rotated":
        init = rotate_vertices(ref, len(ref) // 2)
    else:
        rng = np.random.default_rng(fit_cfg.seed)
        init = perturb(rng, ref, fit_cfg.init_noise_sigma, rotate=False)
        if len(init) != len(ref):
            raise CliError("perturbed initialization merged vertices; try another seed")
    trace = fit_polygon(ref, init, fit_cfg)
    if args.trace:
        write_atomic(args.trace, trace.to_jsonl())
    if args.csv:
        write_atomic(args.csv, trace.to_csv())
    print(f"first-step loss {trace.initial_loss:.6g}")
    print(f"first-step grad norm {trace.records[0].grad_norm:.6g}")
    print(f"final loss {trace.final_loss:.6g}")
    w, h = trace.resolution
    print(f"final IoU@{w}x{h} {trace.final_iou:.4f}")
    return EXIT_OK


def _read_cost(path) -> np.ndarray:
    raw = _read_json(path, "cost matrix")
    if isinstance(raw, dict):
        raw = raw.get("cost")
    if (
        not isinstance(raw, list)
        or not raw
        or not all(isinstance(row, list) and row and len(row) == len(raw[0]) for row in raw)
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for row in raw for v in row)
    ):
        raise CliError(f"{path} must hold a non-empty rectangular list of number rows")
    C = np.array(raw, dtype=np.float64)
    if not np.all(np.isfinite(C)) or np.any(C < 0):
        raise CliError(f"{path} must hold finite non-negative costs")
    return C


def cmd_sinkhorn(args, cfg) -> int:
    C = _read_cost(args.cost_matrix)
    m = uniform_marginals(*C.shape)
    plan = sinkhorn(C, m, cfg["_sinkhorn"])
    sharp = sharp_value(C, plan)
    print(f"shape {C.shape[0]}x{C.shape[1]}")
    print(f"epsilon {plan.epsilon:.6g}")
    print(f"sharp {sharp:.10g}")
    print(f"entropic {plan.dual_value(m):.10g}")
    print(f"row residual {plan.row_residual:.3e}")
    print(f"col residual {plan.col_residual:.3e}")
    print(f"iterations {plan.iterations_used}")
    print(f"converged {str(plan.converged).lower()}")
    if args.dump:
        doc = {
            "cost": C.tolist(),
            "plan": plan.entries.tolist(),
            "epsilon": plan.epsilon,
            "sharp": sharp,
            "entropic": plan.dual_value(m),
            "row_residual": plan.row_residual,
            "col_residual": plan.col_residual,
            "iterations": plan.iterations_used,
            "converged": plan.converged,
        }
        write_atomic(args.dump, json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def cmd_rasterize(args, cfg) -> int:
    poly = _read_polygon(args.polygon)
    w, h = cfg["resolution"]
    try:
        mask = rasterize(poly, w, h)
    except DegeneratePolygonError as exc:
        raise CliError(str(exc)) from exc
    if args.out:
        write_atomic(args.out, mask.to_json() + "\n")
    print(f"{w}x{h} set pixels {mask.count()}")
    return EXIT_OK


def cmd_gen(args, cfg) -> int:
    fit = cfg["fit"]
    w, h = cfg["resolution"]
    suite = make_perturbed_suite(fit["seed"], args.count, args.vertices, fit["init_noise_sigma"])
    records = [
        SampleRecord(
            id=f"sample-{i:05d}",
            width=w,
            height=h,
            instruction=f"synthetic sample {i}",
            reference_polygon=ref,
            predicted_polygon=init,
        )
        for i, (ref, init) in enumerate(suite)
    ]
    write_atomic(args.out, dump_samples(records))
    print(f"wrote {len(records)} samples to {args.out}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1 so that 2 stays reserved for missing predictions
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (default: $POLYOT_CONFIG)")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--epsilon-rel", type=float, help="regularization as a fraction of mean cost")
    solver.add_argument("--max-iterations", type=int)
    solver.add_argument("--tolerance", type=float, help="marginal tolerance")

    parser = _Parser(prog="polyot", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[common], help="score predicted polygons against references")
    p.add_argument("samples")
    p.add_argument("predictions", nargs="?")
    p.add_argument("--resolution", type=parse_resolution, help="override every record's WxH")
    p.add_argument("--out", help="write the metrics report JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fit", parents=[common, solver], help="fit a polygon to a reference by descent")
    p.add_argument("ref_polygon")
    p.add_argument("--loss", choices=["pml", "l1", "scheduled"], default="scheduled")
    p.add_argument("--init", choices=["perturbed", "rotated"], default="perturbed")
    p.add_argument("--steps", type=_positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--sigma", type=float, help="initial Gaussian perturbation")
    p.add_argument("--trace", help="per-step JSON lines")
    p.add_argument("--csv", help="per-step CSV")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sinkhorn", parents=[common, solver], help="solve entropic OT for a cost matrix")
    p.add_argument("cost_matrix")
    p.add_argument("--dump", help="write cost, plan and diagnostics as JSON")
    p.set_defaults(func=cmd_sinkhorn)

    p = sub.add_parser("rasterize", parents=[common], help="rasterize a polygon to an RLE mask")
    p.add_argument("polygon")
    p.add_argument("--resolution", type=parse_resolution)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rasterize)

    p = sub.add_parser("gen", parents=[common], help="write a synthetic JSONL dataset")
    p.add_argument("--count", type=_positive_int, default=10)
    p.add_argument("--vertices", type=int, default=10)
    p.add_argument("--seed", type=int)
    p.add_argument("--sigma", type=float, help="prediction perturbation")
    p.add_argument("--resolution", type=parse_resolution)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = effective_config(args, load_config_file(args.config))
        _echo_config(cfg)
        return args.func(args, cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
