"""Command line entry point: build scenarios, certify, detect, experiment.

Every command reads and writes file artifacts only; the JSON and CSV
schemas are documented in docs/formats.md.  Exit codes are a stable
contract: 0 success, 1 mathematical failure (a certificate or detection
did not hold), 2 usage, configuration, or I/O failure.
"""

import argparse
import hashlib
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .ambient import ConeField
from .cocycle import verify_cone_invariance
from .errors import (
    ConefoldError,
    DimensionMismatch,
    InvalidDimension,
    NotElliptic,
    ReconstructionFailed,
)
from .folding import embed, verify_folding
from .robustness import (
    DEFAULT_TRIALS,
    MagnitudeLadder,
    persistence_experiment,
)
from .systems import (
    build_scenario,
    scenario_from_dict,
    scenario_to_dict,
    verify_trapping,
)
from .tangency import find_tangency_newton, find_tangency_sweep

CONE_SAMPLES = 10000
CONE_SEED = 0
CERTIFICATE_GRID = 9
PATCH_POINT_BUDGET = 2048
LEAF_POINT_BUDGET = 1024

CSV_COLUMNS = (
    "magnitude",
    "trial",
    "seed",
    "detector",
    "success",
    "residual",
    "displacement",
    "detector_agreement",
)


# ---------------------------------------------------------------------------
# deterministic serialization


def _format_float(value: float) -> str:
    if not np.isfinite(value):
        raise InvalidDimension("cannot serialize a non-finite float")
    return "%.17g" % value


def canonical_json(value, indent: int = 0) -> str:
    """Deterministic JSON text; floats carry 17 significant digits."""
    pad = " " * indent
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _format_float(float(value))
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, np.ndarray):
        return canonical_json(value.tolist(), indent)
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        items = [canonical_json(v, indent + 2) for v in value]
        joined = ",\n".join(pad + "  " + item for item in items)
        return "[\n" + joined + "\n" + pad + "]"
    if isinstance(value, dict):
        if not value:
            return "{}"
        parts = []
        for key, item in value.items():
            parts.append(
                pad + "  " + json.dumps(str(key)) + ": " + canonical_json(item, indent + 2)
            )
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    raise InvalidDimension(f"cannot serialize value of type {type(value).__name__}")


def _config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def _header(seed: int, config: dict) -> dict:
    return {
        "tool_version": __version__,
        "seed": int(seed),
        "config_hash": _config_hash(config),
    }


def _write_text(path: str, text: str):
    """Atomic write: temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, doc: dict):
    _write_text(path, canonical_json(doc) + "\n")


def _load_scenario(path: str):
    with open(path, "r") as handle:
        data = json.load(handle)
    if not isinstance(data, dict):
        raise ValueError("scenario file must hold a JSON object")
    data = dict(data)
    data.pop("header", None)
    return scenario_from_dict(data), data


def _out_dir(args) -> str:
    directory = args.out or "."
    os.makedirs(directory, exist_ok=True)
    return directory


# ---------------------------------------------------------------------------
# geometry payload for the plotting layer


def _grid_points(per_axis: int, k: int) -> np.ndarray:
    axes = [np.linspace(-1.0, 1.0, per_axis)] * k
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _points_per_axis(budget: int, k: int) -> int:
    return max(2, min(41, int(round(budget ** (1.0 / k)))))


def _geometry_block(sc, fold, report) -> dict:
    """Sampled fold patch and tangency-leaf segment, so plots need no math.

    The leaf is the affine stable plane through the detected point; its
    sample may run past the torus seam without wrapping, keeping segments
    connected for drawing.
    """
    per_patch = _points_per_axis(PATCH_POINT_BUDGET, fold.k)
    params = _grid_points(per_patch, fold.k)
    patch = np.array([embed(fold, t).coords for t in params])

    frame = sc.stable_frame.frame
    sdim = frame.shape[1]
    half = 2.0 * fold.chart_scale * float(np.sqrt(fold.k))
    per_leaf = _points_per_axis(LEAF_POINT_BUDGET, sdim)
    offsets = _grid_points(per_leaf, sdim) * half
    leaf = report.point.coords[None, :] + offsets @ frame.T
    return {
        "patch": patch.tolist(),
        "patch_shape": [per_patch] * fold.k,
        "leaf": leaf.tolist(),
        "leaf_shape": [per_leaf] * sdim,
        "leaf_half_width": half,
    }


# ---------------------------------------------------------------------------
# commands


def cmd_build(args) -> int:
    config = {
        "command": "build",
        "cT": args.cT,
        "s": args.s,
        "kind": args.kind,
        "alpha": args.alpha,
        "seed": args.seed,
    }
    scenario = build_scenario(
        c_T=args.cT, s=args.s, kind=args.kind, alpha=args.alpha, seed=args.seed
    )
    doc = {"header": _header(args.seed, config)}
    doc.update(scenario_to_dict(scenario))
    path = os.path.join(_out_dir(args), "scenario.json")
    _write_json(path, doc)
    print(
        f"wrote {path}: kind={scenario.kind} d={scenario.d} n={scenario.n} "
        f"k={scenario.fold.k}"
    )
    return 0


def cmd_verify(args) -> int:
    scenario, raw = _load_scenario(args.scenario)
    config = {"command": "verify", "scenario": raw, "seed": CONE_SEED}
    trapping = verify_trapping(scenario, grid_per_axis=CERTIFICATE_GRID)
    cone = verify_cone_invariance(
        scenario,
        ConeField(scenario.stable_frame, scenario.alpha),
        samples=CONE_SAMPLES,
        seed=CONE_SEED,
    )
    folding = verify_folding(
        scenario.fold,
        ConeField(scenario.fold.center_plane, scenario.alpha),
        grid_per_axis=CERTIFICATE_GRID,
    )
    verdicts = {
        "trapping": trapping.passed,
        "cone": cone.passed,
        "folding": folding.passed,
    }
    doc = {
        "header": _header(CONE_SEED, config),
        "trapping": trapping.to_dict(),
        "cone": cone.to_dict(),
        "folding": folding.to_dict(),
        "pass": all(verdicts.values()),
    }
    path = os.path.join(_out_dir(args), "certificates.json")
    _write_json(path, doc)
    if not doc["pass"]:
        failing = ", ".join(name for name, ok in verdicts.items() if not ok)
        print(f"certificate failed: {failing}", file=sys.stderr)
        return 1
    print(f"wrote {path}: all certificates pass")
    return 0


def _find_one(scenario, detector: str):
    if detector == "newton":
        return find_tangency_newton(scenario, scenario.fold)
    return find_tangency_sweep(scenario, scenario.fold)


def cmd_find(args) -> int:
    scenario, raw = _load_scenario(args.scenario)
    config = {"command": "find", "scenario": raw, "detector": args.detector}
    header = _header(scenario.seed, config)
    detectors = ["newton", "sweep"] if args.detector == "both" else [args.detector]
    directory = _out_dir(args)
    reports = {}
    for detector in detectors:
        report = _find_one(scenario, detector)
        doc = {"header": header}
        doc.update(report.to_dict())
        doc["geometry"] = _geometry_block(scenario, scenario.fold, report)
        path = os.path.join(directory, f"report_{detector}.json")
        _write_json(path, doc)
        print(
            f"wrote {path}: class {report.tangency_class.to_dict()} "
            f"residual {report.residual_norm:.3e}"
        )
        reports[detector] = report
    if args.detector == "both":
        newton, sweep = reports["newton"], reports["sweep"]
        distance = float(newton.point.distance_to(sweep.point))
        agreement = {
            "header": header,
            "distance": distance,
            "class_equal": newton.tangency_class == sweep.tangency_class,
            "agree": bool(
                distance < 1e-6 and newton.tangency_class == sweep.tangency_class
            ),
        }
        path = os.path.join(directory, "agreement.json")
        _write_json(path, agreement)
        print(f"wrote {path}: distance {distance:.3e}")
    return 0


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _format_float(float(value))
    return str(value)


def cmd_robustness(args) -> int:
    scenario, raw = _load_scenario(args.scenario)
    if args.ladder:
        magnitudes = tuple(float(item) for item in args.ladder.split(","))
        ladder = MagnitudeLadder(magnitudes)
    else:
        ladder = MagnitudeLadder()
    config = {
        "command": "robustness",
        "scenario": raw,
        "ladder": list(ladder.magnitudes),
        "trials": args.trials,
        "seed": args.seed,
    }
    result = persistence_experiment(
        scenario, ladder=ladder, trials_per_magnitude=args.trials, seed=args.seed
    )
    directory = _out_dir(args)

    lines = [",".join(CSV_COLUMNS)]
    for row in result.rows:
        record = row.to_dict()
        lines.append(",".join(_csv_cell(record[column]) for column in CSV_COLUMNS))
    csv_path = os.path.join(directory, "stats.csv")
    _write_text(csv_path, "\n".join(lines) + "\n")

    summary = {
        "header": _header(args.seed, config),
        "trials_per_magnitude": args.trials,
        "stats": [
            dict(stats.to_dict(), success_rate=stats.success_rate)
            for stats in result.stats
        ],
        "displacement_slope": result.displacement_slope,
        "monotone_ok": result.monotone_ok,
        "envelope_ok": result.envelope_ok,
        "certificate_consistent": result.certificate_consistent,
    }
    summary_path = os.path.join(directory, "summary.json")
    _write_json(summary_path, summary)
    for stats in result.stats:
        print(
            f"magnitude {stats.magnitude:g}: {stats.successes}/{stats.trials} "
            f"converged, max residual {stats.max_residual:.3e}"
        )
    print(f"wrote {csv_path} and {summary_path}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conefold",
        description="cone-field certification and tangency detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    build = sub.add_parser("build", help="construct a scenario file")
    build.add_argument("--cT", type=int, required=True, help="tangency codimension")
    build.add_argument("--s", type=int, required=True, help="stable dimension")
    build.add_argument("--kind", choices=["elliptic", "saddle", "mixed"], default=None)
    build.add_argument("--alpha", type=float, default=None, help="cone aperture")
    build.add_argument("--seed", type=int, default=0)
    build.add_argument("--out", default=None, help="output directory")
    build.set_defaults(func=cmd_build)

    verify = sub.add_parser("verify", help="run all certificates on a scenario")
    verify.add_argument("scenario", help="scenario JSON path")
    verify.add_argument("--out", default=None, help="output directory")
    verify.set_defaults(func=cmd_verify)

    find = sub.add_parser("find", help="run the tangency detectors")
    find.add_argument("scenario", help="scenario JSON path")
    find.add_argument(
        "--detector", choices=["newton", "sweep", "both"], default="both"
    )
    find.add_argument("--out", default=None, help="output directory")
    find.set_defaults(func=cmd_find)

    robustness = sub.add_parser(
        "robustness", help="perturbation ladder persistence experiment"
    )
    robustness.add_argument("scenario", help="scenario JSON path")
    robustness.add_argument("--ladder", default=None, help="comma list of magnitudes")
    robustness.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    robustness.add_argument("--seed", type=int, default=0)
    robustness.add_argument("--out", default=None, help="output directory")
    robustness.set_defaults(func=cmd_robustness)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except (NotElliptic, InvalidDimension, DimensionMismatch, ReconstructionFailed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConefoldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
