"""Command-line front end.

Subcommands: generate, solve, evaluate, sweep, render-uv, extract-uv.
Exit codes: 0 success, 2 configuration/usage error, 3 I/O error.  Every
command is deterministic given its flags and seed; output files are
written atomically, and the report paths write a PNG figure next to the
CSV they emit.  A JSON --config file may supply defaults; explicit
flags override it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from .errors import Face6dError
from .geometry import RigidPose, rotation_angle_deg
from .meshio import load_mesh
from .metrics import CSV_HEADER, SampleResult, add_metric, aggregate_report
from .pfm import read_pfm, write_pfm
from .pnp import PnPProblem, RansacConfig, solve_pnp_ransac
from .synth import (
    DatasetConfig,
    NoiseModel,
    PoseRanges,
    corrupt,
    generate_dataset,
    load_manifest,
    load_sample,
)
from .uvmap import extract_vertices, render_uv_position_map

SWEEP_HEADER = f"param,value,{CSV_HEADER},median_rot_deg,median_add_mm"


class ConfigError(Face6dError):
    """Bad flags or configuration (exit code 2)."""


def _load_config_file(path):
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="ascii") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("config file must hold a JSON object")
    return payload


def _merged(args, key, fallback):
    """flag value > config file value > fallback."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    return args.config_values.get(key, fallback)


def _atomic_text(text, path):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _dataset_config(args) -> DatasetConfig:
    tz_min = float(_merged(args, "tz_min", 0.3))
    tz_max = float(_merged(args, "tz_max", 0.9))
    try:
        ranges = PoseRanges(tz=(tz_min, tz_max))
        return DatasetConfig(
            n_samples=int(_merged(args, "n", 100)),
            seed=int(_merged(args, "seed", 0)),
            m=int(_merged(args, "m", 1024)),
            ranges=ranges,
        )
    except Face6dError as exc:
        raise ConfigError(str(exc)) from exc


def _noise_model(args) -> NoiseModel:
    try:
        return NoiseModel(
            pixel_sigma=float(_merged(args, "pixel_sigma", 0.0)),
            corr_sigma=float(_merged(args, "corr_sigma", 0.0)),
            outlier_rate=float(_merged(args, "outlier_rate", 0.0)),
            seed=int(_merged(args, "seed", 0)),
        )
    except Face6dError as exc:
        raise ConfigError(str(exc)) from exc


def _ransac_config(args, seed) -> RansacConfig:
    try:
        return RansacConfig(
            max_iterations=int(_merged(args, "ransac_iters", 100)),
            inlier_threshold_px=float(_merged(args, "ransac_thresh", 2.0)),
            seed=seed,
        )
    except Face6dError as exc:
        raise ConfigError(str(exc)) from exc


def _solve_manifest(manifest_path, noise: NoiseModel, ransac: RansacConfig):
    """Run the oracle-predictor + PnP pipeline over every sample."""
    _config, entries, base = load_manifest(manifest_path)
    results = []
    for entry in entries:
        sample = load_sample(entry, base)
        pixels, _corr, points = corrupt(sample, noise)
        pose, inliers = solve_pnp_ransac(
            PnPProblem(pixels, points, sample.intrinsics), ransac
        )
        results.append((sample, pose, inliers))
    return results


def cmd_generate(args) -> int:
    config = _dataset_config(args)
    manifest = generate_dataset(config, args.out)
    print(f"wrote {config.n_samples} samples to {manifest}")
    return 0


def cmd_solve(args) -> int:
    noise = _noise_model(args)
    ransac = _ransac_config(args, noise.seed)
    results = _solve_manifest(args.manifest, noise, ransac)
    os.makedirs(args.out, exist_ok=True)
    payload = {
        "manifest": args.manifest,
        "noise": {
            "pixel_sigma": noise.pixel_sigma,
            "corr_sigma": noise.corr_sigma,
            "outlier_rate": noise.outlier_rate,
            "seed": noise.seed,
        },
        "ransac": {
            "max_iterations": ransac.max_iterations,
            "inlier_threshold_px": ransac.inlier_threshold_px,
            "seed": ransac.seed,
        },
        "predictions": [
            {
                "id": sample.sample_id,
                "rotation": [float(v) for v in pose.rotation.reshape(-1)],
                "translation": [float(v) for v in pose.translation],
                "inlier_count": int(len(inliers)),
            }
            for sample, pose, inliers in results
        ],
    }
    path = os.path.join(args.out, "predictions.json")
    _atomic_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", path)
    print(f"wrote {len(results)} pose predictions to {path}")
    return 0


def cmd_evaluate(args) -> int:
    try:
        with open(args.predictions, "r", encoding="ascii") as fh:
            predictions = json.load(fh)["predictions"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"bad predictions file {args.predictions}: {exc}") from exc
    _config, entries, base = load_manifest(args.manifest)
    by_id = {entry["id"]: entry for entry in entries}
    if sorted(by_id) != sorted(p["id"] for p in predictions):
        raise ConfigError("prediction ids do not match manifest ids")

    results = []
    for pred in predictions:
        entry = by_id[pred["id"]]
        sample = load_sample(entry, base)
        pose = RigidPose(
            np.asarray(pred["rotation"], dtype=np.float64).reshape(3, 3),
            np.asarray(pred["translation"], dtype=np.float64),
        )
        results.append(
            SampleResult(
                sample.sample_id, sample.pose, pose,
                add_metric(sample.mesh, sample.pose, pose),
            )
        )
    metrics, row = aggregate_report(results)
    os.makedirs(args.out, exist_ok=True)
    _atomic_text(f"{CSV_HEADER}\n{row}\n", os.path.join(args.out, "metrics.csv"))
    _atomic_text(metrics.to_json() + "\n", os.path.join(args.out, "metrics.json"))
    from .report import render_evaluation_figure

    render_evaluation_figure(
        metrics, [r.add_mm for r in results], os.path.join(args.out, "metrics.png")
    )
    print(f"{CSV_HEADER}\n{row}")
    return 0


_SWEEP_PARAMS = ("pixel_sigma", "outlier_rate", "m", "tz")


def cmd_sweep(args) -> int:
    if args.param not in _SWEEP_PARAMS:
        raise ConfigError(f"--param must be one of {_SWEEP_PARAMS}")
    try:
        values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad sweep values: {exc}") from exc
    if not values:
        raise ConfigError("sweep values list is empty")

    seed = int(_merged(args, "seed", 0))
    lines = [SWEEP_HEADER]
    curve_mae_r = []
    curve_add = []
    for value in values:
        sweep_args = argparse.Namespace(**vars(args))
        if args.param == "pixel_sigma":
            sweep_args.pixel_sigma = value
        elif args.param == "outlier_rate":
            sweep_args.outlier_rate = value
        elif args.param == "m":
            if value < 4 or value != int(value):
                raise ConfigError("swept m must be an integer >= 4")
            sweep_args.m = int(value)
        elif args.param == "tz":
            sweep_args.tz_min = value
            sweep_args.tz_max = value
        config = _dataset_config(sweep_args)
        noise = _noise_model(sweep_args)
        ransac = _ransac_config(sweep_args, seed)
        with tempfile.TemporaryDirectory() as tmp:
            manifest = generate_dataset(config, tmp)
            solved = _solve_manifest(manifest, noise, ransac)
            results = [
                SampleResult(
                    s.sample_id, s.pose, pose, add_metric(s.mesh, s.pose, pose)
                )
                for s, pose, _ in solved
            ]
            rot_errs = [
                rotation_angle_deg(s.pose.rotation, pose.rotation)
                for s, pose, _ in solved
            ]
        metrics, row = aggregate_report(results)
        med_rot = float(np.median(rot_errs))
        med_add = float(np.median([r.add_mm for r in results]))
        lines.append(f"{args.param},{value:.6g},{row},{med_rot:.6g},{med_add:.6g}")
        curve_mae_r.append(metrics.mae_r)
        curve_add.append(metrics.add_mm)

    os.makedirs(args.out, exist_ok=True)
    _atomic_text("\n".join(lines) + "\n", os.path.join(args.out, "sweep.csv"))
    from .report import render_sweep_figure

    render_sweep_figure(
        args.param, values, curve_mae_r, curve_add, os.path.join(args.out, "sweep.png")
    )
    print("\n".join(lines))
    return 0


def cmd_render_uv(args) -> int:
    try:
        mesh = load_mesh(args.mesh)
    except Face6dError as exc:
        raise ConfigError(str(exc)) from exc
    width, height = (int(v) for v in (_merged(args, "dims", None) or (192, 192)))
    uv_map = render_uv_position_map(mesh, height, width)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "positions.pfm")
    write_pfm(uv_map, path)
    print(f"rendered {width}x{height} position map to {path}")
    return 0


def cmd_extract_uv(args) -> int:
    try:
        mesh = load_mesh(args.mesh)
    except Face6dError as exc:
        raise ConfigError(str(exc)) from exc
    uv_map = read_pfm(args.map)
    vertices = extract_vertices(uv_map, mesh.uv_coords)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "vertices.xyz")
    _atomic_text(
        "".join(f"{float(x)!r} {float(y)!r} {float(z)!r}\n" for x, y, z in vertices),
        path,
    )
    print(f"extracted {len(vertices)} vertices to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="face6d",
        description="Perspective-projection face geometry experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=None, help="global random seed")
        p.add_argument("--config", default=None, help="JSON config file with defaults")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("generate", help="write a synthetic dataset + manifest")
    add_common(p)
    p.add_argument("--n", type=int, default=None, help="number of samples")
    p.add_argument("--m", type=int, default=None, help="sampled pixels per sample")
    p.add_argument("--tz-min", dest="tz_min", type=float, default=None)
    p.add_argument("--tz-max", dest="tz_max", type=float, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="oracle predictor + RANSAC PnP over a manifest")
    add_common(p)
    p.add_argument("manifest", help="path to manifest.json")
    p.add_argument("--pixel-sigma", dest="pixel_sigma", type=float, default=None)
    p.add_argument("--corr-sigma", dest="corr_sigma", type=float, default=None)
    p.add_argument("--outlier-rate", dest="outlier_rate", type=float, default=None)
    p.add_argument("--ransac-iters", dest="ransac_iters", type=int, default=None)
    p.add_argument("--ransac-thresh", dest="ransac_thresh", type=float, default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evaluate", help="score predictions against a manifest")
    add_common(p)
    p.add_argument("predictions", help="predictions.json from solve")
    p.add_argument("manifest", help="path to manifest.json")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="metrics against a swept parameter")
    add_common(p)
    p.add_argument("--param", required=True, help=f"one of {_SWEEP_PARAMS}")
    p.add_argument("--values", required=True, help="comma-separated sweep values")
    p.add_argument("--n", type=int, default=None, help="samples per sweep point")
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--tz-min", dest="tz_min", type=float, default=None)
    p.add_argument("--tz-max", dest="tz_max", type=float, default=None)
    p.add_argument("--pixel-sigma", dest="pixel_sigma", type=float, default=None)
    p.add_argument("--corr-sigma", dest="corr_sigma", type=float, default=None)
    p.add_argument("--outlier-rate", dest="outlier_rate", type=float, default=None)
    p.add_argument("--ransac-iters", dest="ransac_iters", type=int, default=None)
    p.add_argument("--ransac-thresh", dest="ransac_thresh", type=float, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("render-uv", help="render a mesh into a UV position map")
    add_common(p)
    p.add_argument("mesh", help="OBJ mesh path")
    p.add_argument("--dims", nargs=2, type=int, default=None, metavar=("W", "H"))
    p.set_defaults(func=cmd_render_uv)

    p = sub.add_parser("extract-uv", help="read vertices back from a position map")
    add_common(p)
    p.add_argument("map", help="position-map PFM path")
    p.add_argument("--mesh", required=True, help="OBJ mesh supplying the uv coordinates")
    p.set_defaults(func=cmd_extract_uv)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.config_values = _load_config_file(args.config)
        seed = _merged(args, "seed", 0)
        if int(seed) < 0:
            raise ConfigError("seed must be >= 0")
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    except Face6dError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
