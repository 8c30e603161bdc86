"""Command-line interface: detection, batch evaluation, grid search, synthesis.

Parameter defaults follow the tuned values: st_sigma 1.2, percent_lo 0.7,
r_f 7, eps 1e-5, max_iter 5, and window sides st_w / lo_w of 3 for the plain
method and 7 for the pclines-filtered one (auto-switched unless overridden).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import cv2
import numpy as np

from .errors import DetectionFailedError, InvalidInputError
from .evalbench import (
    grid_search,
    evaluate,
    load_collection_config,
    load_manifest,
    write_grid_csv,
    write_metrics_csv,
    write_metrics_json,
    write_records_csv,
)
from .imgproc import full_foreground_mask, load_image, load_mask, save_image
from .lo_sampler import LoSamplerParams, save_lo_csv
from .pclines import PclinesParams, detect_pith_apd_pcl, save_duals_csv
from .solver import DetectorParams, SolverParams, detect_pith_apd
from .structure_tensor import StParams
from .synthgen import WebSpec, save_web

# name -> (type, default for apd, default for apd-pcl, help)
_PARAM_SPECS = {
    "st_sigma": (float, 1.2, 1.2, "structure-tensor Gaussian std-dev, pixels"),
    "st_w": (int, 3, 7, "structure-tensor window side, odd pixels"),
    "percent_lo": (float, 0.7, 0.7, "fraction of foreground orientations kept by the gate"),
    "lo_w": (int, 3, 7, "orientation sampling patch side, odd pixels"),
    "r_f": (float, 7.0, 7.0, "refinement region shrink factor"),
    "eps": (float, 1e-5, 1e-5, "refinement convergence tolerance, pixels"),
    "max_iter": (int, 5, 5, "refinement iteration cap"),
    "working_width": (int, 640, 640, "working image width, pixels"),
    "d": (float, 1.0, 1.0, "dual-space inter-axis distance, normalized units"),
    "ransac_outlier_th": (float, 0.03, 0.03, "dual-space residual threshold (cluster width)"),
    "ransac_iters": (int, 1000, 1000, "RANSAC iteration count"),
    "ransac_min_inliers": (int, 5, 5, "minimum inliers to accept a dual-space cluster"),
    "seed": (int, 0, 0, "PRNG seed (RANSAC and solver perturbations)"),
}


def _add_param_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("method parameters")
    group.add_argument("--method", choices=["apd", "apd-pcl"], default="apd",
                       help="detector variant (default: %(default)s)")
    group.add_argument("--config", metavar="FILE",
                       help="flat key=value file providing parameter defaults")
    for name, (ctor, apd_default, pcl_default, text) in _PARAM_SPECS.items():
        flag = "--" + name.replace("_", "-")
        if apd_default == pcl_default:
            note = f"default: {apd_default}"
        else:
            note = f"default: {apd_default} for apd, {pcl_default} for apd-pcl"
        group.add_argument(flag, type=ctor, default=None, help=f"{text} ({note})")


def _parse_kv(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; '#' starts a comment."""
    result: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidInputError(f"bad config line (expected key = value): {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            result[key] = value
    return result


def _resolve_params(args, parser) -> tuple[DetectorParams, PclinesParams]:
    """Merge defaults, config file and CLI flags into parameter bundles."""
    values = {}
    if args.config:
        if not os.path.exists(args.config):
            parser.error(f"config file not found: {args.config}")
        for key, raw in _parse_kv(args.config).items():
            if key == "method":
                continue
            if key not in _PARAM_SPECS:
                parser.error(f"unknown parameter {key!r} in config file")
            values[key] = _PARAM_SPECS[key][0](raw)
    for name in _PARAM_SPECS:
        override = getattr(args, name)
        if override is not None:
            values[name] = override
    pcl_variant = args.method == "apd-pcl"

    def pick(name):
        if name in values:
            return values[name]
        return _PARAM_SPECS[name][2 if pcl_variant else 1]

    try:
        params = DetectorParams(
            st=StParams(st_sigma=pick("st_sigma"), st_w=pick("st_w")),
            lo=LoSamplerParams(lo_w=pick("lo_w"), percent_lo=pick("percent_lo")),
            solver=SolverParams(r_f=pick("r_f"), eps=pick("eps"),
                                max_iter=pick("max_iter"), seed=pick("seed")),
            working_width=pick("working_width"),
        )
        pcl = PclinesParams(
            d=pick("d"),
            ransac_outlier_th=pick("ransac_outlier_th"),
            ransac_iters=pick("ransac_iters"),
            ransac_min_inliers=pick("ransac_min_inliers"),
            seed=pick("seed"),
        )
    except InvalidInputError as exc:
        parser.error(str(exc))
    return params, pcl


def _draw_overlay(img, pred, gt=None):
    canvas = np.ascontiguousarray(img.copy())
    radius = max(4, int(round(max(canvas.shape[:2]) / 100)))
    px, py = int(round(pred[0])), int(round(pred[1]))
    cv2.drawMarker(canvas, (px, py), (255, 0, 0), cv2.MARKER_CROSS, radius * 4, 2)
    cv2.circle(canvas, (px, py), radius, (255, 0, 0), 2)
    if gt is not None:
        gx, gy = int(round(gt[0])), int(round(gt[1]))
        cv2.circle(canvas, (gx, gy), radius, (0, 255, 0), 2)
    return canvas


def _cmd_detect(args, parser) -> int:
    params, pcl = _resolve_params(args, parser)
    img = load_image(args.image)
    if args.mask:
        mask = load_mask(args.mask)
    elif args.full_foreground:
        mask = full_foreground_mask(img.shape[:2])
    else:
        parser.error("a --mask is required unless --full-foreground asserts a clean background")
    if mask.shape != img.shape[:2]:
        parser.error("mask and image dimensions differ")
    try:
        if args.method == "apd":
            estimate = detect_pith_apd(img, mask, params)
        else:
            estimate = detect_pith_apd_pcl(img, mask, params, pcl)
    except DetectionFailedError as exc:
        print(f"detection failed: {exc}", file=sys.stderr)
        return 1
    name = os.path.basename(args.image)
    payload = json.dumps(estimate.to_json(name))
    print(payload)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(payload + "\n")
    if args.overlay:
        save_image(args.overlay, _draw_overlay(img, estimate.c_original))
    if args.debug_dir:
        _write_debug(args.debug_dir, img, mask, params, pcl)
    return 0


def _write_debug(out_dir, img, mask, params: DetectorParams, pcl: PclinesParams) -> None:
    from .imgproc import apply_mask, derivatives, resize_mask, resize_to_width, to_grayscale
    from .lo_sampler import sample_lo
    from .structure_tensor import coherence, compute_tensor, dump_plane, orientation

    os.makedirs(out_dir, exist_ok=True)
    working, _ = resize_to_width(apply_mask(to_grayscale(img), mask), params.working_width)
    working_mask = resize_mask(mask, params.working_width)
    tensor = compute_tensor(*derivatives(working), params.st)
    st_o, st_c = orientation(tensor), coherence(tensor)
    dump_plane(os.path.join(out_dir, "orientation.bin"), st_o)
    dump_plane(os.path.join(out_dir, "coherence.bin"), st_c)
    lo = sample_lo(st_o, st_c, working_mask, params.lo)
    save_lo_csv(os.path.join(out_dir, "lo.csv"), lo)
    if len(lo):
        save_duals_csv(os.path.join(out_dir, "duals.csv"), lo,
                       (working.shape[1], working.shape[0]), pcl)


def _cmd_eval(args, parser) -> int:
    params, pcl = _resolve_params(args, parser)
    manifests = []
    for path in args.manifest:
        if not os.path.exists(path):
            parser.error(f"manifest not found: {path}")
        if path.endswith(".csv"):
            manifests.append(load_manifest(path))
        else:
            manifests.extend(load_collection_config(path))
    os.makedirs(args.out_dir, exist_ok=True)
    timing = not args.no_timing
    tables = []
    for manifest in manifests:
        table, records = evaluate(manifest, args.method, params, pcl, workers=args.workers)
        tables.append(table)
        write_records_csv(os.path.join(args.out_dir, f"records_{manifest.name}.csv"), records,
                          include_timing=timing)
        if args.overlay_dir:
            _write_eval_overlays(args.overlay_dir, manifest, records)
        print(
            f"{manifest.name}: n={table.n_images} mean={table.mean_err:.4f} "
            f"std={table.std_err:.4f} median={table.median_err:.4f} max={table.max_err:.4f} "
            f"fn={table.false_negatives} time={table.mean_elapsed_ms:.1f}ms"
        )
    write_metrics_csv(os.path.join(args.out_dir, "metrics.csv"), tables, include_timing=timing)
    write_metrics_json(os.path.join(args.out_dir, "metrics.json"), tables, include_timing=timing)
    return 0


def _write_eval_overlays(overlay_dir, manifest, records):
    os.makedirs(overlay_dir, exist_ok=True)
    by_name = {os.path.basename(e.image): e for e in manifest.entries}
    for record in records:
        entry = by_name.get(record.image)
        if entry is None:
            continue
        img = load_image(entry.image)
        out = os.path.join(overlay_dir, f"{manifest.name}_{record.image}")
        if not out.lower().endswith(".png"):
            out = os.path.splitext(out)[0] + ".png"
        save_image(out, _draw_overlay(img, record.prediction, gt=record.gt))


def _cmd_synth(args, parser) -> int:
    spec_kwargs = {}
    if args.spec:
        with open(args.spec) as fh:
            spec_kwargs.update(json.load(fh))
    for key in ("size", "center", "n_rings", "ring_spacing", "n_rays", "eccentricity",
                "noise_sigma", "degraded_radius", "seed"):
        value = getattr(args, key)
        if value is not None:
            spec_kwargs[key] = value
    if "size" in spec_kwargs:
        spec_kwargs["size"] = tuple(spec_kwargs["size"])
    if "center" in spec_kwargs:
        spec_kwargs["center"] = tuple(spec_kwargs["center"])
    try:
        spec = WebSpec(**spec_kwargs)
    except (InvalidInputError, TypeError) as exc:
        parser.error(str(exc))
    os.makedirs(args.out_dir, exist_ok=True)
    paths = save_web(spec, args.out_dir, name=args.name)
    print(json.dumps(paths))
    return 0


def _cmd_gridsearch(args, parser) -> int:
    params, pcl = _resolve_params(args, parser)
    manifests = []
    for path in args.manifest:
        if path.endswith(".csv"):
            manifests.append(load_manifest(path))
        else:
            manifests.extend(load_collection_config(path))
    raw = _parse_kv(args.grid)
    grid = {}
    for key in ("percent_lo", "st_w", "lo_w"):
        if key not in raw:
            parser.error(f"grid file must define {key}")
        ctor = _PARAM_SPECS[key][0]
        grid[key] = [ctor(tok) for tok in raw[key].split(",") if tok.strip()]
    best, rows = grid_search(manifests, grid, args.method, params, pcl)
    os.makedirs(args.out_dir, exist_ok=True)
    write_grid_csv(os.path.join(args.out_dir, "grid_scores.csv"), rows)
    best_payload = {
        "percent_lo": best.percent_lo,
        "st_w": best.st_w,
        "lo_w": best.lo_w,
        "mean_pixel_dist": best.mean_pixel_dist,
    }
    with open(os.path.join(args.out_dir, "best_params.json"), "w") as fh:
        json.dump(best_payload, fh, indent=2)
        fh.write("\n")
    print(json.dumps(best_payload))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pithdetect",
        description="Wood pith detection from cross-section images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_detect = sub.add_parser("detect", help="detect the pith in one image")
    p_detect.add_argument("image", help="input PNG/JPEG")
    p_detect.add_argument("--mask", help="single-channel PNG, nonzero = slice foreground")
    p_detect.add_argument("--full-foreground", action="store_true",
                          help="assert the image has no background (no mask needed)")
    p_detect.add_argument("--output", help="also write the result JSON here")
    p_detect.add_argument("--overlay", help="write an overlay PNG with the prediction marked")
    p_detect.add_argument("--debug-dir", help="dump orientation/coherence planes and segment CSVs")
    _add_param_flags(p_detect)

    p_eval = sub.add_parser("eval", help="evaluate a detector over annotated collections")
    p_eval.add_argument("manifest", nargs="+",
                        help="collection CSV (image,mask,gt_x,gt_y) or a name=csv listing file")
    p_eval.add_argument("--out-dir", default="eval_out", help="output directory (default: %(default)s)")
    p_eval.add_argument("--workers", type=int, default=1,
                        help="parallel image workers; keep 1 for timing fidelity (default: %(default)s)")
    p_eval.add_argument("--overlay-dir",
                        help="also write per-image overlay PNGs with prediction and ground truth")
    p_eval.add_argument("--no-timing", action="store_true",
                        help="omit wall-clock columns so the output files are bitwise-reproducible")
    _add_param_flags(p_eval)

    p_synth = sub.add_parser("synth", help="generate a synthetic web image with ground truth")
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--name", default="web")
    p_synth.add_argument("--spec", help="JSON file with generator fields (flags override it)")
    p_synth.add_argument("--size", type=int, nargs=2, metavar=("W", "H"), default=None)
    p_synth.add_argument("--center", type=float, nargs=2, metavar=("X", "Y"), default=None)
    p_synth.add_argument("--n-rings", dest="n_rings", type=int, default=None)
    p_synth.add_argument("--ring-spacing", dest="ring_spacing", type=float, default=None)
    p_synth.add_argument("--n-rays", dest="n_rays", type=int, default=None)
    p_synth.add_argument("--eccentricity", type=float, default=None)
    p_synth.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)
    p_synth.add_argument("--degraded-radius", dest="degraded_radius", type=float, default=None)
    p_synth.add_argument("--seed", type=int, default=None)

    p_grid = sub.add_parser("gridsearch", help="sweep percent_lo, st_w, lo_w over collections")
    p_grid.add_argument("manifest", nargs="+")
    p_grid.add_argument("--grid", required=True,
                        help="key=value file with comma lists for percent_lo, st_w, lo_w")
    p_grid.add_argument("--out-dir", default="grid_out")
    _add_param_flags(p_grid)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "detect": _cmd_detect,
        "eval": _cmd_eval,
        "synth": _cmd_synth,
        "gridsearch": _cmd_gridsearch,
    }
    try:
        return handlers[args.command](args, parser)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
