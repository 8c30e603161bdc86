"""Dataset ingestion, the normalized-error metric, per-collection aggregation,
and grid-search parameter tuning."""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import DetectionFailedError, InvalidInputError
from .imgproc import SliceMask, full_foreground_mask, load_image, load_mask
from .lo_sampler import LoSamplerParams
from .pclines import PclinesParams, detect_pith_apd_pcl
from .solver import DetectorParams, apd_params, apd_pcl_params, detect_pith_apd
from .structure_tensor import StParams

METHODS = ("apd", "apd-pcl")


@dataclass(frozen=True)
class ManifestEntry:
    image: str
    mask: Optional[str]  # None means the image is background-free
    gt: tuple[float, float]  # original-frame pixels


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    entries: tuple[ManifestEntry, ...]


@dataclass(frozen=True)
class EvalRecord:
    image: str
    prediction: tuple[float, float]
    gt: tuple[float, float]
    err: float  # percent of the equivalent radius
    elapsed_ms: float
    failed: bool


@dataclass(frozen=True)
class MetricsTable:
    collection: str
    n_images: int
    mean_err: float
    std_err: float
    median_err: float
    max_err: float
    false_negatives: int
    mean_elapsed_ms: float


def load_manifest(path: str, name: Optional[str] = None) -> DatasetManifest:
    """Read a collection CSV with columns image,mask,gt_x,gt_y.

    Relative paths resolve against the CSV's directory; an empty mask column
    means the image is background-free and gets an all-foreground mask.
    """
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"image", "mask", "gt_x", "gt_y"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise InvalidInputError(f"manifest {path} must have columns image,mask,gt_x,gt_y")
        for row in reader:
            image = row["image"].strip()
            if not image:
                continue
            mask = row["mask"].strip() or None
            entries.append(
                ManifestEntry(
                    image=os.path.join(base, image) if not os.path.isabs(image) else image,
                    mask=(os.path.join(base, mask) if mask and not os.path.isabs(mask) else mask),
                    gt=(float(row["gt_x"]), float(row["gt_y"])),
                )
            )
    stem = os.path.splitext(os.path.basename(path))[0]
    return DatasetManifest(name=name or stem, entries=tuple(entries))


def load_collection_config(path: str) -> list[DatasetManifest]:
    """Read a flat ``name = path/to/manifest.csv`` file listing collections."""
    base = os.path.dirname(os.path.abspath(path))
    manifests = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidInputError(f"bad collection line (expected name = csv): {line!r}")
            name, csv_path = (part.strip() for part in line.split("=", 1))
            if not os.path.isabs(csv_path):
                csv_path = os.path.join(base, csv_path)
            manifests.append(load_manifest(csv_path, name=name))
    return manifests


def equivalent_radius(mask: SliceMask) -> float:
    """Half the larger side of the slice bounding box, in pixels."""
    bw, bh = mask.bbox_size
    return max(bw, bh) / 2.0


def normalized_error(pred, gt, mask: SliceMask) -> float:
    """Prediction-to-ground-truth distance as a percentage of the equivalent radius."""
    dist = float(np.hypot(pred[0] - gt[0], pred[1] - gt[1]))
    return 100.0 * dist / equivalent_radius(mask)


def _detect(img, mask, method, params, pcl_params):
    if method == "apd":
        return detect_pith_apd(img, mask, params)
    if method == "apd-pcl":
        return detect_pith_apd_pcl(img, mask, params, pcl_params)
    raise InvalidInputError(f"unknown method {method!r}; expected one of {METHODS}")


def _eval_entry(args):
    """Returns an EvalRecord, or a skip-reason string for unreadable entries."""
    entry, method, params, pcl_params = args
    try:
        img = load_image(entry.image)
        mask = load_mask(entry.mask) if entry.mask else full_foreground_mask(img.shape[:2])
        if mask.shape != img.shape[:2]:
            raise InvalidInputError("mask and image dimensions differ")
    except InvalidInputError as exc:
        return f"{entry.image}: {exc}"
    start = time.perf_counter()
    try:
        estimate = _detect(img, mask, method, params, pcl_params)
        prediction = estimate.c_original
        failed = False
    except DetectionFailedError:
        h, w = img.shape[:2]
        prediction = (w / 2.0, h / 2.0)
        failed = True
    elapsed_ms = (time.perf_counter() - start) * 1000.0
    return EvalRecord(
        image=os.path.basename(entry.image),
        prediction=(float(prediction[0]), float(prediction[1])),
        gt=entry.gt,
        err=normalized_error(prediction, entry.gt, mask),
        elapsed_ms=elapsed_ms,
        failed=failed,
    )


def aggregate(records: Sequence[EvalRecord], collection: str) -> MetricsTable:
    """Collapse per-image records into one row; empty input gives a NaN row."""
    if not records:
        return MetricsTable(collection, 0, float("nan"), float("nan"), float("nan"),
                            float("nan"), 0, float("nan"))
    errs = np.array([r.err for r in records])
    times = np.array([r.elapsed_ms for r in records])
    return MetricsTable(
        collection=collection,
        n_images=len(records),
        mean_err=float(errs.mean()),
        std_err=float(errs.std()),  # population std
        median_err=float(np.median(errs)),
        max_err=float(errs.max()),
        false_negatives=int(sum(r.failed for r in records)),
        mean_elapsed_ms=float(times.mean()),
    )


def evaluate(
    manifest: DatasetManifest,
    method: str = "apd",
    params: Optional[DetectorParams] = None,
    pcl_params: Optional[PclinesParams] = None,
    workers: int = 1,
) -> tuple[MetricsTable, list[EvalRecord]]:
    """Run the selected detector over a collection and aggregate the errors.

    Timing covers the detect call only (file I/O happens before the clock
    starts). Detection failures fall back to the image center and count as
    false negatives. Unreadable entries are reported, never silently dropped.
    """
    if method not in METHODS:
        raise InvalidInputError(f"unknown method {method!r}; expected one of {METHODS}")
    if params is None:
        params = apd_params() if method == "apd" else apd_pcl_params()
    jobs = [(entry, method, params, pcl_params) for entry in manifest.entries]
    records: list[EvalRecord] = []
    skipped: list[str] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records.extend(pool.map(_eval_entry, jobs))
    else:
        for job in jobs:
            try:
                records.append(_eval_entry(job))
            except InvalidInputError as exc:
                skipped.append(f"{job[0].image}: {exc}")
    if skipped:
        import sys

        for line in skipped:
            print(f"warning: skipped {line}", file=sys.stderr)
    return aggregate(records, manifest.name), records


def write_records_csv(path: str, records: Sequence[EvalRecord], include_timing: bool = True) -> None:
    """Per-image records. Timing columns are wall-clock and therefore not
    reproducible between runs; pass include_timing=False when the file is
    meant to be compared byte-for-byte across reruns."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["image", "pred_x", "pred_y", "gt_x", "gt_y", "err", "failed"]
        if include_timing:
            header.insert(6, "elapsed_ms")
        writer.writerow(header)
        for r in records:
            row = [r.image, f"{r.prediction[0]:.6f}", f"{r.prediction[1]:.6f}",
                   f"{r.gt[0]:.6f}", f"{r.gt[1]:.6f}", f"{r.err:.12g}", int(r.failed)]
            if include_timing:
                row.insert(6, f"{r.elapsed_ms:.3f}")
            writer.writerow(row)


def write_metrics_csv(path: str, tables: Sequence[MetricsTable], include_timing: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["collection", "n", "mean_err", "std_err", "median_err", "max_err",
                  "false_negatives"]
        if include_timing:
            header.append("mean_elapsed_ms")
        writer.writerow(header)
        for t in tables:
            row = [t.collection, t.n_images, f"{t.mean_err:.12g}", f"{t.std_err:.12g}",
                   f"{t.median_err:.12g}", f"{t.max_err:.12g}", t.false_negatives]
            if include_timing:
                row.append(f"{t.mean_elapsed_ms:.3f}")
            writer.writerow(row)


def write_metrics_json(path: str, tables: Sequence[MetricsTable], include_timing: bool = True) -> None:
    payload = []
    for t in tables:
        entry = dataclasses.asdict(t)
        if not include_timing:
            entry.pop("mean_elapsed_ms")
        payload.append(entry)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class GridResult:
    percent_lo: float
    st_w: int
    lo_w: int
    mean_pixel_dist: float  # original-frame pixels, the tuning objective
    mean_err: float  # normalized percent, reported for context


def grid_search(
    manifests: Sequence[DatasetManifest],
    grid: dict,
    method: str = "apd",
    base_params: Optional[DetectorParams] = None,
    pcl_params: Optional[PclinesParams] = None,
) -> tuple[GridResult, list[GridResult]]:
    """Exhaustive sweep of (percent_lo, st_w, lo_w); minimizes the mean pixel distance.

    The objective pools all images of all manifests. Ties break toward the
    lexicographically smaller (percent_lo, st_w, lo_w), which the ascending
    iteration order plus strict improvement guarantees.
    """
    if not manifests:
        raise InvalidInputError("grid_search needs at least one manifest")
    base = base_params or DetectorParams()
    rows: list[GridResult] = []
    best: Optional[GridResult] = None
    for percent_lo, st_w, lo_w in itertools.product(
        sorted(grid["percent_lo"]), sorted(grid["st_w"]), sorted(grid["lo_w"])
    ):
        params = replace(
            base,
            st=StParams(st_sigma=base.st.st_sigma, st_w=int(st_w)),
            lo=LoSamplerParams(lo_w=int(lo_w), percent_lo=float(percent_lo)),
        )
        dists: list[float] = []
        errs: list[float] = []
        for manifest in manifests:
            _, records = evaluate(manifest, method, params, pcl_params)
            dists.extend(np.hypot(r.prediction[0] - r.gt[0], r.prediction[1] - r.gt[1])
                         for r in records)
            errs.extend(r.err for r in records)
        row = GridResult(
            percent_lo=float(percent_lo),
            st_w=int(st_w),
            lo_w=int(lo_w),
            mean_pixel_dist=float(np.mean(dists)) if dists else float("nan"),
            mean_err=float(np.mean(errs)) if errs else float("nan"),
        )
        rows.append(row)
        if best is None or row.mean_pixel_dist < best.mean_pixel_dist:
            best = row
    return best, rows


def write_grid_csv(path: str, rows: Sequence[GridResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["percent_lo", "st_w", "lo_w", "mean_pixel_dist", "mean_err"])
        for r in rows:
            writer.writerow(
                [r.percent_lo, r.st_w, r.lo_w, f"{r.mean_pixel_dist:.12g}", f"{r.mean_err:.12g}"]
            )
