"""Robust segment filtering via the parallel-coordinates line transform.

Every segment-supported line becomes a point in one of two bounded dual
strips (straight for non-positive slopes, twisted for non-negative ones).
Lines through a common point map to collinear dual points, so a RANSAC line
fit in dual space selects the convergent subset. Tangential structures
(cracks, fungus filaments) are caught by repeating the selection on the
90-degree-rotated segments, and a final pass over the combined set prunes
leftover outliers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import FilteringFailedError, InvalidInputError
from .imgproc import SliceMask
from .lo_sampler import LoSegment, LoSet
from .solver import DetectorParams, PithEstimate, apd_pcl_params, detect_pith

_RANSAC_CHUNK = 256  # models scored per vectorized block


@dataclass(frozen=True)
class PclinesParams:
    d: float = 1.0  # inter-axis distance of the dual strips, normalized units
    ransac_outlier_th: float = 0.03  # residual threshold, normalized dual units
    ransac_iters: int = 1000
    ransac_min_inliers: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.d > 0:
            raise InvalidInputError("d must be positive")
        if not self.ransac_outlier_th > 0:
            raise InvalidInputError("ransac_outlier_th must be positive")
        if self.ransac_iters < 1:
            raise InvalidInputError("ransac_iters must be >= 1")
        if self.ransac_min_inliers < 2:
            raise InvalidInputError("ransac_min_inliers must be >= 2")


@dataclass(frozen=True)
class DualPoint:
    space: str  # "straight" or "twisted"
    u: float
    v: float
    source_index: int


def _duals_from_arrays(p1: np.ndarray, p2: np.ndarray, image_size, d: float):
    """Dual coordinates for the infinite lines through p1[i], p2[i].

    Points are normalized by max(w, h) first. The homogeneous form keeps
    vertical lines finite: with direction (dx, dy), a line lands in the
    straight strip u in [0, d] iff dx * dy <= 0 (slope <= 0, including the
    horizontal and vertical boundary cases), otherwise in the twisted strip
    u in [-d, 0]. Returns (u, v, straight_flag) arrays.
    """
    norm = float(max(image_size))
    if norm <= 0:
        raise InvalidInputError("image size must be positive")
    a = np.asarray(p1, dtype=np.float64) / norm
    b = np.asarray(p2, dtype=np.float64) / norm
    delta = b - a
    dx, dy = delta[:, 0], delta[:, 1]
    if np.any((dx == 0.0) & (dy == 0.0)):
        raise InvalidInputError("zero-length segment has no supporting line")
    # cross = x1*dy - y1*dx; the line is {p : (p - a) x delta = 0}.
    cross = a[:, 0] * dy - a[:, 1] * dx
    straight = dx * dy <= 0.0
    u = np.empty_like(dx)
    v = np.empty_like(dx)
    denom_s = dx - dy  # nonzero whenever dx*dy <= 0 and the segment has length
    u[straight] = d * dx[straight] / denom_s[straight]
    v[straight] = -cross[straight] / denom_s[straight]
    denom_t = dx + dy  # nonzero whenever dx*dy > 0
    u[~straight] = -d * dx[~straight] / denom_t[~straight]
    v[~straight] = cross[~straight] / denom_t[~straight]
    return u, v, straight


def line_to_dual(seg: LoSegment, image_size: tuple[int, int], d: float = 1.0) -> DualPoint:
    """Dual point of one segment's supporting line; the strip picks the space."""
    u, v, straight = _duals_from_arrays(
        np.array([seg.p1]), np.array([seg.p2]), image_size, d
    )
    return DualPoint(
        space="straight" if straight[0] else "twisted",
        u=float(u[0]),
        v=float(v[0]),
        source_index=0,
    )


def dual_to_line(point: DualPoint, d: float = 1.0) -> tuple[float, float]:
    """Invert the dual mapping back to (slope, intercept) in normalized coordinates."""
    if point.u == 0.0:
        raise InvalidInputError("boundary dual point maps to a vertical line")
    if point.space == "straight":
        slope = 1.0 - d / point.u
    else:
        slope = -1.0 - d / point.u
    return slope, point.v * d / point.u


def lo_duals(lo: LoSet, image_size: tuple[int, int], d: float = 1.0) -> list[DualPoint]:
    """Dual points of every segment, tagged with their source indices."""
    u, v, straight = _duals_from_arrays(lo.p1, lo.p2, image_size, d)
    return [
        DualPoint("straight" if straight[i] else "twisted", float(u[i]), float(v[i]), i)
        for i in range(len(lo))
    ]


def _ransac_indices(xy: np.ndarray, params: PclinesParams, rng: np.random.Generator) -> np.ndarray:
    """Indices of the best RANSAC line's inliers, or empty if below the gate.

    Two-point models; residual is perpendicular distance; the best model has
    the most inliers, ties going to the smaller inlier residual sum, then to
    the earlier iteration.
    """
    n = xy.shape[0]
    if n < 2:
        return np.zeros(0, dtype=np.intp)
    # Uniform distinct index pairs, drawn without a Python-level loop.
    first = rng.integers(0, n, size=params.ransac_iters)
    second = (first + rng.integers(1, n, size=params.ransac_iters)) % n

    anchors = xy[first]
    others = xy[second]
    tangents = others - anchors
    lengths = np.hypot(tangents[:, 0], tangents[:, 1])
    degenerate = lengths == 0.0
    lengths[degenerate] = 1.0
    normals = np.stack([-tangents[:, 1], tangents[:, 0]], axis=1) / lengths[:, None]
    offsets = np.einsum("ij,ij->i", normals, anchors)

    # Scoring runs in float32: residuals are compared against a threshold
    # orders of magnitude above single precision, and halving the memory
    # traffic dominates the runtime of the (points x models) sweep.
    xy32 = xy.astype(np.float32)
    normals32 = normals.T.astype(np.float32)
    offsets32 = offsets.astype(np.float32)
    counts = np.zeros(params.ransac_iters, dtype=np.int64)
    buffer = np.empty((n, _RANSAC_CHUNK), dtype=np.float32)
    for start in range(0, params.ransac_iters, _RANSAC_CHUNK):
        stop = min(start + _RANSAC_CHUNK, params.ransac_iters)
        block = buffer[:, : stop - start]
        np.matmul(xy32, normals32[:, start:stop], out=block)
        block -= offsets32[start:stop]
        np.abs(block, out=block)
        counts[start:stop] = (block <= params.ransac_outlier_th).sum(axis=0)
    counts[degenerate] = 0

    best_count = int(counts.max())
    if best_count < params.ransac_min_inliers:
        return np.zeros(0, dtype=np.intp)
    candidates = np.nonzero(counts == best_count)[0]
    best_model = candidates[0]
    if candidates.size > 1:
        sums = np.empty(candidates.size)
        for k, model in enumerate(candidates):
            res = np.abs(xy32 @ normals32[:, model] - offsets32[model])
            sums[k] = res[res <= params.ransac_outlier_th].sum()
        best_model = candidates[int(np.argmin(sums))]
    residuals = np.abs(xy32 @ normals32[:, best_model] - offsets32[best_model])
    return np.nonzero(residuals <= params.ransac_outlier_th)[0]


def ransac_line_cluster(
    points: Sequence[DualPoint],
    params: PclinesParams,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Positions (into ``points``) of the dominant line-shaped cluster."""
    if rng is None:
        rng = np.random.default_rng(params.seed)
    if len(points) < 2:
        return np.zeros(0, dtype=np.intp)
    xy = np.array([[p.u, p.v] for p in points], dtype=np.float64)
    return _ransac_indices(xy, params, rng)


def select_converging(
    lo: LoSet,
    image_size: tuple[int, int],
    params: PclinesParams,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Segment indices whose supporting lines converge, per sub-space RANSAC.

    The straight and twisted dual clouds are clustered independently; the
    result is the union of both inlier sets minus any index selected in both.
    """
    if len(lo) == 0:
        raise InvalidInputError("select_converging needs a non-empty segment set")
    if rng is None:
        rng = np.random.default_rng(params.seed)
    u, v, straight = _duals_from_arrays(lo.p1, lo.p2, image_size, params.d)
    selected: list[np.ndarray] = []
    for space_mask in (straight, ~straight):
        source = np.nonzero(space_mask)[0]
        if source.size < 2:
            selected.append(np.zeros(0, dtype=np.intp))
            continue
        xy = np.stack([u[source], v[source]], axis=1)
        inliers = _ransac_indices(xy, params, rng)
        selected.append(source[inliers])
    both = np.intersect1d(selected[0], selected[1])
    union = np.union1d(selected[0], selected[1])
    return np.setdiff1d(union, both)


def rotate_lo_90(lo: LoSet) -> LoSet:
    """Rotate every segment a quarter turn about its own midpoint."""
    return LoSet(lo.midpoints.copy(), np.mod(lo.angles + np.pi / 2.0, np.pi), lo.coherences.copy())


def pclines_filter(lo: LoSet, image_size: tuple[int, int], params: PclinesParams) -> LoSet:
    """Three-pass convergence filter over a segment set.

    Pass 1 keeps segments whose lines converge directly (ring structure).
    Pass 2 repeats on the quarter-turned set, catching radial structures such
    as cracks; those survivors stay rotated. Pass 3 re-filters the combined
    set to drop remaining outliers. Raises FilteringFailedError if nothing
    survives.
    """
    if len(lo) == 0:
        raise InvalidInputError("pclines_filter needs a non-empty segment set")
    rng = np.random.default_rng(params.seed)
    ring_idx = select_converging(lo, image_size, params, rng)
    rotated = rotate_lo_90(lo)
    radial_idx = select_converging(rotated, image_size, params, rng)
    combined = LoSet.concat(lo.subset(ring_idx), rotated.subset(radial_idx))
    if len(combined) == 0:
        raise FilteringFailedError("no convergent segment cluster found")
    final_idx = select_converging(combined, image_size, params, rng)
    if final_idx.size == 0:
        raise FilteringFailedError("re-filtering pass removed every segment")
    return combined.subset(final_idx)


def detect_pith_apd_pcl(
    img: np.ndarray,
    mask: SliceMask,
    params: Optional[DetectorParams] = None,
    pcl_params: Optional[PclinesParams] = None,
) -> PithEstimate:
    """Detector variant that convergence-filters the segments before solving.

    Falls back to the unfiltered set (flagged) when filtering fails, so noisy
    inputs degrade to the plain detector instead of erroring out.
    """
    params = params or apd_pcl_params()
    pcl = pcl_params or PclinesParams()

    def lo_filter(lo: LoSet, image_size: tuple[int, int]) -> LoSet:
        return pclines_filter(lo, image_size, pcl)

    return detect_pith(img, mask, params, lo_filter=lo_filter)


def save_duals_csv(
    path: str,
    lo: LoSet,
    image_size: tuple[int, int],
    params: PclinesParams,
) -> None:
    """Debug export of dual points with space tags and convergence flags."""
    duals = lo_duals(lo, image_size, params.d)
    chosen = set(int(i) for i in select_converging(lo, image_size, params))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "space", "u", "v", "inlier"])
        for p in duals:
            writer.writerow(
                [p.source_index, p.space, f"{p.u:.9f}", f"{p.v:.9f}", int(p.source_index in chosen)]
            )
