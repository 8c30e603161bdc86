"""Center detection: a collinearity cost over sampled orientation segments,
maximized by a box-clamped quasi-Newton ascent inside a shrinking-region
refinement loop.

The cost of a candidate center c is the mean squared cosine of the angle
between each segment and the ray from c through the segment midpoint; it is 1
exactly when every segment lies on a line through c.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from .errors import DetectionFailedError, FilteringFailedError, InvalidInputError
from .imgproc import ResizeInfo, SliceMask, apply_mask, derivatives, resize_mask, resize_to_width, to_grayscale
from .lo_sampler import LoSamplerParams, LoSet, sample_lo
from .structure_tensor import StParams, coherence, compute_tensor, orientation

# Distance below which a query point counts as sitting on a segment midpoint.
_SINGULAR_DIST = 1e-9


class SingularPointError(RuntimeError):
    """The query point coincides with a segment midpoint; gradient undefined there."""


@dataclass(frozen=True)
class SolverParams:
    r_f: float = 7.0  # refinement square is max(image side) / r_f wide
    eps: float = 1e-5  # stop when the center moves less than this, pixels
    max_iter: int = 5
    seed: int = 0  # used only for the singular-point escape perturbation

    def __post_init__(self):
        if not self.r_f > 1:
            raise InvalidInputError("r_f must be > 1")
        if not self.eps > 0:
            raise InvalidInputError("eps must be positive")
        if self.max_iter < 1:
            raise InvalidInputError("max_iter must be >= 1")


@dataclass(frozen=True)
class DetectorParams:
    """Everything one detection run needs, bundled."""

    st: StParams = field(default_factory=StParams)
    lo: LoSamplerParams = field(default_factory=LoSamplerParams)
    solver: SolverParams = field(default_factory=SolverParams)
    working_width: int = 640


def apd_params(**overrides) -> DetectorParams:
    """Defaults for the plain detector (3x3 tensor window, 3x3 sampling patches)."""
    return DetectorParams(**overrides) if overrides else DetectorParams()


def apd_pcl_params(**overrides) -> DetectorParams:
    """Defaults for the filtered variant: wider 7x7 tensor window and patches."""
    base = dict(st=StParams(st_w=7), lo=LoSamplerParams(lo_w=7))
    base.update(overrides)
    return DetectorParams(**base)


@dataclass
class PithEstimate:
    c_working: tuple[float, float]
    c_original: tuple[float, float]
    iterations: int
    trace: list[tuple[float, float]]
    converged: bool
    flags: list[str]

    def to_json(self, image_name: str) -> dict:
        return {
            "image": image_name,
            "pith_x": float(self.c_original[0]),
            "pith_y": float(self.c_original[1]),
            "frame": "original",
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }

    def to_json_str(self, image_name: str) -> str:
        return json.dumps(self.to_json(image_name))


def cost(c, lo: LoSet) -> float:
    """Mean squared cosine between each segment and the ray from c to its midpoint.

    Segments whose midpoint coincides with c (closer than 1e-9 px) count as
    perfectly collinear by convention.
    """
    if len(lo) == 0:
        raise InvalidInputError("cost needs at least one segment")
    c = np.asarray(c, dtype=np.float64)
    rays = lo.midpoints - c
    sq_norms = np.einsum("ij,ij->i", rays, rays)
    dots = np.einsum("ij,ij->i", rays, lo.directions)
    singular = sq_norms < _SINGULAR_DIST * _SINGULAR_DIST
    cos_sq = np.ones_like(sq_norms)
    cos_sq[~singular] = dots[~singular] ** 2 / sq_norms[~singular]
    return float(cos_sq.mean())


def cost_gradient(c, lo: LoSet) -> np.ndarray:
    """Analytic gradient of the collinearity cost at c.

    For one segment with midpoint ray u = p - c and unit direction d, the
    contribution is 2 (u.d) ((u.d) u - (u.u) d) / (u.u)^2. Raises
    SingularPointError when c sits on a midpoint.
    """
    if len(lo) == 0:
        raise InvalidInputError("cost_gradient needs at least one segment")
    c = np.asarray(c, dtype=np.float64)
    rays = lo.midpoints - c
    sq_norms = np.einsum("ij,ij->i", rays, rays)
    if np.any(sq_norms < _SINGULAR_DIST * _SINGULAR_DIST):
        raise SingularPointError("query point coincides with a segment midpoint")
    dots = np.einsum("ij,ij->i", rays, lo.directions)
    scale = 2.0 * dots / (sq_norms * sq_norms)
    terms = scale[:, None] * (dots[:, None] * rays - sq_norms[:, None] * lo.directions)
    return terms.mean(axis=0)


def _cost_and_gradient(c, lo: LoSet) -> tuple[float, np.ndarray]:
    """Cost and gradient in one pass; the optimizer's hot path."""
    c = np.asarray(c, dtype=np.float64)
    rays = lo.midpoints - c
    sq_norms = np.einsum("ij,ij->i", rays, rays)
    if np.any(sq_norms < _SINGULAR_DIST * _SINGULAR_DIST):
        raise SingularPointError("query point coincides with a segment midpoint")
    dots = np.einsum("ij,ij->i", rays, lo.directions)
    value = float((dots * dots / sq_norms).mean())
    scale = 2.0 * dots / (sq_norms * sq_norms)
    grad = (
        (scale * dots) @ rays - (scale * sq_norms) @ lo.directions
    ) / len(lo)
    return value, grad


def least_squares_init(lo: LoSet, region: tuple[float, float, float, float]) -> tuple[np.ndarray, bool]:
    """Point minimizing the summed squared distance to all segment-supported lines.

    Solves the 2x2 normal equations of min_c sum_i (n_i . (c - p_i))^2 with
    n_i the unit normal of segment i, then clamps into the region bbox.
    Returns (point, used_fallback); a rank-deficient system (all segments
    parallel) falls back to the bbox center.
    """
    if len(lo) == 0:
        raise InvalidInputError("least_squares_init needs at least one segment")
    x0, y0, x1, y1 = region
    normals = np.stack([-np.sin(lo.angles), np.cos(lo.angles)], axis=1)
    lhs = normals.T @ normals
    rhs = normals.T @ np.einsum("ij,ij->i", normals, lo.midpoints)
    det = lhs[0, 0] * lhs[1, 1] - lhs[0, 1] * lhs[1, 0]
    # trace(lhs) == N exactly (unit normals); rank 1 means all directions equal.
    if det <= 1e-10 * (len(lo) / 2.0) ** 2:
        center = np.array([(x0 + x1) / 2.0, (y0 + y1) / 2.0])
        return center, True
    solution = np.linalg.solve(lhs, rhs)
    return np.clip(solution, (x0, y0), (x1, y1)), False


def optimize_center(
    lo: LoSet,
    region: tuple[float, float, float, float],
    c_init,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Maximize the collinearity cost from c_init, staying inside the region bbox.

    Box-constrained quasi-Newton ascent (L-BFGS-B on the negated cost with the
    analytic gradient; gradient tolerance 1e-10, function tolerance at machine
    precision so steps shrink below 1e-8 px before stopping). A query landing
    exactly on a segment midpoint has no gradient; such evaluations are
    retried at a tiny seeded perturbation, which cannot change the optimum
    (the singular set has measure zero).
    """
    if len(lo) == 0:
        raise InvalidInputError("optimize_center needs at least one segment")
    if rng is None:
        rng = np.random.default_rng(0)
    x0, y0, x1, y1 = region
    lower = np.array([x0, y0], dtype=np.float64)
    upper = np.array([x1, y1], dtype=np.float64)

    def negated(point):
        for _ in range(8):
            try:
                value, grad = _cost_and_gradient(point, lo)
                return -value, -grad
            except SingularPointError:
                point = np.clip(point + rng.normal(0.0, 1e-6, size=2), lower, upper)
        return -cost(point, lo), np.zeros(2)

    start = np.clip(np.asarray(c_init, dtype=np.float64), lower, upper)
    result = scipy_minimize(
        negated,
        start,
        jac=True,
        method="L-BFGS-B",
        bounds=[(x0, x1), (y0, y1)],
        options={"gtol": 1e-10, "ftol": 1e-16, "maxiter": 200},
    )
    best = np.clip(result.x, lower, upper)
    # Armijo line searches are monotone, but guard the contract anyway.
    if -result.fun < cost(start, lo):
        return start
    return best


def filter_lo_around(lo: LoSet, c, r_f: float, image_size: tuple[int, int]) -> LoSet:
    """Keep segments whose midpoint falls in the refinement square around c.

    The square has side max(w, h) / r_f, is centered at c, and is intersected
    with the image bounds.
    """
    if not r_f > 1:
        raise InvalidInputError("r_f must be > 1")
    width, height = image_size
    half = max(width, height) / r_f / 2.0
    cx, cy = float(c[0]), float(c[1])
    x_lo, x_hi = max(cx - half, 0.0), min(cx + half, width - 1.0)
    y_lo, y_hi = max(cy - half, 0.0), min(cy + half, height - 1.0)
    mx, my = lo.midpoints[:, 0], lo.midpoints[:, 1]
    keep = (mx >= x_lo) & (mx <= x_hi) & (my >= y_lo) & (my <= y_hi)
    return lo.subset(np.nonzero(keep)[0])


LoFilter = Callable[[LoSet, tuple[int, int]], LoSet]


def detect_pith(
    img: np.ndarray,
    mask: SliceMask,
    params: DetectorParams,
    lo_filter: Optional[LoFilter] = None,
) -> PithEstimate:
    """Full detection pipeline on an original-frame image and mask.

    Preprocesses (grayscale, background zeroing, resize to the working width),
    estimates and samples local orientations, optionally filters the segment
    set, then runs the refinement loop: optimize, shrink the region around the
    estimate, re-optimize, until the move is below eps or max_iter is reached.
    """
    gray = to_grayscale(img)
    masked = apply_mask(gray, mask)
    working, info = resize_to_width(masked, params.working_width)
    working_mask = resize_mask(mask, params.working_width)

    ix, iy = derivatives(working)
    tensor = compute_tensor(ix, iy, params.st)
    lo_full = sample_lo(orientation(tensor), coherence(tensor), working_mask, params.lo)
    if len(lo_full) == 0:
        raise DetectionFailedError("no orientation segment passed the coherence gate")

    flags: list[str] = []
    image_size = (working.shape[1], working.shape[0])
    if lo_filter is not None:
        try:
            lo_full = lo_filter(lo_full, image_size)
        except FilteringFailedError:
            flags.append("filter-fallback")

    region = tuple(float(v) for v in working_mask.bbox)
    rng = np.random.default_rng(params.solver.seed)
    center, used_fallback = least_squares_init(lo_full, region)
    if used_fallback:
        flags.append("init-fallback")
    trace = [(float(center[0]), float(center[1]))]

    converged = False
    iterations = 0
    lo_current = lo_full
    for step in range(1, params.solver.max_iter + 1):
        if step > 1:
            lo_current = filter_lo_around(lo_full, center, params.solver.r_f, image_size)
            if len(lo_current) == 0:
                flags.append("empty-refinement-region")
                break
            # each round re-initializes at the least-squares solution of the
            # segments actually in play, then polishes it
            init, fell_back = least_squares_init(lo_current, region)
            if fell_back:
                init = center
        else:
            init = center
        new_center = optimize_center(lo_current, region, init, rng=rng)
        iterations = step
        trace.append((float(new_center[0]), float(new_center[1])))
        displacement = np.hypot(new_center[0] - center[0], new_center[1] - center[1])
        center = new_center
        if displacement < params.solver.eps:
            converged = True
            break

    original = (float(center[0]) * info.scale, float(center[1]) * info.scale)
    return PithEstimate(
        c_working=(float(center[0]), float(center[1])),
        c_original=original,
        iterations=iterations,
        trace=trace,
        converged=converged,
        flags=flags,
    )


def detect_pith_apd(
    img: np.ndarray, mask: SliceMask, params: Optional[DetectorParams] = None
) -> PithEstimate:
    """Plain detector: no segment filtering before the refinement loop."""
    return detect_pith(img, mask, params or apd_params())
