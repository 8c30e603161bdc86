"""Synthetic spider-web images and segment sets with known ground truth.

These generators are the oracle for the whole test suite: every geometric
claim about the detectors is checked against centers that are true by
construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .imgproc import SliceMask, save_image, save_mask
from .lo_sampler import LoSet

# Fungus-surrogate texture: angular frequency of the radial filaments.
_FILAMENT_FREQ = 48
# Ray (crack) rendering: gaussian cross-section width and darkening depth.
_RAY_SIGMA = 1.6
_RAY_DEPTH = 0.65


@dataclass(frozen=True)
class WebSpec:
    """Concentric-ring test image: a center, rings, optional rays and degradation.

    ``eccentricity`` compresses the rings toward the +x side of the center,
    with a distortion that grows with radius so the innermost rings stay
    nearly circular (growth asymmetry compounds outward); ``degraded_radius``
    replaces the innermost disc with a radial filament texture that mimics
    fungus damage; ``n_rays`` adds dark crack-like lines radiating from the
    center.
    """

    size: tuple[int, int] = (640, 640)  # (w, h)
    center: tuple[float, float] = (320.0, 320.0)
    n_rings: int = 12
    ring_spacing: float = 22.0
    n_rays: int = 0
    eccentricity: float = 0.0
    noise_sigma: float = 0.0
    degraded_radius: float = 0.0
    seed: int = 0

    def __post_init__(self):
        w, h = self.size
        cx, cy = self.center
        if not (0 <= cx < w and 0 <= cy < h):
            raise InvalidInputError("center must lie inside the image")
        if self.n_rings < 1:
            raise InvalidInputError("n_rings must be >= 1")
        if self.ring_spacing < 2:
            raise InvalidInputError("ring_spacing must be >= 2 pixels")
        if not 0.0 <= self.eccentricity < 1.0:
            raise InvalidInputError("eccentricity must be in [0, 1)")
        if self.noise_sigma < 0 or self.degraded_radius < 0 or self.n_rays < 0:
            raise InvalidInputError("noise_sigma, degraded_radius, n_rays must be >= 0")


@dataclass(frozen=True)
class LoSpec:
    """Synthetic segment set: radial (or tangential) directions around a center."""

    center: tuple[float, float] = (0.0, 0.0)
    n_segments: int = 500
    radial_noise_sigma: float = 0.0  # radians
    outlier_fraction: float = 0.0
    tangential: bool = False
    r_inner: float = 20.0
    r_outer: float = 200.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise InvalidInputError("outlier_fraction must be in [0, 1)")
        if self.n_segments < 1:
            raise InvalidInputError("n_segments must be >= 1")
        if not 0 < self.r_inner < self.r_outer:
            raise InvalidInputError("need 0 < r_inner < r_outer")


def generate_web(spec: WebSpec) -> tuple[np.ndarray, SliceMask, tuple[float, float]]:
    """Render the web image, its disc mask, and the ground-truth center.

    The ring profile is a radial sinusoid (smooth and band-limited, so the
    orientation estimate behaves predictably). Bit-identical for equal specs.
    """
    w, h = spec.size
    cx, cy = spec.center
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xs - cx, ys - cy
    rho = np.hypot(dx, dy)
    phi = np.arctan2(dy, dx)

    # Ring phase: eccentricity adds a radius-proportional compression toward
    # phi = 0, so ring k solves rho (1 + e rho cos(phi) / R_out) = k spacing.
    # Level sets stay nested (non-intersecting) for e < 0.4 within the mask.
    outer_radius = spec.n_rings * spec.ring_spacing
    rho_eff = rho * (1.0 + spec.eccentricity * rho * np.cos(phi) / outer_radius)
    img = 0.55 + 0.35 * np.cos(2.0 * np.pi * rho_eff / spec.ring_spacing)

    if spec.degraded_radius > 0:
        filaments = 0.55 + 0.35 * np.cos(_FILAMENT_FREQ * phi)
        blend = np.clip((rho - spec.degraded_radius) / 4.0, 0.0, 1.0)
        img = blend * img + (1.0 - blend) * filaments

    if spec.n_rays > 0:
        ray_angles = (np.arange(spec.n_rays) + 0.5) * 2.0 * np.pi / spec.n_rays
        for angle in ray_angles:
            ahead = np.cos(phi - angle) > 0.0
            dist = np.abs(np.sin(phi - angle)) * rho
            attenuation = _RAY_DEPTH * np.exp(-(dist * dist) / (2.0 * _RAY_SIGMA**2))
            img = img * (1.0 - np.where(ahead, attenuation, 0.0))

    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        img = img + rng.normal(0.0, spec.noise_sigma, size=img.shape)

    gray = np.clip(img, 0.0, 1.0)
    rgb = np.repeat((np.round(gray * 255.0)).astype(np.uint8)[:, :, None], 3, axis=2)
    mask = SliceMask(rho <= spec.n_rings * spec.ring_spacing)
    return rgb, mask, (float(cx), float(cy))


def generate_lo(spec: LoSpec) -> tuple[LoSet, tuple[float, float]]:
    """Segments with midpoints uniform in an annulus and known convergence point."""
    rng = np.random.default_rng(spec.seed)
    theta = rng.uniform(0.0, 2.0 * np.pi, spec.n_segments)
    # Area-uniform radius in the annulus.
    radius = np.sqrt(rng.uniform(spec.r_inner**2, spec.r_outer**2, spec.n_segments))
    midpoints = np.stack(
        [spec.center[0] + radius * np.cos(theta), spec.center[1] + radius * np.sin(theta)], axis=1
    )
    angles = np.mod(theta, np.pi)
    if spec.tangential:
        angles = np.mod(angles + np.pi / 2.0, np.pi)
    if spec.radial_noise_sigma > 0:
        angles = np.mod(angles + rng.normal(0.0, spec.radial_noise_sigma, spec.n_segments), np.pi)
    n_outliers = int(round(spec.outlier_fraction * spec.n_segments))
    if n_outliers:
        chosen = rng.choice(spec.n_segments, size=n_outliers, replace=False)
        angles[chosen] = rng.uniform(0.0, np.pi, n_outliers)
    return LoSet(midpoints, angles, np.ones(spec.n_segments)), (
        float(spec.center[0]),
        float(spec.center[1]),
    )


def save_web(spec: WebSpec, out_dir: str, name: str = "web") -> dict:
    """Write image, mask and ground-truth JSON; returns the paths written."""
    import os

    rgb, mask, center = generate_web(spec)
    paths = {
        "image": os.path.join(out_dir, f"{name}.png"),
        "mask": os.path.join(out_dir, f"{name}_mask.png"),
        "gt": os.path.join(out_dir, f"{name}_gt.json"),
    }
    save_image(paths["image"], rgb)
    save_mask(paths["mask"], mask)
    with open(paths["gt"], "w") as fh:
        json.dump({"pith_x": center[0], "pith_y": center[1], "frame": "original"}, fh)
        fh.write("\n")
    return paths
