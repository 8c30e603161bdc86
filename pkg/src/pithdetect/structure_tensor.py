"""Gaussian-windowed 2D structure tensor with per-pixel orientation and coherence."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError

# Absolute guard on the tensor trace below which a pixel counts as flat.
# Intensities live in [0, 1], so any real texture sits far above this.
_TRACE_GUARD = 1e-12


@dataclass(frozen=True)
class StParams:
    """Structure-tensor smoothing window: std-dev and odd kernel side in pixels."""

    st_sigma: float = 1.2
    st_w: int = 3

    def __post_init__(self):
        if not self.st_sigma > 0:
            raise InvalidInputError("st_sigma must be positive")
        if self.st_w < 3 or self.st_w % 2 == 0:
            raise InvalidInputError("st_w must be odd and >= 3")


@dataclass(frozen=True)
class TensorField:
    """Per-pixel symmetric 2x2 tensor, stored as its three distinct planes."""

    j11: np.ndarray
    j12: np.ndarray
    j22: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.j11.shape


def gaussian_kernel1d(sigma: float, size: int) -> np.ndarray:
    """Gaussian taps truncated to ``size`` samples and renormalized to sum 1."""
    radius = size // 2
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def compute_tensor(ix: np.ndarray, iy: np.ndarray, params: StParams) -> TensorField:
    """Smooth the gradient outer products with the normalized Gaussian window.

    The 2D window is separable, so each plane gets two 1D passes; borders
    replicate, matching the derivative stencil.
    """
    ix = np.asarray(ix, dtype=np.float64)
    iy = np.asarray(iy, dtype=np.float64)
    if ix.shape != iy.shape:
        raise InvalidInputError(f"gradient shapes differ: {ix.shape} vs {iy.shape}")
    kernel = gaussian_kernel1d(params.st_sigma, params.st_w)

    def smooth(plane):
        out = ndimage.correlate1d(plane, kernel, axis=0, mode="nearest")
        return ndimage.correlate1d(out, kernel, axis=1, mode="nearest")

    return TensorField(j11=smooth(ix * ix), j12=smooth(ix * iy), j22=smooth(iy * iy))


def eigenvalues(tensor: TensorField) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form eigenvalues of the 2x2 tensor, largest first."""
    trace = tensor.j11 + tensor.j22
    diff = tensor.j11 - tensor.j22
    spread = np.sqrt(diff * diff + 4.0 * tensor.j12 * tensor.j12)
    return (trace + spread) / 2.0, (trace - spread) / 2.0


def orientation(tensor: TensorField) -> np.ndarray:
    """Angle of the dominant eigenvector (the averaged gradient direction), in [0, pi).

    The dominant-gradient convention is deliberate: on ring-like textures the
    gradient points across the rings, i.e. along the radius, so the sampled
    segments support lines that converge at the center. The other common
    convention (iso-intensity direction, a pi/2 shift obtained by negating the
    second arctangent argument) would make them tangential and break the
    convergence cost downstream; see the concentric-circles test that pins
    this choice. Near-zero tensors get angle 0 and are flagged by coherence 0.
    """
    angle = 0.5 * np.arctan2(2.0 * tensor.j12, tensor.j11 - tensor.j22)
    angle = np.mod(angle, np.pi)
    angle[tensor.j11 + tensor.j22 <= _TRACE_GUARD] = 0.0
    return angle


def coherence(tensor: TensorField) -> np.ndarray:
    """Anisotropy measure ((l1 - l2) / (l1 + l2))^2 in [0, 1]; 0 on flat pixels."""
    lam1, lam2 = eigenvalues(tensor)
    total = lam1 + lam2
    out = np.zeros_like(total)
    valid = total > _TRACE_GUARD
    ratio = (lam1[valid] - lam2[valid]) / total[valid]
    out[valid] = np.clip(ratio * ratio, 0.0, 1.0)
    return out


def orientation_field(
    ix: np.ndarray, iy: np.ndarray, params: StParams
) -> tuple[np.ndarray, np.ndarray]:
    """Convenience wrapper returning the (orientation, coherence) planes."""
    tensor = compute_tensor(ix, iy, params)
    return orientation(tensor), coherence(tensor)


def dump_plane(path: str, plane: np.ndarray) -> None:
    """Debug dump: little-endian uint32 width, height, then row-major float32 data."""
    plane = np.asarray(plane)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", plane.shape[1], plane.shape[0]))
        fh.write(plane.astype("<f4").tobytes())


def read_plane(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        width, height = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<f4")
    return data.reshape(height, width)
