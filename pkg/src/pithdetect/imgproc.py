"""Input standardization: grayscale conversion, background masking, resizing
to the working width, and the image derivatives every later stage builds on.

Conventions used throughout the package:
  * images are numpy arrays, row-major, origin top-left, x rightward (columns),
    y downward (rows);
  * an RGB image is (H, W, 3) uint8, an intensity field is (H, W) float64 in [0, 1];
  * file coordinates are always in the original (pre-resize) pixel frame.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import InvalidInputError

# Rec. 601 luma weights for R, G, B.
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class ResizeInfo:
    """Maps working-frame coordinates back to the original frame (multiply by scale)."""

    scale: float
    original_size: tuple[int, int]  # (w, h)


@dataclass(frozen=True)
class SliceMask:
    """Boolean foreground mask of a single slice, with its tight bounding box."""

    inside: np.ndarray  # (H, W) bool
    bbox: tuple[int, int, int, int] = field(init=False)  # x_min, y_min, x_max, y_max (inclusive)

    def __post_init__(self):
        inside = np.asarray(self.inside, dtype=bool)
        if inside.ndim != 2:
            raise InvalidInputError("mask must be a 2D boolean grid")
        ys, xs = np.nonzero(inside)
        if xs.size == 0:
            raise InvalidInputError("mask has no foreground pixel")
        object.__setattr__(self, "inside", inside)
        object.__setattr__(
            self, "bbox", (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.inside.shape

    @property
    def bbox_size(self) -> tuple[int, int]:
        """Bounding-box extent in pixels (pixel-count convention)."""
        x0, y0, x1, y1 = self.bbox
        return (x1 - x0 + 1, y1 - y0 + 1)


def full_foreground_mask(shape: tuple[int, int]) -> SliceMask:
    """Mask marking the whole image as slice foreground (background-free inputs)."""
    return SliceMask(np.ones(shape, dtype=bool))


def load_image(path: str) -> np.ndarray:
    """Read a PNG/JPEG file as an (H, W, 3) uint8 RGB array."""
    bgr = cv2.imread(os.fspath(path), cv2.IMREAD_COLOR)
    if bgr is None:
        raise InvalidInputError(f"cannot read image: {path}")
    return np.ascontiguousarray(bgr[:, :, ::-1])


def save_image(path: str, img: np.ndarray) -> None:
    """Write an RGB uint8 array as PNG/JPEG (by extension)."""
    ok = cv2.imwrite(os.fspath(path), np.ascontiguousarray(np.asarray(img)[:, :, ::-1]))
    if not ok:
        raise InvalidInputError(f"cannot write image: {path}")


def load_mask(path: str) -> SliceMask:
    """Read a single-channel PNG where nonzero marks the slice foreground."""
    raw = cv2.imread(os.fspath(path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise InvalidInputError(f"cannot read mask: {path}")
    return SliceMask(raw > 0)


def save_mask(path: str, mask: SliceMask) -> None:
    ok = cv2.imwrite(os.fspath(path), mask.inside.astype(np.uint8) * 255)
    if not ok:
        raise InvalidInputError(f"cannot write mask: {path}")


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Convert an RGB uint8 image to a luma intensity field in [0, 1]."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidInputError("expected an (H, W, 3) RGB image")
    return img.astype(np.float64) @ _LUMA / 255.0


def resize_to_width(img: np.ndarray, target_width: int = 640) -> tuple[np.ndarray, ResizeInfo]:
    """Resize an image (2D field or 3-channel) to a fixed width, preserving aspect ratio.

    Returns the resized image and the ResizeInfo whose ``scale`` maps working
    coordinates back to the original frame by multiplication. Bilinear
    interpolation; output height is round(h * target_width / w), at least 1.
    """
    img = np.asarray(img)
    if img.ndim not in (2, 3):
        raise InvalidInputError("expected a 2D or 3D image array")
    h, w = img.shape[:2]
    if h == 0 or w == 0:
        raise InvalidInputError("degenerate image (zero width or height)")
    if target_width < 2:
        raise InvalidInputError("target_width must be at least 2")
    target_height = max(1, int(round(h * target_width / w)))
    if (w, h) == (target_width, target_height):
        resized = img.copy()
    else:
        resized = cv2.resize(img, (target_width, target_height), interpolation=cv2.INTER_LINEAR)
    return resized, ResizeInfo(scale=w / target_width, original_size=(w, h))


def resize_mask(mask: SliceMask, target_width: int = 640) -> SliceMask:
    """Resize a mask with nearest-neighbor sampling (keeps it crisp boolean)."""
    h, w = mask.shape
    if target_width < 2:
        raise InvalidInputError("target_width must be at least 2")
    target_height = max(1, int(round(h * target_width / w)))
    if (w, h) == (target_width, target_height):
        return mask
    raw = cv2.resize(
        mask.inside.astype(np.uint8), (target_width, target_height), interpolation=cv2.INTER_NEAREST
    )
    return SliceMask(raw > 0)


def apply_mask(fieldgrid: np.ndarray, mask: SliceMask) -> np.ndarray:
    """Zero out background pixels; foreground is untouched."""
    fieldgrid = np.asarray(fieldgrid)
    if fieldgrid.shape != mask.shape:
        raise InvalidInputError(
            f"field shape {fieldgrid.shape} does not match mask shape {mask.shape}"
        )
    return np.where(mask.inside, fieldgrid, 0.0)


def derivatives(fieldgrid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First derivatives (Ix along columns, Iy along rows) by central differences.

    Borders are handled by edge replication, so the derivative at an edge pixel
    is the half one-sided difference.
    """
    fieldgrid = np.asarray(fieldgrid, dtype=np.float64)
    if fieldgrid.ndim != 2 or fieldgrid.shape[0] < 3 or fieldgrid.shape[1] < 3:
        raise InvalidInputError("derivatives require an image of at least 3x3 pixels")
    padded = np.pad(fieldgrid, 1, mode="edge")
    ix = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    iy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    return ix, iy
