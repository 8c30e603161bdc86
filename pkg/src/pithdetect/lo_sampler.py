"""Sparse sampling of the orientation field: one short segment per coherent patch."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidInputError
from .imgproc import SliceMask


@dataclass(frozen=True)
class LoSamplerParams:
    lo_w: int = 3  # odd patch side, pixels
    percent_lo: float = 0.7  # fraction of foreground pixels that must pass the gate

    def __post_init__(self):
        if self.lo_w < 3 or self.lo_w % 2 == 0:
            raise InvalidInputError("lo_w must be odd and >= 3")
        if not 0.0 < self.percent_lo <= 1.0:
            raise InvalidInputError("percent_lo must be in (0, 1]")


@dataclass(frozen=True)
class LoSegment:
    """A unit-half-length orientation segment: endpoints, midpoint, angle, coherence."""

    p1: tuple[float, float]
    p2: tuple[float, float]
    midpoint: tuple[float, float]
    angle: float
    coherence: float


@dataclass(frozen=True)
class LoSet:
    """Ordered collection of orientation segments, stored as parallel arrays.

    ``midpoints`` is (N, 2) in (x, y) pixel coordinates, ``angles`` is (N,) in
    [0, pi), ``coherences`` is (N,) in [0, 1]. Endpoints are derived:
    p1,2 = midpoint -+ (cos angle, sin angle).
    """

    midpoints: np.ndarray
    angles: np.ndarray
    coherences: np.ndarray

    def __post_init__(self):
        mid = np.atleast_2d(np.asarray(self.midpoints, dtype=np.float64))
        if mid.size == 0:
            mid = mid.reshape(0, 2)
        ang = np.asarray(self.angles, dtype=np.float64).reshape(-1)
        coh = np.asarray(self.coherences, dtype=np.float64).reshape(-1)
        if mid.shape != (ang.size, 2) or coh.size != ang.size:
            raise InvalidInputError("midpoints, angles and coherences must agree in length")
        object.__setattr__(self, "midpoints", mid)
        object.__setattr__(self, "angles", ang)
        object.__setattr__(self, "coherences", coh)

    def __len__(self) -> int:
        return self.angles.size

    def __getitem__(self, index: int) -> LoSegment:
        mx, my = self.midpoints[index]
        dx, dy = np.cos(self.angles[index]), np.sin(self.angles[index])
        return LoSegment(
            p1=(mx - dx, my - dy),
            p2=(mx + dx, my + dy),
            midpoint=(mx, my),
            angle=float(self.angles[index]),
            coherence=float(self.coherences[index]),
        )

    @cached_property
    def directions(self) -> np.ndarray:
        """(N, 2) unit direction vectors (cos angle, sin angle)."""
        return np.stack([np.cos(self.angles), np.sin(self.angles)], axis=1)

    @property
    def p1(self) -> np.ndarray:
        return self.midpoints - self.directions

    @property
    def p2(self) -> np.ndarray:
        return self.midpoints + self.directions

    def subset(self, indices) -> "LoSet":
        idx = np.asarray(indices)
        return LoSet(self.midpoints[idx], self.angles[idx], self.coherences[idx])

    @staticmethod
    def empty() -> "LoSet":
        return LoSet(np.zeros((0, 2)), np.zeros(0), np.zeros(0))

    @staticmethod
    def concat(first: "LoSet", second: "LoSet") -> "LoSet":
        return LoSet(
            np.concatenate([first.midpoints, second.midpoints]),
            np.concatenate([first.angles, second.angles]),
            np.concatenate([first.coherences, second.coherences]),
        )


def save_lo_csv(path: str, lo: LoSet) -> None:
    """Debug export: one ``x1,y1,x2,y2,coherence`` row per segment (working frame)."""
    p1, p2 = lo.p1, lo.p2
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "y1", "x2", "y2", "coherence"])
        for i in range(len(lo)):
            writer.writerow(
                [f"{p1[i, 0]:.6f}", f"{p1[i, 1]:.6f}", f"{p2[i, 0]:.6f}", f"{p2[i, 1]:.6f}",
                 f"{lo.coherences[i]:.6f}"]
            )


def coherence_threshold(st_c: np.ndarray, mask: SliceMask, percent_lo: float) -> float:
    """Coherence level exceeded by a ``percent_lo`` fraction of foreground pixels.

    Computed as the (1 - percent_lo) quantile with lower interpolation, so the
    threshold is always an observed coherence value.
    """
    st_c = np.asarray(st_c)
    if st_c.shape != mask.shape:
        raise InvalidInputError("coherence grid and mask shapes differ")
    values = st_c[mask.inside]
    if values.size == 0:
        raise InvalidInputError("mask has no foreground pixel")
    return float(np.quantile(values, 1.0 - percent_lo, method="lower"))


def sample_lo(
    st_o: np.ndarray,
    st_c: np.ndarray,
    mask: SliceMask,
    params: LoSamplerParams,
) -> LoSet:
    """Pick the most coherent foreground pixel of each non-overlapping patch.

    The grid is tiled from the top-left into lo_w x lo_w patches; partial
    patches at the right/bottom edges are processed as-is. A segment is
    emitted when the winning pixel's coherence reaches the slice-wide gate
    and is strictly positive (flat pixels carry no orientation). Ties on the
    patch maximum break in row-major pixel order, and the output is ordered
    by patch index, so the result is deterministic.
    """
    st_o = np.asarray(st_o)
    st_c = np.asarray(st_c)
    if st_o.shape != st_c.shape or st_o.shape != mask.shape:
        raise InvalidInputError("orientation, coherence and mask shapes must agree")
    st_th = coherence_threshold(st_c, mask, params.percent_lo)

    side = params.lo_w
    height, width = st_c.shape
    blocks_y = -(-height // side)
    blocks_x = -(-width // side)
    # Background and padding score below any real coherence so they never win.
    score = np.where(mask.inside, st_c, -1.0)
    score = np.pad(
        score,
        ((0, blocks_y * side - height), (0, blocks_x * side - width)),
        constant_values=-1.0,
    )
    patches = score.reshape(blocks_y, side, blocks_x, side).transpose(0, 2, 1, 3)
    patches = patches.reshape(blocks_y, blocks_x, side * side)
    winner = patches.argmax(axis=2)
    best = np.take_along_axis(patches, winner[..., None], axis=2)[..., 0]

    ys = np.arange(blocks_y)[:, None] * side + winner // side
    xs = np.arange(blocks_x)[None, :] * side + winner % side
    keep = (best >= st_th) & (best > 0.0)
    ys, xs = ys[keep], xs[keep]
    midpoints = np.stack([xs, ys], axis=1).astype(np.float64)
    return LoSet(midpoints, st_o[ys, xs], st_c[ys, xs])
