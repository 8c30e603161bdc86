"""Wood pith detection from cross-section images.

Local ring orientations are estimated with the 2D structure tensor, sampled
into short segments, and the pith is the point maximizing a collinearity cost
over those segments. A parallel-coordinates + RANSAC filter variant handles
slices whose central ring pattern is degraded.
"""

from .errors import DetectionFailedError, FilteringFailedError, InvalidInputError
from .imgproc import ResizeInfo, SliceMask, full_foreground_mask, load_image, load_mask
from .lo_sampler import LoSamplerParams, LoSegment, LoSet
from .pclines import PclinesParams, detect_pith_apd_pcl, pclines_filter
from .solver import (
    DetectorParams,
    PithEstimate,
    SolverParams,
    apd_params,
    apd_pcl_params,
    detect_pith_apd,
)
from .structure_tensor import StParams, TensorField
from .synthgen import LoSpec, WebSpec, generate_lo, generate_web

__all__ = [
    "DetectionFailedError",
    "FilteringFailedError",
    "InvalidInputError",
    "ResizeInfo",
    "SliceMask",
    "full_foreground_mask",
    "load_image",
    "load_mask",
    "LoSamplerParams",
    "LoSegment",
    "LoSet",
    "PclinesParams",
    "detect_pith_apd_pcl",
    "pclines_filter",
    "DetectorParams",
    "PithEstimate",
    "SolverParams",
    "apd_params",
    "apd_pcl_params",
    "detect_pith_apd",
    "StParams",
    "TensorField",
    "LoSpec",
    "WebSpec",
    "generate_lo",
    "generate_web",
]

__version__ = "0.1.0"
