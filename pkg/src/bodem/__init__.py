"""Black-box explanation toolkit for object detectors.

Perturbs an image with structured local and global mean-fill masks, probes
any detector through an adapter, and accumulates the output differences
into per-detection saliency maps and heatmaps. Also builds occlusion
augmentation datasets from the same local masks.
"""

from .geometry import BBox, DetectionSet, Rect, clamp_box, iou
from .image import Image, apply_mask, load_image, region_mean, write_image
from .inquiry import (
    DetectorAdapter,
    DetectorError,
    DetectTimeoutError,
    InquiryCache,
    InquiryResult,
    MalformedResponseError,
    RemoteAdapter,
    SubprocessAdapter,
    SyntheticAdapter,
    TransportError,
    detect,
    run_inquiry,
)
from .maskgen import (
    MaskGenConfig,
    MaskSpec,
    global_mask_areas,
    global_mask_specs,
    local_mask_areas,
    local_mask_specs,
    masking_area,
)
from .saliency import (
    SaliencyMap,
    ThresholdSchedule,
    difference,
    estimate,
    estimate_dynamic,
    normalize,
    similarity,
)
from .heatmap import ColorMapSpec, colorize, overlay, render_explanation
from .synthetic import synthetic_detect
from .augment import AnnotatedImage, AugmentPlan, generate_set, plan_counts

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "DetectionSet",
    "Rect",
    "clamp_box",
    "iou",
    "Image",
    "apply_mask",
    "load_image",
    "region_mean",
    "write_image",
    "DetectorAdapter",
    "DetectorError",
    "DetectTimeoutError",
    "InquiryCache",
    "InquiryResult",
    "MalformedResponseError",
    "RemoteAdapter",
    "SubprocessAdapter",
    "SyntheticAdapter",
    "TransportError",
    "detect",
    "run_inquiry",
    "MaskGenConfig",
    "MaskSpec",
    "global_mask_areas",
    "global_mask_specs",
    "local_mask_areas",
    "local_mask_specs",
    "masking_area",
    "SaliencyMap",
    "ThresholdSchedule",
    "difference",
    "estimate",
    "estimate_dynamic",
    "normalize",
    "similarity",
    "ColorMapSpec",
    "colorize",
    "overlay",
    "render_explanation",
    "synthetic_detect",
    "AnnotatedImage",
    "AugmentPlan",
    "generate_set",
    "plan_counts",
]
