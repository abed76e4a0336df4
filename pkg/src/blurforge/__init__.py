"""blurforge: line-prediction motion blur synthesis and evaluation."""

from .baselines import blur_from_flow, naive_average
from .dataset import (
    FilterReport,
    FilterThresholds,
    FrameSequence,
    SceneSpec,
    TripletFlows,
    average_frames,
    filter_triplet,
    gen_scene,
    undersampling_check,
)
from .errors import ArgumentError, FormatError, NumericalError
from .fit import FitConfig, FitResult, charbonnier, fit_line_field
from .flow import FlowField, estimate_flow, flow_stats, read_flo, warp, write_flo
from .imgcore import (
    Image,
    bilinear_sample,
    downsample,
    read_image,
    sobel_mean_gradient,
    write_image,
)
from .linepred import (
    LineField,
    SamplingReport,
    check_sampling,
    load_line_field,
    rasterize_kernel,
    render,
    render_vjp,
    save_line_field,
)
from .metrics import psnr, ssim

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "FormatError",
    "NumericalError",
    "Image",
    "bilinear_sample",
    "sobel_mean_gradient",
    "downsample",
    "read_image",
    "write_image",
    "LineField",
    "SamplingReport",
    "render",
    "render_vjp",
    "rasterize_kernel",
    "check_sampling",
    "save_line_field",
    "load_line_field",
    "FlowField",
    "estimate_flow",
    "warp",
    "flow_stats",
    "read_flo",
    "write_flo",
    "naive_average",
    "blur_from_flow",
    "FrameSequence",
    "FilterReport",
    "FilterThresholds",
    "TripletFlows",
    "SceneSpec",
    "average_frames",
    "undersampling_check",
    "filter_triplet",
    "gen_scene",
    "FitConfig",
    "FitResult",
    "charbonnier",
    "fit_line_field",
    "psnr",
    "ssim",
]
