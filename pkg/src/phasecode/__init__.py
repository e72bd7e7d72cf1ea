"""Phase-coded motion blur: color-coded focus sweeps that make motion direction recoverable."""

from .optics import DefocusSchedule, OpticalConfig, PhaseMask, PSFStack, psf, psf_grad, psf_stack
from .imaging import add_awgn, code_image, crf, inverse_crf, point_trace, scale_noise_for_exposure, temporal_mean
from .reconstruction import DecoderConfig, estimate_motion, reconstruct_frame, reconstruct_video
from .codeopt import CodeObjective, OptimizerConfig, objective, objective_grad, optimize_schedule
from .metrics import direction_accuracy, noise_sweep, psnr, ssim, ssim3d, vid_aggregate

__version__ = "0.1.0"

__all__ = [
    "DefocusSchedule", "OpticalConfig", "PhaseMask", "PSFStack", "psf", "psf_grad", "psf_stack",
    "add_awgn", "code_image", "crf", "inverse_crf", "point_trace", "scale_noise_for_exposure", "temporal_mean",
    "DecoderConfig", "estimate_motion", "reconstruct_frame", "reconstruct_video",
    "CodeObjective", "OptimizerConfig", "objective", "objective_grad", "optimize_schedule",
    "direction_accuracy", "noise_sweep", "psnr", "ssim", "ssim3d", "vid_aggregate",
]
