"""Minimal NHWC tensor network with hand-written forward/backward passes.

Built for CPU training of the residual noise-map denoiser: convolutions are
lowered to one large GEMM over the padded grid plus shifted accumulations
(no im2col gather), batch norm and ReLU carry their own backward rules, and
every random draw is seeded, so training is bit-reproducible.
"""

from .tensor import Tensor, as_array
from .model import (
    Model,
    ModelConfig,
    analytic_param_count,
    build_model,
    forward,
    param_count,
    checkpoint_meta,
    load_checkpoint,
    save_checkpoint,
)
from .infer import denoise_image, predict_noise_map

__all__ = [
    "Tensor",
    "as_array",
    "Model",
    "ModelConfig",
    "analytic_param_count",
    "build_model",
    "forward",
    "param_count",
    "load_checkpoint",
    "save_checkpoint",
    "denoise_image",
    "predict_noise_map",
]
