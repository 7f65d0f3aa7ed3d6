"""Low-dose X-ray denoising toolkit.

Physics first: photon counts are scaled-Poisson (gain k), dose reduction is
Poisson thinning, and the Anscombe transform makes the noise approximately
unit-variance Gaussian. A residual network then regresses the noise map in
the stabilised domain; subtracting it and inverting the transform (with the
closed-form unbiased inverse) yields the denoised acquisition. Everything
stochastic is driven by counter-based generators with derived seeds, so
pipelines reproduce bit-exactly.
"""

from .errors import (
    ContractError,
    DegenerateInputError,
    FormatError,
    NumericFailure,
)
from .imaging import (
    FORMATS,
    UINT16_MAX,
    Dataset,
    Domain,
    Image,
    Patch,
    denormalize,
    extract_patches,
    format_for_path,
    load_image,
    normalize,
    save_image,
)
from .seeding import derive_seed
from .noise import (
    ANSCOMBE_MIN,
    GainModel,
    NoisePair,
    PhotonImage,
    anscombe,
    anscombe_forward,
    anscombe_inv,
    anscombe_inverse,
    augment_arrays,
    augment_pair,
    estimate_gain,
    simulate_dose_reduction,
    to_photons,
)
from .phantom import (
    BACKGROUNDS,
    Calcification,
    PhantomSpec,
    generate_dataset,
    generate_phantom,
)
from .nn import (
    Model,
    ModelConfig,
    Tensor,
    analytic_param_count,
    build_model,
    denoise_image,
    forward,
    checkpoint_meta,
    load_checkpoint,
    param_count,
    predict_noise_map,
    save_checkpoint,
)
from .losses import (
    SsimParams,
    combine_loss,
    gaussian_window,
    mse_loss,
    ssim,
    ssim_and_grad,
    ssim_map,
    total_loss,
    total_loss_and_grad,
)
from .training import (
    Adam,
    TrainConfig,
    TrainHistory,
    gradient_check,
    overfit_probe,
    train,
)
from .metrics import (
    EvalRecord,
    EvalReport,
    evaluate,
    gaussian_denoise,
    gaussian_kernel,
    gaussian_smooth,
    psnr,
    sigma_image,
)
from .config import RunConfig

__version__ = "0.1.0"

__all__ = [
    "ContractError", "DegenerateInputError", "FormatError", "NumericFailure",
    "FORMATS", "UINT16_MAX", "Dataset", "Domain", "Image", "Patch",
    "denormalize", "extract_patches", "format_for_path", "load_image",
    "normalize", "save_image",
    "derive_seed",
    "ANSCOMBE_MIN", "GainModel", "NoisePair", "PhotonImage", "anscombe",
    "anscombe_forward", "anscombe_inv", "anscombe_inverse", "augment_arrays",
    "augment_pair", "estimate_gain", "simulate_dose_reduction", "to_photons",
    "BACKGROUNDS", "Calcification", "PhantomSpec", "generate_dataset",
    "generate_phantom",
    "Model", "ModelConfig", "Tensor", "analytic_param_count", "build_model",
    "checkpoint_meta", "denoise_image", "forward", "load_checkpoint", "param_count",
    "predict_noise_map", "save_checkpoint",
    "SsimParams", "combine_loss", "gaussian_window", "mse_loss", "ssim",
    "ssim_and_grad", "ssim_map", "total_loss", "total_loss_and_grad",
    "Adam", "TrainConfig", "TrainHistory", "gradient_check", "overfit_probe",
    "train",
    "EvalRecord", "EvalReport", "evaluate", "gaussian_denoise",
    "gaussian_kernel", "gaussian_smooth", "psnr", "sigma_image",
    "RunConfig",
    "__version__",
]
