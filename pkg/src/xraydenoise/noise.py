"""Measurement physics: gain estimation, Poisson dose simulation, Anscombe transform.

The photon-counting model is ``z = k * lambda``: a detector pixel value ``z``
is a linear gain ``k`` times the expected photon count ``lambda``, and the
photon arrivals themselves are Poisson. A dose reduction by a factor
``alpha`` is simulated by redrawing each pixel from ``Poisson(alpha*lambda)``,
which has mean and variance both equal to ``alpha*lambda``. The Anscombe
transform ``A(z) = 2*sqrt(z + 3/8)`` then maps this signal-dependent Poisson
noise to approximately white Gaussian noise with unit standard deviation.

All random draws use the counter-based Philox generator, so results depend
only on (input, alpha, seed) and never on scheduling; concurrent callers are
safe as long as each call owns its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateInputError
from .imaging import Domain, Image

#: Value of the forward transform at zero counts, 2*sqrt(3/8); the smallest
#: output the forward transform can produce.
ANSCOMBE_MIN = 2.0 * math.sqrt(0.375)


@dataclass
class GainModel:
    """Scalar gain linking pixel values to photon counts (z = k * lambda)."""

    k: float
    estimation_pixels: int = 0
    confidence_halfwidth: float = 0.0

    def __post_init__(self):
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ContractError(f"gain k must be a positive finite real, got {self.k}")
        if self.estimation_pixels and self.estimation_pixels < 2:
            raise ContractError("gain estimation needs at least 2 pixels")


@dataclass
class PhotonImage:
    """Expected photon counts per pixel (lambda grid)."""

    lambdas: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=np.float64)
        if self.lambdas.ndim != 2 or self.lambdas.size == 0:
            raise ContractError(
                f"photon image must be non-empty 2D, got shape {self.lambdas.shape}"
            )
        if not np.isfinite(self.lambdas).all():
            raise ContractError("photon image contains NaN or Inf")
        if self.lambdas.min() < 0:
            raise ContractError("photon image has negative rates")


@dataclass
class NoisePair:
    """A (noisy, clean) pair in the Anscombe domain plus their difference.

    ``clean`` is the transform of the noiseless reduced-dose photon image
    ``alpha*lambda``; ``noisy`` is the transform of the Poisson draw at the
    same rate, so ``noise_map = noisy - clean`` is exactly the stabilized
    noise the network regresses.
    """

    noisy: Image
    clean: Image
    noise_map: np.ndarray
    alpha: float
    seed: int

    def __post_init__(self):
        if self.noisy.pixels.shape != self.clean.pixels.shape or (
            self.noise_map.shape != self.noisy.pixels.shape
        ):
            raise ContractError("noisy/clean/noise_map shapes disagree")
        if not np.array_equal(self.noise_map, self.noisy.pixels - self.clean.pixels):
            raise ContractError("noise_map must equal noisy - clean exactly")


# ---------------------------------------------------------------------------
# Gain estimation

def estimate_gain(samples) -> GainModel:
    """Estimate the gain k as variance over mean of a flat-region sample.

    For pixel values ``z = k * Poisson(lambda)`` drawn from a statistically
    flat region, ``var(z)/mean(z) = k``. The variance is the unbiased sample
    variance. The reported ``confidence_halfwidth`` is the normal-approximation
    95% half-width of the ratio for scaled-Poisson data,
    ``1.96 * k_hat * sqrt(2/n)`` (delta method; the mean/variance covariance
    of the Poisson family makes the relative standard error sqrt(2/n),
    independent of lambda).

    Raises:
        DegenerateInputError: fewer than 2 samples, nonpositive mean, or
            all-equal samples (zero variance).
    """
    z = np.asarray(samples, dtype=np.float64).ravel()
    if z.size < 2:
        raise DegenerateInputError(f"need at least 2 samples, got {z.size}")
    if not np.isfinite(z).all():
        raise ContractError("samples contain NaN or Inf")
    mean = float(z.mean())
    if mean <= 0:
        raise DegenerateInputError(f"sample mean must be positive, got {mean}")
    var = float(z.var(ddof=1))
    if var == 0.0:
        raise DegenerateInputError("all samples equal; variance is zero")
    k = var / mean
    halfwidth = 1.96 * k * math.sqrt(2.0 / z.size)
    return GainModel(k=k, estimation_pixels=int(z.size), confidence_halfwidth=halfwidth)


def to_photons(img: Image, gain: GainModel) -> PhotonImage:
    """Convert detector pixel values to expected photon counts, lambda = z / k."""
    if img.domain is not Domain.RAW_COUNTS:
        raise ContractError(f"to_photons expects raw_counts, got {img.domain.value}")
    return PhotonImage(img.pixels / gain.k, name=img.name)


# ---------------------------------------------------------------------------
# Dose-reduction simulation

def simulate_dose_reduction(photons: PhotonImage, alpha: float, seed: int) -> PhotonImage:
    """Draw a reduced-dose acquisition, pixelwise Poisson(alpha * lambda).

    alpha is the dose factor in (0, 1]; alpha = 0.2 models an 80% dose
    reduction. Draws come from a Philox stream keyed by ``seed``.
    """
    _check_alpha(alpha)
    rng = np.random.Generator(np.random.Philox(seed))
    draws = rng.poisson(alpha * photons.lambdas).astype(np.float64)
    return PhotonImage(draws, name=photons.name)


def _check_alpha(alpha: float):
    if not (0.0 < alpha <= 1.0):
        raise ContractError(f"dose factor alpha must lie in (0, 1], got {alpha}")


# ---------------------------------------------------------------------------
# Anscombe transform

def anscombe(z: np.ndarray) -> np.ndarray:
    """Array-level forward transform 2*sqrt(z + 3/8); input must be >= 0."""
    z = np.asarray(z)
    if z.size and (not np.isfinite(z).all() or z.min() < 0):
        raise ContractError("anscombe input must be finite and nonnegative")
    return 2.0 * np.sqrt(z + 0.375)


def anscombe_inv(a: np.ndarray, mode: str = "unbiased") -> np.ndarray:
    """Array-level inverse of the forward transform, clamped at zero.

    ``algebraic`` inverts the formula exactly, ``z = (a/2)**2 - 3/8``; it is
    biased low when used on denoised (averaged) values at low counts.
    ``unbiased`` is the closed-form approximation of the exact unbiased
    inverse,

        z = (a/2)**2 - 1/8 + (1/4)*sqrt(3/2)/a - (11/8)/a**2 + (5/8)*sqrt(3/2)/a**3,

    which maps the *expected* transformed value back to the Poisson rate.
    """
    a = np.asarray(a, dtype=np.float64)
    if mode == "algebraic":
        # guard a <= 0 too: the square would otherwise rise again there
        z = np.where(a <= 0, 0.0, np.square(a / 2.0) - 0.375)
    elif mode == "unbiased":
        s = math.sqrt(1.5)
        # a <= 0 produces inf/nan here; those lanes are overwritten below
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (
                np.square(a / 2.0)
                - 0.125
                + 0.25 * s / a
                - 1.375 / np.square(a)
                + 0.625 * s / (np.square(a) * a)
            )
        z = np.where(a <= 0, 0.0, z)
    else:
        raise ContractError(f"unknown inverse mode {mode!r}; expected 'algebraic' or 'unbiased'")
    return np.maximum(z, 0.0)


def anscombe_forward(photons) -> Image:
    """Variance-stabilize a photon image into the Anscombe domain.

    Accepts a :class:`PhotonImage` or a raw-count :class:`Image` whose pixel
    values are already photon counts (gain 1).
    """
    if isinstance(photons, PhotonImage):
        values, name, bit_depth = photons.lambdas, photons.name, None
    elif isinstance(photons, Image):
        if photons.domain is not Domain.RAW_COUNTS:
            raise ContractError(
                f"anscombe_forward expects raw photon counts, got {photons.domain.value}"
            )
        values, name, bit_depth = photons.pixels, photons.name, photons.bit_depth
    else:
        raise ContractError(f"anscombe_forward expects PhotonImage or Image, got {type(photons)}")
    return Image(anscombe(values), domain=Domain.ANSCOMBE, bit_depth=bit_depth, name=name)


def anscombe_inverse(img: Image, mode: str = "unbiased") -> Image:
    """Map an Anscombe-domain image back to photon counts (clamped at 0)."""
    if img.domain is not Domain.ANSCOMBE:
        raise ContractError(f"anscombe_inverse expects anscombe domain, got {img.domain.value}")
    return Image(
        anscombe_inv(img.pixels, mode=mode),
        domain=Domain.RAW_COUNTS,
        bit_depth=img.bit_depth,
        name=img.name,
    )


# ---------------------------------------------------------------------------
# Training-pair augmentation

def augment_arrays(gt_counts: np.ndarray, k: float, alpha: float, seed: int):
    """Core of the augmentation pipeline on plain arrays (any shape).

    Returns ``(noisy, clean)`` in the Anscombe domain: ``clean`` is the
    transform of the noiseless scaled rates ``alpha*lambda`` and ``noisy``
    the transform of one Poisson draw at those rates.
    """
    gt_counts = np.asarray(gt_counts, dtype=np.float64)
    if gt_counts.size and gt_counts.min() < 0:
        raise ContractError("ground-truth counts must be nonnegative")
    _check_alpha(alpha)
    if k <= 0:
        raise ContractError(f"gain k must be positive, got {k}")
    scaled = alpha * (gt_counts / k)
    rng = np.random.Generator(np.random.Philox(seed))
    noisy = anscombe(rng.poisson(scaled).astype(np.float64))
    clean = anscombe(scaled)
    return noisy, clean


def augment_pair(gt: Image, gain: GainModel, alpha: float, seed: int) -> NoisePair:
    """Build one training pair from a ground-truth raw-count image.

    Composes photon conversion, dose-reduction simulation, and the forward
    transform for ``noisy``; ``clean`` is the transform of the un-noised
    scaled photon image, so the pair differs only by stabilized noise.
    Deterministic in (gt, alpha, seed).
    """
    if gt.domain is not Domain.RAW_COUNTS:
        raise ContractError(f"augment_pair expects raw_counts, got {gt.domain.value}")
    noisy, clean = augment_arrays(gt.pixels, gain.k, alpha, seed)
    noisy_img = Image(noisy, domain=Domain.ANSCOMBE, name=gt.name)
    clean_img = Image(clean, domain=Domain.ANSCOMBE, name=gt.name)
    return NoisePair(
        noisy=noisy_img,
        clean=clean_img,
        noise_map=noisy - clean,
        alpha=alpha,
        seed=seed,
    )
