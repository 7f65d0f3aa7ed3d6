"""Evaluation metrics and the classical smoothing baseline.

Image quality is scored in normalized units (pixels divided by the bit-depth
maximum), so PSNR uses peak 1.0 and SSIM uses dynamic range 1.0 regardless
of detector scaling.
"""

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import ContractError, NumericFailure
from .imaging import Domain, Image
from .losses import SsimParams, ssim
from .nn.tensor import as_array
from .noise import GainModel, anscombe, anscombe_inv

NOISY_LABEL = "Noisy"


def psnr(reference, test, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, 10*log10(peak^2 / MSE).

    Identical arrays have zero MSE; that case returns float('inf') rather
    than raising, so callers can flag it.
    """
    av = np.asarray(as_array(reference), dtype=np.float64)
    bv = np.asarray(as_array(test), dtype=np.float64)
    if av.shape != bv.shape:
        raise ContractError(f"shape mismatch: {av.shape} vs {bv.shape}")
    if av.size == 0:
        raise ContractError("psnr on empty arrays")
    if not (peak > 0):
        raise ContractError(f"peak must be > 0, got {peak!r}")
    d = av - bv
    mse = float(np.mean(d * d))
    if mse == 0.0:
        return float("inf")
    return 10.0 * math.log10(peak * peak / mse)


def sigma_image(img, roi: Optional[Tuple[int, int, int, int]] = None) -> float:
    """Population standard deviation of the pixel values.

    On a homogeneous region this tracks residual noise; lower is smoother.
    roi = (row, col, height, width) restricts the statistic to a window,
    which is the physically meaningful choice on flat patches. Raw-count
    images with a known bit depth are normalized first so the number lives
    on the same scale as the PSNR/SSIM inputs; plain arrays are used as-is.
    """
    if isinstance(img, Image):
        if img.domain is Domain.RAW_COUNTS and img.bit_depth is not None:
            a = _to_unit(img)
        else:
            a = np.asarray(img.pixels, dtype=np.float64)
    else:
        a = np.asarray(as_array(img), dtype=np.float64)
    if roi is not None:
        r, c, h, w = roi
        if h <= 0 or w <= 0:
            raise ContractError(f"empty roi {roi!r}")
        if a.ndim != 2:
            raise ContractError(f"roi needs a 2-d image, got shape {a.shape}")
        if r < 0 or c < 0 or r + h > a.shape[0] or c + w > a.shape[1]:
            raise ContractError(f"roi {roi!r} outside image of shape {a.shape}")
        a = a[r:r + h, c:c + w]
    if a.size == 0:
        raise ContractError("sigma_image on an empty array")
    return float(a.std())


def gaussian_kernel(sigma: float, radius: Optional[int] = None) -> np.ndarray:
    """Sampled 1-d Gaussian, truncated at ceil(4*sigma), normalized to sum 1."""
    if not (sigma > 0):
        raise ContractError(f"sigma must be > 0, got {sigma!r}")
    if radius is None:
        radius = int(math.ceil(4.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(values: np.ndarray, sigma: float,
                    radius: Optional[int] = None) -> np.ndarray:
    """Separable Gaussian blur with reflective borders (any domain)."""
    k = gaussian_kernel(sigma, radius)
    out = np.asarray(values, dtype=np.float64)
    for axis in range(out.ndim):
        out = ndimage.correlate1d(out, k, axis=axis, mode="reflect")
    return out


def gaussian_denoise(noisy: Image, gain: GainModel, sigma: float = 1.0,
                     inverse_mode: str = "unbiased") -> Image:
    """Classical baseline: variance-stabilise, Gaussian-blur, map back."""
    if noisy.domain is not Domain.RAW_COUNTS:
        raise ContractError(f"gaussian_denoise expects raw counts, got {noisy.domain}")
    lam = noisy.pixels / gain.k
    t = anscombe(lam)
    smoothed = gaussian_smooth(t, sigma)
    counts = gain.k * anscombe_inv(smoothed, mode=inverse_mode)
    return Image(pixels=counts, domain=Domain.RAW_COUNTS,
                 bit_depth=noisy.bit_depth, name=noisy.name + "_gaussian")


@dataclass
class EvalRecord:
    method: str
    psnr_db: float
    ssim: float
    sigma_image: float
    n_images: int
    error: Optional[str] = None


@dataclass
class EvalReport:
    records: List[EvalRecord]
    n_images: int

    def to_text(self) -> str:
        head = f"{'method':<16} {'PSNR (dB)':>10} {'SSIM':>8} {'sigma':>10}"
        lines = [head, "-" * len(head)]
        for r in self.records:
            if r.error is not None:
                lines.append(f"{r.method:<16} error: {r.error}")
                continue
            p = "inf" if math.isinf(r.psnr_db) else f"{r.psnr_db:.2f}"
            lines.append(f"{r.method:<16} {p:>10} {r.ssim:>8.4f} {r.sigma_image:>10.6f}")
        lines.append(f"({self.n_images} image{'s' if self.n_images != 1 else ''})")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["method", "psnr_db", "ssim", "sigma_image", "n_images", "error"])
        for r in self.records:
            w.writerow([r.method, "%.17g" % r.psnr_db, "%.17g" % r.ssim,
                        "%.17g" % r.sigma_image, r.n_images, r.error or ""])
        return buf.getvalue()

    def by_method(self, method: str) -> EvalRecord:
        for r in self.records:
            if r.method == method:
                return r
        raise KeyError(method)


def _to_unit(img: Image) -> np.ndarray:
    if img.bit_depth is None:
        raise ContractError(f"image {img.name!r} has no bit depth; cannot normalize")
    scale = float(2 ** img.bit_depth - 1)
    return np.clip(img.pixels / scale, 0.0, 1.0)


Denoiser = Callable[[Image, Optional[GainModel]], Image]


def evaluate(methods: Sequence[Tuple[str, Denoiser]],
             test_set: Sequence[Tuple[Image, Image]],
             gain: Optional[GainModel] = None,
             ssim_params: Optional[SsimParams] = None,
             annotations: Sequence[EvalRecord] = ()) -> EvalReport:
    """Score denoising methods against clean references.

    test_set holds (clean, noisy) raw-count image pairs; each method is a
    (name, fn) pair where fn(noisy, gain) returns that method's output. A
    "Noisy" row is always computed from the unprocessed inputs, so that
    name is reserved. Per-method numbers are means across images: PSNR
    (peak 1.0 in normalized units), SSIM (dynamic range 1.0), and sigma of
    the outputs. A method that raises or returns the wrong shape gets an
    error row and the run continues. annotations are externally supplied
    records (numbers quoted from elsewhere) appended to the report as-is.
    """
    if len(test_set) == 0:
        raise ContractError("evaluate needs at least one image pair")
    for name, _fn in methods:
        if name == NOISY_LABEL:
            raise ContractError(f"method name {NOISY_LABEL!r} is reserved")
    clean_u = []
    for gt, noisy in test_set:
        u = _to_unit(gt)
        if _to_unit(noisy).shape != u.shape:
            raise ContractError(
                f"pair {gt.name!r}/{noisy.name!r}: shape mismatch "
                f"{noisy.pixels.shape} vs {gt.pixels.shape}")
        clean_u.append(u)
    params = ssim_params or SsimParams(dynamic_range=1.0)

    def _score(name: str, outputs: Sequence[Image]) -> EvalRecord:
        psnrs, ssims, sigmas = [], [], []
        for ref, out in zip(clean_u, outputs):
            ou = _to_unit(out)
            if ou.shape != ref.shape:
                raise ContractError(
                    f"output shape {ou.shape} != clean shape {ref.shape}")
            psnrs.append(psnr(ref, ou, peak=1.0))
            ssims.append(ssim(ou, ref, params))
            sigmas.append(sigma_image(ou))
        return EvalRecord(method=name, psnr_db=float(np.mean(psnrs)),
                          ssim=float(np.mean(ssims)),
                          sigma_image=float(np.mean(sigmas)),
                          n_images=len(outputs))

    records = [_score(NOISY_LABEL, [noisy for _gt, noisy in test_set])]
    for name, fn in methods:
        try:
            outputs = [fn(noisy, gain) for _gt, noisy in test_set]
            records.append(_score(name, outputs))
        except (ContractError, NumericFailure, ValueError) as exc:
            records.append(EvalRecord(method=name, psnr_db=float("nan"),
                                      ssim=float("nan"),
                                      sigma_image=float("nan"),
                                      n_images=0, error=str(exc)))
    records.extend(annotations)
    return EvalReport(records=records, n_images=len(test_set))
