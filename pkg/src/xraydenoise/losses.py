"""Training objective: pixel MSE on the noise map plus a structural term.

The structural term compares the implied denoised image (noisy minus
predicted noise map) against the clean target with SSIM, computed with a
Gaussian window over valid positions. The SSIM gradient is analytic, not
autodiff: each window position contributes three per-window coefficient
maps whose adjoint blur gives the pixel gradient in closed form.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError
from .nn.tensor import as_array


@dataclass
class SsimParams:
    """Window and stabilisation constants for SSIM.

    dynamic_range is the value span L of the images being compared; the
    stabilisers are C1 = (k1*L)**2 and C2 = (k2*L)**2.
    """

    window_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self):
        if not isinstance(self.window_size, int) or self.window_size < 3 \
                or self.window_size % 2 == 0:
            raise ContractError(
                f"window_size must be an odd int >= 3, got {self.window_size!r}")
        if not (self.sigma > 0):
            raise ContractError(f"sigma must be > 0, got {self.sigma!r}")
        if not (self.k1 > 0 and self.k2 > 0):
            raise ContractError(f"k1 and k2 must be > 0, got {self.k1!r}, {self.k2!r}")
        if not (self.dynamic_range > 0):
            raise ContractError(f"dynamic_range must be > 0, got {self.dynamic_range!r}")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """1-D Gaussian taps, normalised to sum to 1 (2-D window = outer product)."""
    if size < 1 or size % 2 == 0:
        raise ContractError(f"window size must be odd and positive, got {size}")
    off = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(off ** 2) / (2.0 * sigma * sigma))
    return w / w.sum()


def _corr1d_valid(x: np.ndarray, g: np.ndarray, axis: int) -> np.ndarray:
    return sliding_window_view(x, g.size, axis=axis) @ g


def _blur_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation over the last two axes."""
    return _corr1d_valid(_corr1d_valid(x, g, -1), g, -2)


def _blur_adjoint(m: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Adjoint of _blur_valid: scatter window maps back over their
    footprints. For a symmetric window this is zero-padding by (size - 1)
    on each side followed by the same valid correlation."""
    k = g.size - 1
    pad = [(0, 0)] * (m.ndim - 2) + [(k, k), (k, k)]
    return _blur_valid(np.pad(m, pad), g)


def _as_batch3(a, label: str) -> np.ndarray:
    """Accept (H, W), (B, H, W) or (B, 1, H, W); return float64 (B, H, W)."""
    a = np.asarray(as_array(a), dtype=np.float64)
    if a.ndim == 2:
        a = a[None]
    elif a.ndim == 4:
        if a.shape[1] != 1:
            raise ContractError(f"{label}: 4-D input must be (B, 1, H, W), got {a.shape}")
        a = a[:, 0]
    elif a.ndim != 3:
        raise ContractError(f"{label}: expected 2-D, 3-D or 4-D input, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{label}: non-finite values")
    return a


def _check_pair(x, y, params: SsimParams) -> Tuple[np.ndarray, np.ndarray]:
    xb = _as_batch3(x, "x")
    yb = _as_batch3(y, "y")
    if xb.shape != yb.shape:
        raise ContractError(f"shape mismatch: {xb.shape} vs {yb.shape}")
    if xb.shape[1] < params.window_size or xb.shape[2] < params.window_size:
        raise ContractError(
            f"image {xb.shape[1]}x{xb.shape[2]} smaller than SSIM window "
            f"{params.window_size}")
    return xb, yb


def _ssim_terms(xb, yb, params: SsimParams):
    g = gaussian_window(params.window_size, params.sigma)
    mu_x = _blur_valid(xb, g)
    mu_y = _blur_valid(yb, g)
    sx2 = _blur_valid(xb * xb, g) - mu_x * mu_x
    sy2 = _blur_valid(yb * yb, g) - mu_y * mu_y
    sxy = _blur_valid(xb * yb, g) - mu_x * mu_y
    a1 = 2.0 * mu_x * mu_y + params.c1
    a2 = 2.0 * sxy + params.c2
    b1 = mu_x * mu_x + mu_y * mu_y + params.c1
    b2 = sx2 + sy2 + params.c2
    return g, mu_x, mu_y, a1, a2, b1, b2


def ssim_map(x, y, params: SsimParams = SsimParams()) -> np.ndarray:
    """Per-window-position SSIM map, shape (B, H', W')."""
    xb, yb = _check_pair(x, y, params)
    _, _, _, a1, a2, b1, b2 = _ssim_terms(xb, yb, params)
    return (a1 * a2) / (b1 * b2)


def ssim(x, y, params: SsimParams = SsimParams()) -> float:
    """Mean SSIM over all valid window positions (and the batch)."""
    return float(ssim_map(x, y, params).mean())


def ssim_and_grad(x, y, params: SsimParams = SsimParams()):
    """SSIM value and its gradient with respect to x.

    Writing each window's score as S = (a1*a2)/(b1*b2) with
    a1 = 2*mu_x*mu_y + C1, a2 = 2*sigma_xy + C2, b1 = mu_x^2 + mu_y^2 + C1,
    b2 = sigma_x^2 + sigma_y^2 + C2, the derivative of S wrt pixel x_p
    under window weight g is

        g * [ 2*(mu_y*a2/d - mu_x*S/b1)          (window-constant part)
              + 2*a1/d * (y_p - mu_y)            (covariance part)
              - 2*S/b2 * (x_p - mu_x) ]          (variance part)

    with d = b1*b2. Collecting coefficients of 1, x_p, y_p turns the sum
    over windows into three adjoint blurs.
    """
    xb, yb = _check_pair(x, y, params)
    g, mu_x, mu_y, a1, a2, b1, b2 = _ssim_terms(xb, yb, params)
    d = b1 * b2
    s = (a1 * a2) / d
    value = float(s.mean())

    c_y = 2.0 * a1 / d              # coefficient of (y_p - mu_y)
    c_x = -2.0 * s / b2             # coefficient of (x_p - mu_x)
    c_0 = 2.0 * (mu_y * a2 / d - mu_x * s / b1) - c_y * mu_y - c_x * mu_x

    grad = _blur_adjoint(c_0, g) + yb * _blur_adjoint(c_y, g) + xb * _blur_adjoint(c_x, g)
    grad /= s.size
    return value, grad


def mse_loss(a, b) -> float:
    """Mean squared error over all elements."""
    av = np.asarray(as_array(a), dtype=np.float64)
    bv = np.asarray(as_array(b), dtype=np.float64)
    if av.shape != bv.shape:
        raise ContractError(f"shape mismatch: {av.shape} vs {bv.shape}")
    if av.size == 0:
        raise ContractError("mse_loss on empty arrays")
    d = av - bv
    return float(np.mean(d * d))


def combine_loss(mse_value: float, ssim_value: float, ssim_weight: float = 10.0) -> float:
    """The scalar combination used by the objective:
    total = mse + weight * (1 - ssim)."""
    return float(mse_value) + float(ssim_weight) * (1.0 - float(ssim_value))


def total_loss(noise_pred, noise_true, noisy, params: SsimParams = SsimParams(),
               ssim_weight: float = 10.0) -> float:
    """Objective on a batch: MSE between noise maps plus the weighted SSIM
    deficit between the implied denoised images and the clean ones."""
    value, _ = _total_loss_impl(noise_pred, noise_true, noisy, params,
                                ssim_weight, want_grad=False)
    return value


def total_loss_and_grad(noise_pred, noise_true, noisy,
                        params: SsimParams = SsimParams(),
                        ssim_weight: float = 10.0):
    """Objective and its gradient with respect to the predicted noise map.

    Returns (loss, grad) with grad shaped like noise_pred (float64).
    """
    return _total_loss_impl(noise_pred, noise_true, noisy, params,
                            ssim_weight, want_grad=True)


def _total_loss_impl(noise_pred, noise_true, noisy, params, ssim_weight, want_grad):
    vp = _as_batch3(noise_pred, "noise_pred")
    vt = _as_batch3(noise_true, "noise_true")
    ny = _as_batch3(noisy, "noisy")
    if not (vp.shape == vt.shape == ny.shape):
        raise ContractError(
            f"shape mismatch: pred {vp.shape}, true {vt.shape}, noisy {ny.shape}")
    denoised = ny - vp
    clean = ny - vt
    diff = vp - vt
    mse = float(np.mean(diff * diff))
    if want_grad:
        ssim_value, ds_dx = ssim_and_grad(denoised, clean, params)
        loss = combine_loss(mse, ssim_value, ssim_weight)
        # d(denoised)/d(pred) = -1 flips the ssim term's sign back to +
        grad = (2.0 / diff.size) * diff + ssim_weight * ds_dx
        orig_shape = np.asarray(as_array(noise_pred)).shape
        return loss, grad.reshape(orig_shape)
    ssim_value = ssim(denoised, clean, params)
    return combine_loss(mse, ssim_value, ssim_weight), None
