"""Whole-image denoising via tiled network inference.

Large images are processed as overlapping tiles and blended with linear
ramps so tile seams are invisible. Ramps are only applied on edges that have
a neighbouring tile, which makes the single-tile case bit-identical to a
direct forward pass.
"""

from typing import Optional

import numpy as np

from ..errors import ContractError
from ..imaging import Domain, Image
from ..noise import GainModel, anscombe, anscombe_inv
from .model import Model


def _tile_origins(length: int, tile: int, step: int):
    """Origins covering [0, length) with the last tile clamped flush."""
    if tile >= length:
        return [0]
    origins = list(range(0, length - tile + 1, step))
    if origins[-1] != length - tile:
        origins.append(length - tile)
    return origins


def _edge_weights(tile: int, overlap: int, has_before: bool, has_after: bool,
                  dtype=np.float64) -> np.ndarray:
    """1-D blend profile: a linear ramp over the overlap on interior edges,
    flat 1 elsewhere. Ramp values stay strictly positive."""
    w = np.ones(tile, dtype=dtype)
    ramp = np.arange(1, overlap + 1, dtype=dtype) / (overlap + 1)
    if has_before:
        w[:overlap] = ramp
    if has_after:
        w[tile - overlap:] = ramp[::-1]
    return w


def predict_noise_map(model: Model, transformed: np.ndarray,
                      tile: int = 64, overlap: int = 16) -> np.ndarray:
    """Estimate the noise map of one 2-D variance-stabilised image.

    Runs the model in eval mode over overlapping tiles and blends the
    predictions. Returns float64 of the same shape.
    """
    transformed = np.asarray(transformed, dtype=np.float64)
    if transformed.ndim != 2:
        raise ContractError(f"expected a 2-D image, got shape {transformed.shape}")
    if not np.all(np.isfinite(transformed)):
        raise ContractError("image contains non-finite values")
    H, W = transformed.shape
    if H < model.config.kernel or W < model.config.kernel:
        raise ContractError(f"image {H}x{W} smaller than the model kernel")
    th, tw = min(tile, H), min(tile, W)
    if overlap < 0 or (overlap >= th and th < H) or (overlap >= tw and tw < W):
        raise ContractError(f"overlap {overlap} must be in [0, tile) when tiling")
    rows = _tile_origins(H, th, th - overlap)
    cols = _tile_origins(W, tw, tw - overlap)

    batch = np.empty((len(rows) * len(cols), 1, th, tw), dtype=np.float64)
    i = 0
    for r in rows:
        for c in cols:
            batch[i, 0] = transformed[r:r + th, c:c + tw]
            i += 1
    pred = model.forward(batch, mode="eval").astype(np.float64)

    num = np.zeros((H, W), dtype=np.float64)
    den = np.zeros((H, W), dtype=np.float64)
    i = 0
    for r in rows:
        wr = _edge_weights(th, overlap, r > 0, r + th < H)
        for c in cols:
            wc = _edge_weights(tw, overlap, c > 0, c + tw < W)
            w2 = wr[:, None] * wc[None, :]
            num[r:r + th, c:c + tw] += pred[i, 0] * w2
            den[r:r + th, c:c + tw] += w2
            i += 1
    return num / den


def denoise_image(model: Model, noisy: Image, gain: GainModel,
                  output_domain: str = "counts", inverse_mode: str = "unbiased",
                  tile: int = 64, overlap: int = 16,
                  name: Optional[str] = None) -> Image:
    """Full pipeline on one raw-counts image: stabilise variance, subtract
    the predicted noise map, and map back to the requested domain.

    output_domain: "counts" (detector units), "anscombe" (leave in the
    stabilised domain), or "normalized" ([0, 1] by bit depth, clipped).
    """
    if noisy.domain is not Domain.RAW_COUNTS:
        raise ContractError(f"denoise_image expects raw counts, got {noisy.domain}")
    if output_domain not in ("counts", "anscombe", "normalized"):
        raise ContractError(f"unknown output_domain {output_domain!r}")
    lambdas = noisy.pixels / gain.k
    transformed = anscombe(lambdas)
    vhat = predict_noise_map(model, transformed, tile=tile, overlap=overlap)
    clean_t = transformed - vhat
    out_name = name if name is not None else noisy.name + "_denoised"
    if output_domain == "anscombe":
        return Image(pixels=clean_t, domain=Domain.ANSCOMBE,
                     bit_depth=noisy.bit_depth, name=out_name)
    counts = gain.k * anscombe_inv(clean_t, mode=inverse_mode)
    if output_domain == "counts":
        return Image(pixels=counts, domain=Domain.RAW_COUNTS,
                     bit_depth=noisy.bit_depth, name=out_name)
    if noisy.bit_depth is None:
        raise ContractError("normalized output needs the input bit depth")
    scale = float(2 ** noisy.bit_depth - 1)
    normalized = np.clip(counts / scale, 0.0, 1.0)
    return Image(pixels=normalized, domain=Domain.NORMALIZED_UNIT,
                 bit_depth=noisy.bit_depth, name=out_name)
