"""Synthetic mammogram-like phantoms with embedded microcalcifications.

Stands in for proprietary detector data at desk scale: a band-limited tissue
texture (or a smooth gradient) in raw-count units, plus small bright discs of
0.5-3 px radius modelling microcalcifications -- the detail-preservation
benchmark for the denoiser. Everything is a pure function of the spec, so
datasets regenerate bit-identically from their seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import ContractError
from .imaging import Dataset, Domain, Image, extract_patches
from .seeding import derive_seed

BACKGROUNDS = ("smooth_gradient", "filtered_noise_texture")

#: Allowed calcification radius range in pixels (smallest ones are meant to
#: sit at the edge of visibility in the noise).
RADIUS_RANGE = (0.5, 3.0)


@dataclass
class Calcification:
    """One bright disc: center (row, col), radius in pixels, additive contrast."""

    center: tuple[float, float]
    radius_px: float
    contrast: float

    def __post_init__(self):
        if not RADIUS_RANGE[0] <= self.radius_px <= RADIUS_RANGE[1]:
            raise ContractError(
                f"calcification radius {self.radius_px} outside {RADIUS_RANGE}"
            )
        if self.contrast <= 0:
            raise ContractError(f"calcification contrast must be positive, got {self.contrast}")


@dataclass
class PhantomSpec:
    """Recipe for one synthetic image (raw-count domain)."""

    width: int = 256
    height: int = 256
    background: str = "filtered_noise_texture"
    tissue_scale: float = 6.0
    intensity_range: tuple[float, float] = (400.0, 4000.0)
    calcifications: list[Calcification] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ContractError(f"bad phantom size {self.width}x{self.height}")
        if self.background not in BACKGROUNDS:
            raise ContractError(
                f"unknown background {self.background!r}; expected one of {BACKGROUNDS}"
            )
        low, high = self.intensity_range
        if low < 0 or low >= high:
            raise ContractError(f"intensity_range must satisfy 0 <= low < high, got {self.intensity_range}")
        if self.tissue_scale <= 0:
            raise ContractError(f"tissue_scale must be positive, got {self.tissue_scale}")
        self.calcifications = [
            c if isinstance(c, Calcification) else Calcification(**c)
            for c in self.calcifications
        ]
        for c in self.calcifications:
            r, col = c.center
            margin = c.radius_px + 0.5
            if not (margin <= r <= self.height - 1 - margin and margin <= col <= self.width - 1 - margin):
                raise ContractError(
                    f"calcification at {c.center} (radius {c.radius_px}) exceeds image bounds"
                )

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "background": self.background,
            "tissue_scale": self.tissue_scale,
            "intensity_range": list(self.intensity_range),
            "calcifications": [
                {"center": list(c.center), "radius_px": c.radius_px, "contrast": c.contrast}
                for c in self.calcifications
            ],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        d = dict(d)
        if "intensity_range" in d:
            d["intensity_range"] = tuple(d["intensity_range"])
        if "calcifications" in d:
            d["calcifications"] = [
                Calcification(center=tuple(c["center"]), radius_px=c["radius_px"], contrast=c["contrast"])
                for c in d["calcifications"]
            ]
        return cls(**d)


def generate_phantom(spec: PhantomSpec, name: str = "") -> Image:
    """Render a phantom image from its spec (deterministic in spec.seed).

    The background fills ``intensity_range``; each calcification raises the
    local mean by its contrast over an anti-aliased disc of its radius.
    """
    h, w = spec.height, spec.width
    low, high = spec.intensity_range

    if spec.background == "smooth_gradient":
        rr = np.linspace(0.0, 1.0, h)[:, None]
        cc = np.linspace(0.0, 1.0, w)[None, :]
        base = low + (high - low) * 0.5 * (rr + cc)
    else:
        rng = np.random.Generator(np.random.Philox(spec.seed))
        white = rng.standard_normal((h, w))
        textured = ndimage.gaussian_filter(white, sigma=spec.tissue_scale, mode="wrap")
        lo, hi = textured.min(), textured.max()
        if hi - lo < 1e-12:
            base = np.full((h, w), 0.5 * (low + high))
        else:
            base = low + (high - low) * (textured - lo) / (hi - lo)

    out = base.copy()
    if spec.calcifications:
        rows = np.arange(h)[:, None]
        cols = np.arange(w)[None, :]
        for c in spec.calcifications:
            dist = np.hypot(rows - c.center[0], cols - c.center[1])
            # Anti-aliased disc: full weight inside radius-0.5, linear
            # falloff to zero at radius+0.5.
            weight = np.clip(c.radius_px + 0.5 - dist, 0.0, 1.0)
            out += c.contrast * weight

    return Image(out, domain=Domain.RAW_COUNTS, bit_depth=16, name=name)


def _randomize_calcifications(spec: PhantomSpec, rng: np.random.Generator) -> list[Calcification]:
    """Redraw placements/radii of the base spec's calcifications."""
    out = []
    for c in spec.calcifications:
        radius = float(rng.uniform(*RADIUS_RANGE))
        margin = radius + 1.5
        row = float(rng.uniform(margin, spec.height - 1 - margin))
        col = float(rng.uniform(margin, spec.width - 1 - margin))
        out.append(Calcification(center=(row, col), radius_px=radius, contrast=c.contrast))
    return out


def generate_dataset(
    n_train: int,
    n_val: int,
    base_spec: PhantomSpec,
    seed: int,
    patches_per_image: int = 400,
    patch_size: int = 64,
) -> Dataset:
    """Generate a disjoint train/val phantom dataset plus training patches.

    Per-image specs vary the texture seed and randomize calcification
    placements and radii; patch origins are drawn per image from derived
    seeds. Deterministic in (arguments, seed). patches_per_image = 0 skips
    patch extraction (images only).
    """
    if n_train < 1 or n_val < 1:
        raise ContractError(f"need n_train, n_val >= 1, got {n_train}, {n_val}")
    if patches_per_image < 0:
        raise ContractError(f"patches_per_image must be >= 0, got {patches_per_image}")

    def make_split(prefix: str, n: int):
        images, patches = [], []
        for i in range(n):
            img_seed = derive_seed(seed, prefix, i, "texture")
            place_rng = np.random.Generator(
                np.random.Philox(derive_seed(seed, prefix, i, "placement"))
            )
            spec_i = replace(
                base_spec,
                seed=img_seed,
                calcifications=_randomize_calcifications(base_spec, place_rng),
            )
            img = generate_phantom(spec_i, name=f"{prefix}_{i:03d}")
            images.append(img)
            if patches_per_image:
                patches.extend(
                    extract_patches(
                        img,
                        patch_size,
                        patches_per_image,
                        strategy="random",
                        seed=derive_seed(seed, prefix, i, "patches"),
                    )
                )
        return images, patches

    train_images, train_patches = make_split("train", n_train)
    val_images, val_patches = make_split("val", n_val)
    ds = Dataset(
        train_images=train_images,
        val_images=val_images,
        train_patches=train_patches,
        val_patches=val_patches,
        split_seed=seed,
    )
    ds.validate()
    return ds
