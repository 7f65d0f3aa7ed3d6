"""Image container, file I/O, normalization and patch extraction.

Images are 2D grayscale intensity grids tagged with the domain they live in:

* ``raw_counts``      -- detector pixel values (nonnegative reals; integer
  file formats are promoted to float64 so photon arithmetic needs no casts)
* ``normalized_unit`` -- values scaled into [0, 1] by the full bit-depth range
* ``anscombe``        -- variance-stabilized values, see :mod:`xraydenoise.noise`

Supported file formats: binary 16-bit PGM (P5), 16-bit grayscale PNG, and a
raw float64 dump with an 8-byte width/height header (little-endian).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image as _PILImage

from .errors import ContractError, FormatError

UINT16_MAX = 65535


class Domain(str, Enum):
    """Value domain an image's pixels live in."""

    RAW_COUNTS = "raw_counts"
    NORMALIZED_UNIT = "normalized_unit"
    ANSCOMBE = "anscombe"


@dataclass
class Image:
    """A 2D grayscale image with domain and bit-depth metadata.

    ``pixels`` is always a float64 array of shape (height, width). Domain
    invariants are checked eagerly on construction: raw counts must be
    nonnegative, normalized values must lie in [0, 1], and NaN/Inf pixels
    are rejected in every domain.
    """

    pixels: np.ndarray
    domain: Domain = Domain.RAW_COUNTS
    bit_depth: int | None = None
    name: str = ""

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2 or self.pixels.size == 0:
            raise ContractError(
                f"image pixels must be a non-empty 2D array, got shape {self.pixels.shape}"
            )
        self.domain = Domain(self.domain)
        if not np.isfinite(self.pixels).all():
            raise ContractError("image contains NaN or Inf pixels")
        if self.domain is Domain.RAW_COUNTS and self.pixels.min() < 0:
            raise ContractError("raw_counts image has negative pixels")
        if self.domain is Domain.NORMALIZED_UNIT:
            lo, hi = self.pixels.min(), self.pixels.max()
            if lo < 0.0 or hi > 1.0:
                raise ContractError(
                    f"normalized_unit image outside [0, 1]: min={lo}, max={hi}"
                )
        if self.bit_depth is not None and self.bit_depth < 1:
            raise ContractError(f"bit_depth must be positive, got {self.bit_depth}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class Patch:
    """A square crop of a source image (raw-count domain)."""

    pixels: np.ndarray
    source_id: str
    origin: tuple[int, int]

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2 or self.pixels.shape[0] != self.pixels.shape[1]:
            raise ContractError(f"patch must be square 2D, got shape {self.pixels.shape}")
        if min(self.origin) < 0:
            raise ContractError(f"patch origin must be nonnegative, got {self.origin}")

    @property
    def size(self) -> int:
        return self.pixels.shape[0]


@dataclass
class Dataset:
    """Train/validation images plus the patches cut from them."""

    train_images: list[Image] = field(default_factory=list)
    val_images: list[Image] = field(default_factory=list)
    train_patches: list[Patch] = field(default_factory=list)
    val_patches: list[Patch] = field(default_factory=list)
    split_seed: int = 0

    def validate(self):
        """Check split disjointness and that every patch resolves to one image."""
        train_names = {im.name for im in self.train_images}
        val_names = {im.name for im in self.val_images}
        if len(train_names) != len(self.train_images) or len(val_names) != len(self.val_images):
            raise ContractError("image names within a split must be unique")
        overlap = train_names & val_names
        if overlap:
            raise ContractError(f"train/val image sets overlap: {sorted(overlap)}")
        for patches, names, split in (
            (self.train_patches, train_names, "train"),
            (self.val_patches, val_names, "val"),
        ):
            for p in patches:
                if p.source_id not in names:
                    raise ContractError(
                        f"{split} patch source_id {p.source_id!r} does not resolve to an image"
                    )


# ---------------------------------------------------------------------------
# File I/O

FORMATS = ("pgm16", "png16", "raw_f64")

_EXTENSION_FORMATS = {
    ".pgm": "pgm16",
    ".png": "png16",
    ".f64": "raw_f64",
    ".raw": "raw_f64",
}


def format_for_path(path) -> str:
    """Infer the file format from the path extension."""
    ext = Path(path).suffix.lower()
    if ext not in _EXTENSION_FORMATS:
        raise ContractError(
            f"cannot infer format from extension {ext!r}; expected one of {sorted(_EXTENSION_FORMATS)}"
        )
    return _EXTENSION_FORMATS[ext]


def _read_pgm16(path: Path) -> tuple[np.ndarray, int]:
    data = path.read_bytes()
    # P5 header: magic, width, height, maxval -- whitespace separated,
    # '#' comments allowed between tokens.
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise FormatError(f"{path}: truncated PGM header")
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as e:
        raise FormatError(f"{path}: bad PGM header: {e}") from None
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: bad PGM dimensions {width}x{height}")
    if not 256 <= maxval <= UINT16_MAX:
        raise FormatError(f"{path}: maxval {maxval} is not 16-bit PGM")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 2
    raster = data[pos : pos + expected]
    if len(raster) != expected:
        raise FormatError(f"{path}: truncated PGM raster ({len(raster)} of {expected} bytes)")
    arr = np.frombuffer(raster, dtype=">u2").reshape(height, width)
    return arr.astype(np.float64), maxval.bit_length()


def _write_pgm16(path: Path, arr: np.ndarray, bit_depth: int):
    maxval = (1 << bit_depth) - 1
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii")
    path.write_bytes(header + arr.astype(">u2").tobytes())


def _read_png16(path: Path) -> tuple[np.ndarray, int]:
    try:
        with _PILImage.open(path) as im:
            if im.mode not in ("I;16", "I;16B", "I"):
                raise FormatError(f"{path}: PNG mode {im.mode!r} is not 16-bit grayscale")
            arr = np.asarray(im, dtype=np.int64)
    except FormatError:
        raise
    except Exception as e:
        raise FormatError(f"{path}: cannot parse PNG: {e}") from None
    if arr.ndim != 2:
        raise FormatError(f"{path}: PNG is not single-channel")
    if arr.min() < 0 or arr.max() > UINT16_MAX:
        raise FormatError(f"{path}: PNG values outside the 16-bit range")
    return arr.astype(np.float64), 16


def _write_png16(path: Path, arr: np.ndarray, bit_depth: int):
    im = _PILImage.fromarray(arr.astype("<u2"))
    im.save(path, format="PNG")


def _read_raw_f64(path: Path) -> tuple[np.ndarray, None]:
    data = path.read_bytes()
    if len(data) < 8:
        raise FormatError(f"{path}: missing raw_f64 header")
    width, height = struct.unpack("<II", data[:8])
    if width == 0 or height == 0:
        raise FormatError(f"{path}: bad raw_f64 dimensions {width}x{height}")
    expected = 8 + width * height * 8
    if len(data) != expected:
        raise FormatError(f"{path}: raw_f64 size {len(data)} != expected {expected}")
    arr = np.frombuffer(data, dtype="<f8", offset=8).reshape(height, width)
    return arr.copy(), None


def _write_raw_f64(path: Path, arr: np.ndarray):
    path.write_bytes(struct.pack("<II", arr.shape[1], arr.shape[0]) + arr.astype("<f8").tobytes())


def load_image(path, fmt: str | None = None) -> Image:
    """Load an image file into the raw-count domain.

    Args:
        path: file to read.
        fmt: one of ``pgm16``, ``png16``, ``raw_f64``; inferred from the
            extension when omitted.

    Returns:
        Image with ``domain=raw_counts``; for integer formats the pixel
        values are preserved bit-exactly and ``bit_depth`` is recorded.

    Raises:
        OSError: unreadable file.
        FormatError: file does not parse under the declared format.
    """
    path = Path(path)
    fmt = fmt or format_for_path(path)
    if fmt == "pgm16":
        arr, bit_depth = _read_pgm16(path)
    elif fmt == "png16":
        arr, bit_depth = _read_png16(path)
    elif fmt == "raw_f64":
        arr, bit_depth = _read_raw_f64(path)
    else:
        raise ContractError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    return Image(arr, domain=Domain.RAW_COUNTS, bit_depth=bit_depth, name=path.stem)


def save_image(img: Image, path, fmt: str | None = None):
    """Write a raw-count image to disk.

    Integer formats (pgm16, png16) round to the nearest integer and require
    the values to fit the image's bit depth (default 16); ``raw_f64``
    preserves float64 values exactly.
    """
    path = Path(path)
    fmt = fmt or format_for_path(path)
    if img.domain is not Domain.RAW_COUNTS:
        raise ContractError(f"save_image expects raw_counts, got {img.domain.value}")
    if fmt == "raw_f64":
        _write_raw_f64(path, img.pixels)
        return
    bit_depth = img.bit_depth or 16
    maxval = (1 << bit_depth) - 1
    rounded = np.rint(img.pixels)
    if rounded.min() < 0 or rounded.max() > maxval:
        raise ContractError(
            f"pixel range [{img.pixels.min():.1f}, {img.pixels.max():.1f}] "
            f"does not fit {bit_depth}-bit output"
        )
    if fmt == "pgm16":
        _write_pgm16(path, rounded, bit_depth)
    elif fmt == "png16":
        _write_png16(path, rounded, bit_depth)
    else:
        raise ContractError(f"unknown format {fmt!r}; expected one of {FORMATS}")


# ---------------------------------------------------------------------------
# Normalization

def normalize(img: Image, max_value: float | None = None) -> Image:
    """Scale raw counts into [0, 1] by the full bit-depth range.

    ``pixel' = pixel / (2**bit_depth - 1)``, or by ``max_value`` when given.
    The mapping is strictly monotonic and invertible via :func:`denormalize`.
    """
    if img.domain is not Domain.RAW_COUNTS:
        raise ContractError(f"normalize expects raw_counts, got {img.domain.value}")
    if max_value is None:
        if img.bit_depth is None:
            raise ContractError("normalize needs bit_depth or an explicit max_value")
        max_value = float((1 << img.bit_depth) - 1)
    if max_value <= 0:
        raise ContractError(f"max_value must be positive, got {max_value}")
    return Image(
        img.pixels / max_value,
        domain=Domain.NORMALIZED_UNIT,
        bit_depth=img.bit_depth,
        name=img.name,
    )


def denormalize(img: Image, bit_depth: int | None = None) -> Image:
    """Invert :func:`normalize` back to raw counts."""
    if img.domain is not Domain.NORMALIZED_UNIT:
        raise ContractError(f"denormalize expects normalized_unit, got {img.domain.value}")
    bit_depth = bit_depth or img.bit_depth
    if bit_depth is None:
        raise ContractError("denormalize needs bit_depth")
    max_value = float((1 << bit_depth) - 1)
    return Image(
        img.pixels * max_value,
        domain=Domain.RAW_COUNTS,
        bit_depth=bit_depth,
        name=img.name,
    )


# ---------------------------------------------------------------------------
# Patch extraction

def extract_patches(
    img: Image,
    patch_size: int,
    count: int,
    strategy: str = "random",
    seed: int = 0,
) -> list[Patch]:
    """Cut ``count`` square patches from an image.

    Args:
        img: source image (any domain; training uses raw counts).
        patch_size: patch side length; must fit inside the image.
        count: number of patches to return (exactly).
        strategy: ``random`` draws origins uniformly (reproducible from
            ``seed``); ``grid`` tiles the image row-major with a final
            clamped row/column so tiles never exceed bounds.
        seed: RNG seed for the random strategy.

    Returns:
        List of exactly ``count`` patches; each patch's pixel block equals
        the corresponding sub-array of the source image.
    """
    h, w = img.pixels.shape
    if patch_size < 1 or patch_size > min(h, w):
        raise ContractError(
            f"patch_size {patch_size} does not fit image {h}x{w}"
        )
    if count < 1:
        raise ContractError(f"count must be >= 1, got {count}")

    if strategy == "random":
        rng = np.random.Generator(np.random.Philox(seed))
        rows = rng.integers(0, h - patch_size + 1, size=count)
        cols = rng.integers(0, w - patch_size + 1, size=count)
        origins = list(zip(rows.tolist(), cols.tolist()))
    elif strategy == "grid":
        rs = list(range(0, h - patch_size + 1, patch_size))
        cs = list(range(0, w - patch_size + 1, patch_size))
        if rs[-1] != h - patch_size:
            rs.append(h - patch_size)
        if cs[-1] != w - patch_size:
            cs.append(w - patch_size)
        origins = [(r, c) for r in rs for c in cs]
        if count > len(origins):
            raise ContractError(
                f"grid strategy has {len(origins)} tiles, cannot return {count} patches"
            )
        origins = origins[:count]
    else:
        raise ContractError(f"unknown strategy {strategy!r}; expected 'random' or 'grid'")

    return [
        Patch(
            img.pixels[r : r + patch_size, c : c + patch_size].copy(),
            source_id=img.name,
            origin=(r, c),
        )
        for r, c in origins
    ]
