"""Image container, file round-trips, normalization, patch extraction."""

import numpy as np
import pytest

from xraydenoise import (
    ContractError,
    Dataset,
    Domain,
    FormatError,
    Image,
    Patch,
    extract_patches,
    format_for_path,
    load_image,
    normalize,
    denormalize,
    save_image,
)


def _img(arr, **kw):
    return Image(np.asarray(arr, dtype=np.float64), **kw)


# ---------------------------------------------------------------------------
# Image invariants

def test_image_rejects_negative_raw_counts():
    with pytest.raises(ContractError):
        _img([[0.0, -1.0]])


def test_image_rejects_normalized_outside_unit_interval():
    with pytest.raises(ContractError):
        Image(np.array([[0.5, 1.5]]), domain=Domain.NORMALIZED_UNIT)
    with pytest.raises(ContractError):
        Image(np.array([[-0.1, 0.5]]), domain=Domain.NORMALIZED_UNIT)


def test_image_rejects_nan_and_inf():
    with pytest.raises(ContractError):
        _img([[np.nan, 1.0]])
    with pytest.raises(ContractError):
        Image(np.array([[np.inf, 1.0]]), domain=Domain.ANSCOMBE)


def test_image_rejects_wrong_rank_and_empty():
    with pytest.raises(ContractError):
        Image(np.zeros(4))
    with pytest.raises(ContractError):
        Image(np.zeros((0, 4)))


def test_image_shape_metadata():
    im = _img(np.zeros((3, 5)))
    assert im.height == 3 and im.width == 5
    assert im.pixels.dtype == np.float64


# ---------------------------------------------------------------------------
# File I/O

def test_load_constant_pgm(tmp_path):
    # hand-rolled 16-bit P5: 4x4, every pixel 1000
    raster = np.full((4, 4), 1000, dtype=">u2").tobytes()
    p = tmp_path / "flat.pgm"
    p.write_bytes(b"P5\n4 4\n65535\n" + raster)
    im = load_image(p)
    assert im.pixels.shape == (4, 4)
    assert np.all(im.pixels == 1000.0)
    assert im.domain is Domain.RAW_COUNTS
    assert im.bit_depth == 16


@pytest.mark.parametrize("ext", [".pgm", ".png"])
def test_integer_roundtrip_bit_exact(tmp_path, ext):
    rng = np.random.Generator(np.random.Philox(5))
    arr = rng.integers(0, 65536, size=(13, 7)).astype(np.float64)
    src = Image(arr, bit_depth=16, name="x")
    path = tmp_path / ("x" + ext)
    save_image(src, path)
    back = load_image(path)
    assert np.array_equal(back.pixels, arr)
    assert back.bit_depth == 16


def test_raw_f64_roundtrip_preserves_floats(tmp_path):
    rng = np.random.Generator(np.random.Philox(6))
    arr = rng.random((5, 9)) * 123.456
    path = tmp_path / "x.f64"
    save_image(Image(arr), path)
    back = load_image(path)
    assert np.array_equal(back.pixels, arr)
    assert back.bit_depth is None


def test_truncated_pgm_raster_is_format_error(tmp_path):
    p = tmp_path / "short.pgm"
    p.write_bytes(b"P5\n4 4\n65535\n" + b"\x00" * 10)
    with pytest.raises(FormatError):
        load_image(p)


def test_bad_pgm_magic_is_format_error(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P2\n2 2\n65535\n" + b"\x00" * 8)
    with pytest.raises(FormatError):
        load_image(p)


def test_truncated_raw_f64_is_format_error(tmp_path):
    p = tmp_path / "short.f64"
    p.write_bytes(b"\x02\x00\x00\x00")
    with pytest.raises(FormatError):
        load_image(p)


def test_missing_file_is_os_error(tmp_path):
    with pytest.raises(OSError):
        load_image(tmp_path / "nope.pgm")


def test_format_inference():
    assert format_for_path("a/b.pgm") == "pgm16"
    assert format_for_path("a/b.PNG") == "png16"
    assert format_for_path("a/b.f64") == "raw_f64"
    with pytest.raises(ContractError):
        format_for_path("a/b.tiff")


def test_save_rejects_out_of_range_for_bit_depth(tmp_path):
    im = Image(np.array([[4096.0]]), bit_depth=12)
    with pytest.raises(ContractError):
        save_image(im, tmp_path / "x.pgm")


# ---------------------------------------------------------------------------
# Normalization

def test_normalize_full_scale_and_zero():
    im = Image(np.array([[0.0, 65535.0]]), bit_depth=16)
    out = normalize(im)
    assert out.domain is Domain.NORMALIZED_UNIT
    assert out.pixels[0, 0] == 0.0
    assert out.pixels[0, 1] == 1.0


def test_normalize_roundtrip_within_1e12():
    rng = np.random.Generator(np.random.Philox(7))
    arr = rng.random((6, 6)) * 4095
    im = Image(arr, bit_depth=12)
    back = denormalize(normalize(im))
    assert np.max(np.abs(back.pixels - arr)) < 1e-12 * 4095


def test_normalize_is_strictly_monotonic():
    vals = np.sort(np.random.Generator(np.random.Philox(8)).random(32)) * 1000
    vals = np.unique(vals)
    im = Image(vals[None, :], bit_depth=10)
    out = normalize(im).pixels[0]
    assert np.all(np.diff(out) > 0)


def test_normalize_needs_bit_depth_or_max():
    im = Image(np.array([[1.0]]))
    with pytest.raises(ContractError):
        normalize(im)
    assert normalize(im, max_value=2.0).pixels[0, 0] == 0.5


# ---------------------------------------------------------------------------
# Patch extraction

def test_patches_equal_source_subarrays():
    rng = np.random.Generator(np.random.Philox(9))
    im = Image(rng.random((40, 50)) * 100, name="src")
    for p in extract_patches(im, 16, 25, strategy="random", seed=3):
        r, c = p.origin
        assert np.array_equal(p.pixels, im.pixels[r:r + 16, c:c + 16])
        assert p.source_id == "src"


def test_grid_patch_of_exact_size_image_is_whole_image():
    im = Image(np.arange(64.0 * 64).reshape(64, 64), name="whole")
    (p,) = extract_patches(im, 64, 1, strategy="grid")
    assert p.origin == (0, 0)
    assert np.array_equal(p.pixels, im.pixels)


def test_random_patches_reproducible_from_seed():
    im = Image(np.zeros((64, 64)), name="z")
    a = extract_patches(im, 8, 20, strategy="random", seed=11)
    b = extract_patches(im, 8, 20, strategy="random", seed=11)
    assert [p.origin for p in a] == [p.origin for p in b]
    c = extract_patches(im, 8, 20, strategy="random", seed=12)
    assert [p.origin for p in a] != [p.origin for p in c]


def test_patch_count_bookkeeping_matches_400_per_image():
    # 100 train images and 25 val images at 400 patches each
    def total(n_images):
        n = 0
        for i in range(n_images):
            im = Image(np.zeros((32, 32)), name=f"im{i}")
            n += len(extract_patches(im, 8, 400, strategy="random", seed=i))
        return n

    assert total(100) == 40_000
    assert total(25) == 10_000


def test_oversized_patch_is_contract_error():
    im = Image(np.zeros((16, 16)))
    with pytest.raises(ContractError):
        extract_patches(im, 17, 1)


def test_grid_cannot_exceed_tile_count():
    im = Image(np.zeros((16, 16)), name="t")
    with pytest.raises(ContractError):
        extract_patches(im, 8, 5, strategy="grid")


def test_grid_tiles_never_exceed_bounds():
    im = Image(np.zeros((20, 20)), name="t")
    patches = extract_patches(im, 8, 9, strategy="grid")
    for p in patches:
        r, c = p.origin
        assert r + 8 <= 20 and c + 8 <= 20


# ---------------------------------------------------------------------------
# Dataset split hygiene

def test_dataset_rejects_split_overlap():
    a = Image(np.zeros((4, 4)), name="a")
    ds = Dataset(train_images=[a], val_images=[Image(np.zeros((4, 4)), name="a")])
    with pytest.raises(ContractError):
        ds.validate()


def test_dataset_rejects_unresolvable_patch():
    a = Image(np.zeros((8, 8)), name="a")
    stray = Patch(np.zeros((4, 4)), source_id="ghost", origin=(0, 0))
    ds = Dataset(train_images=[a], val_images=[], train_patches=[stray])
    with pytest.raises(ContractError):
        ds.validate()
