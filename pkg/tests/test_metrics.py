"""Metric values against hand-computable cases, plus evaluate() behavior."""

import csv
import io
import math

import numpy as np
import pytest

from xraydenoise import (
    ContractError,
    Domain,
    EvalRecord,
    GainModel,
    Image,
    SsimParams,
    evaluate,
    gaussian_denoise,
    gaussian_kernel,
    gaussian_smooth,
    psnr,
    sigma_image,
)


# ---------------------------------------------------------------------------
# PSNR

def test_psnr_identical_is_inf():
    a = np.linspace(0.0, 1.0, 64).reshape(8, 8)
    assert psnr(a, a) == float("inf")


def test_psnr_known_mse_exact():
    # 100 pixels, one differing by 1.0: MSE = 1/100, so 10*log10(100) = 20 dB
    a = np.zeros((10, 10))
    b = a.copy()
    b[3, 7] = 1.0
    assert psnr(a, b, peak=1.0) == 20.0


def test_psnr_decreases_with_mse():
    rng = np.random.Generator(np.random.Philox(321))
    a = rng.random((16, 16))
    d = rng.standard_normal((16, 16))
    vals = [psnr(a, a + s * d) for s in (0.01, 0.02, 0.05, 0.1, 0.5)]
    assert all(x > y for x, y in zip(vals, vals[1:]))


def test_psnr_peak_shift():
    # quadrupling the peak adds 10*log10(16) dB for the same error
    a = np.zeros((10, 10))
    b = a.copy()
    b[0, 0] = 1.0
    assert psnr(a, b, peak=4.0) == pytest.approx(
        psnr(a, b, peak=1.0) + 10.0 * math.log10(16.0), abs=1e-12)


def test_psnr_input_validation():
    with pytest.raises(ContractError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))
    with pytest.raises(ContractError):
        psnr(np.zeros((0, 4)), np.zeros((0, 4)))
    with pytest.raises(ContractError):
        psnr(np.zeros((4, 4)), np.zeros((4, 4)), peak=0.0)


# ---------------------------------------------------------------------------
# sigma_image

def test_sigma_half_zeros_half_ones():
    x = np.zeros(10)
    x[:5] = 1.0
    assert sigma_image(x) == 0.5


def test_sigma_constant_is_zero():
    assert sigma_image(np.full((12, 12), 3.25)) == 0.0


def test_sigma_shift_and_scale():
    rng = np.random.Generator(np.random.Philox(77))
    a = rng.random((20, 20))
    s = sigma_image(a)
    assert sigma_image(a + 10.0) == pytest.approx(s, abs=1e-12)
    assert sigma_image(3.0 * a) == pytest.approx(3.0 * s, rel=1e-12)


def test_sigma_roi_matches_subarray():
    rng = np.random.Generator(np.random.Philox(78))
    a = rng.random((32, 32))
    assert sigma_image(a, roi=(4, 10, 8, 6)) == float(a[4:12, 10:16].std())


def test_sigma_roi_validation():
    a = np.zeros((16, 16))
    with pytest.raises(ContractError):
        sigma_image(a, roi=(0, 0, 0, 4))
    with pytest.raises(ContractError):
        sigma_image(a, roi=(10, 10, 8, 8))
    with pytest.raises(ContractError):
        sigma_image(np.zeros(16), roi=(0, 0, 2, 2))


def test_sigma_normalizes_raw_count_images():
    """Counts with a known bit depth land on the unit scale before std."""
    px = np.zeros((10, 10))
    px[:5] = 65535.0
    img = Image(pixels=px, domain=Domain.RAW_COUNTS, bit_depth=16, name="t")
    assert sigma_image(img) == 0.5
    assert sigma_image(px) == 0.5 * 65535.0


# ---------------------------------------------------------------------------
# Gaussian smoothing

def test_kernel_normalized_and_symmetric():
    for s in (0.5, 1.0, 2.0):
        k = gaussian_kernel(s)
        assert len(k) == 2 * math.ceil(4.0 * s) + 1
        assert abs(k.sum() - 1.0) < 1e-12
        assert np.array_equal(k, k[::-1])
        assert k.argmax() == len(k) // 2


def test_kernel_rejects_bad_sigma():
    with pytest.raises(ContractError):
        gaussian_kernel(0.0)
    with pytest.raises(ContractError):
        gaussian_kernel(-1.0)


def test_impulse_response_is_separable_outer_product():
    # the 2-d response away from borders is exactly outer(k, k)
    k = gaussian_kernel(1.0)
    r = len(k) // 2
    imp = np.zeros((31, 31))
    imp[15, 15] = 1.0
    sm = gaussian_smooth(imp, 1.0)
    window = sm[15 - r:15 + r + 1, 15 - r:15 + r + 1]
    assert np.allclose(window, np.outer(k, k), atol=1e-15)
    assert sm[15, 15] == pytest.approx(k[r] ** 2, abs=1e-15)
    assert sm.sum() == pytest.approx(1.0, abs=1e-12)


def test_smooth_preserves_constants():
    a = np.full((24, 24), 7.5)
    assert np.allclose(gaussian_smooth(a, 1.5), a, atol=1e-12)


def test_gaussian_denoise_constant_round_trip():
    img = Image(pixels=np.full((16, 16), 500.0), domain=Domain.RAW_COUNTS,
                bit_depth=16, name="flat")
    out = gaussian_denoise(img, GainModel(k=2.0), sigma=1.0,
                           inverse_mode="algebraic")
    assert out.domain is Domain.RAW_COUNTS
    assert out.name == "flat_gaussian"
    assert np.abs(out.pixels - 500.0).max() < 1e-9


def test_gaussian_denoise_reduces_noise_on_flat_field():
    rng = np.random.Generator(np.random.Philox(4242))
    k = 2.0
    noisy = Image(pixels=k * rng.poisson(200.0, size=(64, 64)).astype(np.float64),
                  domain=Domain.RAW_COUNTS, bit_depth=16, name="flat")
    out = gaussian_denoise(noisy, GainModel(k=k), sigma=1.0)
    assert sigma_image(out) < 0.5 * sigma_image(noisy)


def test_gaussian_denoise_requires_raw_counts():
    img = Image(pixels=np.full((8, 8), 0.5), domain=Domain.NORMALIZED_UNIT,
                bit_depth=16, name="u")
    with pytest.raises(ContractError):
        gaussian_denoise(img, GainModel(k=1.0))


# ---------------------------------------------------------------------------
# evaluate

def _img(px, name):
    return Image(pixels=np.asarray(px, dtype=np.float64),
                 domain=Domain.RAW_COUNTS, bit_depth=16, name=name)


def _pairs(n=2, size=24, seed=9):
    rng = np.random.Generator(np.random.Philox(seed))
    out = []
    for i in range(n):
        base = 2000.0 + 500.0 * rng.random((size, size))
        gt = _img(base, f"gt{i}")
        noisy = _img(base + 40.0 * rng.standard_normal((size, size)),
                     f"noisy{i}")
        out.append((gt, noisy))
    return out


def test_noisy_row_first_and_identity_matches_it():
    pairs = _pairs()
    rep = evaluate([("Identity", lambda ny, g: ny)], pairs)
    assert rep.records[0].method == "Noisy"
    noisy_row, ident = rep.records[0], rep.by_method("Identity")
    assert ident.psnr_db == noisy_row.psnr_db
    assert ident.ssim == noisy_row.ssim
    assert ident.sigma_image == noisy_row.sigma_image
    assert rep.n_images == 2


def test_perfect_denoiser_saturates_metrics():
    pairs = _pairs()
    lookup = {ny.name: gt for gt, ny in pairs}
    rep = evaluate([("Oracle", lambda ny, g: lookup[ny.name])], pairs)
    row = rep.by_method("Oracle")
    assert math.isinf(row.psnr_db)
    assert row.ssim == 1.0
    expect_sigma = np.mean([sigma_image(gt) for gt, _ in pairs])
    assert row.sigma_image == pytest.approx(expect_sigma, abs=1e-15)


def test_failing_method_gets_error_row_and_run_continues():
    pairs = _pairs()

    def bad(ny, g):
        return _img(np.zeros((4, 4)), "wrong")

    rep = evaluate([("Bad", bad), ("Identity", lambda ny, g: ny)], pairs)
    row = rep.by_method("Bad")
    assert row.error is not None and "shape" in row.error
    assert math.isnan(row.psnr_db) and math.isnan(row.ssim)
    assert row.n_images == 0
    # the later method still ran
    assert math.isfinite(rep.by_method("Identity").psnr_db)


def test_raising_method_gets_error_row():
    pairs = _pairs()

    def boom(ny, g):
        raise ValueError("deliberate failure")

    rep = evaluate([("Boom", boom)], pairs)
    assert rep.by_method("Boom").error == "deliberate failure"


def test_reserved_name_and_empty_set_rejected():
    pairs = _pairs()
    with pytest.raises(ContractError):
        evaluate([("Noisy", lambda ny, g: ny)], pairs)
    with pytest.raises(ContractError):
        evaluate([("A", lambda ny, g: ny)], [])


def test_mismatched_pair_rejected_before_scoring():
    gt = _img(np.full((16, 16), 100.0), "gt")
    ny = _img(np.full((16, 17), 100.0), "ny")
    with pytest.raises(ContractError):
        evaluate([("A", lambda n, g: n)], [(gt, ny)])


def test_pair_order_does_not_change_means():
    pairs = _pairs(n=2)
    a = evaluate([("Identity", lambda ny, g: ny)], pairs)
    b = evaluate([("Identity", lambda ny, g: ny)], pairs[::-1])
    # mean of two floats is order independent
    assert a.records[0].psnr_db == b.records[0].psnr_db
    assert a.records[0].ssim == b.records[0].ssim


def test_gain_is_threaded_through_to_methods():
    pairs = _pairs(n=1)
    seen = []

    def probe(ny, g):
        seen.append(g)
        return ny

    evaluate([("Probe", probe)], pairs, gain=GainModel(k=2.5))
    assert seen[0].k == 2.5


def test_annotations_appended_verbatim():
    pairs = _pairs(n=1)
    quoted = EvalRecord(method="Published", psnr_db=38.31, ssim=0.911,
                        sigma_image=0.012, n_images=400)
    rep = evaluate([("Identity", lambda ny, g: ny)], pairs,
                   annotations=[quoted])
    assert rep.records[-1] is quoted


def test_report_text_and_csv():
    pairs = _pairs(n=2)

    def bad(ny, g):
        raise ValueError("nope")

    rep = evaluate([("Identity", lambda ny, g: ny), ("Bad", bad)], pairs,
                   ssim_params=SsimParams(dynamic_range=1.0))
    text = rep.to_text()
    assert text.splitlines()[0].startswith("method")
    assert "Noisy" in text and "Bad" in text and "error: nope" in text
    assert "(2 images)" in text

    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0] == ["method", "psnr_db", "ssim", "sigma_image",
                       "n_images", "error"]
    assert rows[1][0] == "Noisy"
    # %.17g output reparses to the identical float
    assert float(rows[1][1]) == rep.records[0].psnr_db
    bad_row = [r for r in rows[1:] if r[0] == "Bad"][0]
    assert bad_row[5] == "nope"


def test_by_method_unknown_raises():
    rep = evaluate([("Identity", lambda ny, g: ny)], _pairs(n=1))
    with pytest.raises(KeyError):
        rep.by_method("Never")
