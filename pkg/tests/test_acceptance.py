"""Shipping gates: nine go/no-go checks, one test per criterion.

Run with -v for the per-criterion pass/fail lines. The two slow criteria
(the end-to-end desk run and its determinism repeat) share a module fixture
and together take roughly twenty minutes on one CPU core; everything else
finishes in seconds.
"""

import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from xraydenoise import (
    GainModel,
    ModelConfig,
    RunConfig,
    build_model,
    combine_loss,
    estimate_gain,
    extract_patches,
    gradient_check,
    param_count,
    psnr,
    sigma_image,
    ssim,
)
from xraydenoise.losses import SsimParams
from xraydenoise.noise import (
    PhotonImage,
    anscombe,
    anscombe_inv,
    simulate_dose_reduction,
)
from xraydenoise.phantom import Calcification, PhantomSpec, generate_phantom
from xraydenoise.pipeline import run_evaluate, run_phantom, run_train
from xraydenoise.training import TrainConfig, overfit_probe


def test_criterion_1_parameter_audit():
    t0 = time.perf_counter()
    resnet = param_count(build_model(ModelConfig(), init_seed=0))
    plain = param_count(build_model(ModelConfig(arch="plain_cnn"), init_seed=0))
    elapsed = time.perf_counter() - t0
    assert resnet == 1_731_137
    assert plain == 557_057
    assert elapsed < 1.0
    print(f"criterion 1 PASS: resnet {resnet}, plain {plain} ({elapsed:.2f}s)")


def test_criterion_2_anscombe_round_trip_and_stabilization():
    t0 = time.perf_counter()
    z = np.array([0.0, 1.0, 10.0, 1e3, 1e6])
    back = anscombe_inv(anscombe(z), mode="algebraic")
    assert np.abs(back - z).max() < 1e-9
    stds = {}
    for lam in (30.0, 100.0, 1000.0):
        rng = np.random.Generator(np.random.Philox(int(lam)))
        draws = rng.poisson(lam, size=100_000).astype(np.float64)
        stds[lam] = anscombe(draws).std()
        assert 0.95 < stds[lam] < 1.05
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    summary = ", ".join(f"{k:g}: {v:.3f}" for k, v in stds.items())
    print(f"criterion 2 PASS: round trip < 1e-9; stabilized std {summary} "
          f"({elapsed:.2f}s)")


def test_criterion_3_gain_recovery():
    t0 = time.perf_counter()
    errs = {}
    for i, k in enumerate((0.5, 1.0, 2.0, 5.0)):
        rng = np.random.Generator(np.random.Philox(9000 + i))
        z = k * rng.poisson(100.0, size=(1000, 1000)).astype(np.float64)
        g = estimate_gain(z)
        errs[k] = abs(g.k - k) / k
        assert errs[k] < 0.02
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    worst = max(errs.values())
    print(f"criterion 3 PASS: worst relative error {worst:.4%} ({elapsed:.2f}s)")


def test_criterion_4_thinning_moments():
    t0 = time.perf_counter()
    src = PhotonImage(np.full((250, 400), 100.0), name="flat")
    thinned = simulate_dose_reduction(src, alpha=0.2, seed=55).lambdas
    n = thinned.size
    m, v = thinned.mean(), thinned.var()
    se_mean = np.sqrt(20.0 / n)
    se_var = np.sqrt((2 * 20.0 ** 2 + 20.0) / n)
    assert abs(m - 20.0) < 3 * se_mean
    assert abs(v - 20.0) < 3 * se_var
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    print(f"criterion 4 PASS: mean {m:.3f} (3se {3 * se_mean:.3f}), "
          f"var {v:.3f} (3se {3 * se_var:.3f}) ({elapsed:.2f}s)")


def test_criterion_5_gradient_check():
    t0 = time.perf_counter()
    err = gradient_check()
    elapsed = time.perf_counter() - t0
    assert err < 1e-4
    assert elapsed < 60.0
    print(f"criterion 5 PASS: max relative gradient error {err:.3g} "
          f"({elapsed:.2f}s)")


def test_criterion_6_trainability_probe():
    t0 = time.perf_counter()
    spec = PhantomSpec(width=128, height=128, tissue_scale=2.5,
                       calcifications=[Calcification((40.0, 40.0), 1.5, 700.0),
                                       Calcification((88.0, 80.0), 2.5, 600.0)],
                       seed=42)
    patches = extract_patches(generate_phantom(spec), 32, 8,
                              strategy="random", seed=7)
    model = build_model(ModelConfig(num_blocks=2, channels=16), init_seed=3)
    losses = overfit_probe(model, patches, GainModel(k=1.0), TrainConfig(),
                           iterations=200)
    ratio = losses[-1] / losses[0]
    elapsed = time.perf_counter() - t0
    assert ratio <= 0.10
    assert elapsed < 300.0
    print(f"criterion 6 PASS: loss {losses[0]:.1f} -> {losses[-1]:.1f}, "
          f"ratio {ratio:.4f} ({elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# Desk-scale end-to-end run, shared between criteria 7 and 8.

def _desk_config(root: Path) -> RunConfig:
    return RunConfig.from_dict({
        "seed": 0,
        "data_dir": str(root / "data"),
        "checkpoint_dir": str(root / "ckpt"),
        "report_path": str(root / "report.txt"),
        "report_csv_path": str(root / "report.csv"),
        "history_path": str(root / "history.csv"),
        "n_train": 20, "n_val": 5,
        "patch_size": 64, "patches_per_image": 48,
        "phantom": {
            "tissue_scale": 2.5,
            "calcifications": [
                {"center": [64, 64], "radius_px": 1.0, "contrast": 900.0},
                {"center": [96, 160], "radius_px": 1.5, "contrast": 800.0},
                {"center": [128, 128], "radius_px": 2.0, "contrast": 700.0},
                {"center": [160, 64], "radius_px": 2.5, "contrast": 600.0},
                {"center": [192, 96], "radius_px": 3.0, "contrast": 500.0},
                {"center": [64, 192], "radius_px": 1.0, "contrast": 400.0},
            ],
        },
        "model": {"num_blocks": 2, "channels": 24},
        "train": {"epochs": 12, "learning_rate": 1e-3, "alpha": 0.2},
    })


def _run_desk(root: Path) -> SimpleNamespace:
    cfg = _desk_config(root)
    t0 = time.perf_counter()
    run_phantom(cfg)
    _, history = run_train(cfg)
    report = run_evaluate(cfg)
    return SimpleNamespace(cfg=cfg, history=history, report=report,
                           elapsed=time.perf_counter() - t0)


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    return _run_desk(tmp_path_factory.mktemp("desk_a"))


def test_criterion_7_end_to_end_orderings(desk_run):
    cfg, report = desk_run.cfg, desk_run.report
    assert cfg.train.epochs >= 10
    assert desk_run.history.epochs_completed == cfg.train.epochs
    noisy = report.by_method("Noisy")
    gauss = report.by_method("Gaussian")
    net = report.by_method("ResNet")
    assert net.psnr_db > gauss.psnr_db > noisy.psnr_db
    assert net.ssim > noisy.ssim
    assert net.sigma_image < noisy.sigma_image
    assert desk_run.elapsed < 3600.0
    print(f"criterion 7 PASS: PSNR {net.psnr_db:.2f} > {gauss.psnr_db:.2f} > "
          f"{noisy.psnr_db:.2f} dB; SSIM {net.ssim:.6f} > {noisy.ssim:.6f}; "
          f"sigma {net.sigma_image:.6f} < {noisy.sigma_image:.6f} "
          f"({desk_run.elapsed:.0f}s)")


def test_criterion_8_determinism(desk_run, tmp_path_factory):
    rerun = _run_desk(tmp_path_factory.mktemp("desk_b"))
    a, b = desk_run, rerun
    assert b.history.train_loss == a.history.train_loss
    assert b.history.val_loss == a.history.val_loss
    assert b.history.val_psnr == a.history.val_psnr
    assert b.history.val_ssim == a.history.val_ssim
    for method in ("Noisy", "Gaussian", "ResNet"):
        ra, rb = a.report.by_method(method), b.report.by_method(method)
        assert (rb.psnr_db, rb.ssim, rb.sigma_image) \
            == (ra.psnr_db, ra.ssim, ra.sigma_image)
    assert Path(b.cfg.report_csv_path).read_bytes() \
        == Path(a.cfg.report_csv_path).read_bytes()
    print(f"criterion 8 PASS: loss history and report numbers bit-identical "
          f"across reruns ({rerun.elapsed:.0f}s)")


def test_criterion_9_metric_units():
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.Philox(90))
    x = rng.random((16, 16))
    assert ssim(x, x, SsimParams(dynamic_range=1.0)) == 1.0
    a = np.zeros((10, 10))
    b = a.copy()
    b[0, 0] = 1.0   # MSE exactly 0.01 on 100 pixels
    assert psnr(a, b, peak=1.0) == 20.0
    half = np.zeros(10)
    half[:5] = 1.0
    assert sigma_image(half) == 0.5
    assert combine_loss(0.01, 0.9, 10.0) == pytest.approx(1.01, abs=1e-12)
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    print(f"criterion 9 PASS: ssim(x,x)=1, psnr=20 dB, sigma=0.5, "
          f"loss=1.01 ({elapsed:.2f}s)")
