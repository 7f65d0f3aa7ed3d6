"""Optimisation: Adam, the training loop, and two diagnostic probes.

Noise is regenerated every iteration from the clean patch stack with a seed
derived from (config.seed, "noise", epoch, step), so no two batches see the
same noise realisation but the whole run is bit-reproducible. Validation
noise is drawn once per run and held fixed so the validation curve is
comparable across epochs.

Validation metrics (loss, PSNR, SSIM) are computed in the variance-
stabilised domain the network operates in.
"""

import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from .errors import ContractError, DegenerateInputError, NumericFailure
from .imaging import Dataset, Patch
from .losses import SsimParams, ssim, total_loss, total_loss_and_grad
from .metrics import psnr
from .nn.model import Model, save_checkpoint
from .nn.ops import Param
from .noise import GainModel, augment_arrays
from .seeding import derive_seed


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    epochs: int = 125
    batch_size: int = 32
    alpha: float = 0.2
    loss_weight_ssim: float = 10.0
    seed: int = 0
    checkpoint_every: int = 0  # 0 disables periodic checkpoints

    def __post_init__(self):
        if not (self.learning_rate > 0):
            raise ContractError(f"learning_rate must be > 0, got {self.learning_rate!r}")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ContractError(
                f"betas must lie in [0, 1), got {self.adam_beta1!r}, {self.adam_beta2!r}")
        if not (self.adam_epsilon > 0):
            raise ContractError(f"adam_epsilon must be > 0, got {self.adam_epsilon!r}")
        for name in ("epochs", "batch_size"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ContractError(f"{name} must be a positive int, got {v!r}")
        if not (0 < self.alpha <= 1):
            raise ContractError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if self.loss_weight_ssim < 0:
            raise ContractError(
                f"loss_weight_ssim must be >= 0, got {self.loss_weight_ssim!r}")
        if not isinstance(self.checkpoint_every, int) or self.checkpoint_every < 0:
            raise ContractError(
                f"checkpoint_every must be a nonnegative int, got {self.checkpoint_every!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


class Adam:
    """Adam with bias correction; state arrays match each param's dtype."""

    def __init__(self, params: List[Param], learning_rate: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        if not params:
            raise ContractError("optimizer needs at least one parameter")
        if not (learning_rate > 0 and epsilon > 0):
            raise ContractError("learning_rate and epsilon must be > 0")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ContractError(f"betas must lie in [0, 1), got {beta1!r}, {beta2!r}")
        self.params = params
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = epsilon
        self.t = 0
        self._m = [np.zeros_like(p.value) for p in params]
        self._v = [np.zeros_like(p.value) for p in params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        """One update from the accumulated grads. A zero gradient moves its
        parameter by exactly zero."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            update = (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            p.value -= update.astype(p.value.dtype, copy=False)


@dataclass
class TrainHistory:
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    val_psnr: List[float] = field(default_factory=list)
    val_ssim: List[float] = field(default_factory=list)
    epoch_seconds: List[float] = field(default_factory=list)

    @property
    def epochs_completed(self) -> int:
        return len(self.train_loss)

    def write_table(self, path):
        """CSV with one row per epoch; floats at full precision."""
        lines = ["epoch,train_loss,val_loss,val_psnr,val_ssim,seconds"]
        for i in range(self.epochs_completed):
            lines.append(",".join([
                str(i + 1),
                "%.17g" % self.train_loss[i],
                "%.17g" % self.val_loss[i],
                "%.17g" % self.val_psnr[i],
                "%.17g" % self.val_ssim[i],
                "%.17g" % self.epoch_seconds[i],
            ]))
        Path(path).write_text("\n".join(lines) + "\n")


def _patch_stack(patches: List[Patch], label: str) -> np.ndarray:
    if not patches:
        raise DegenerateInputError(f"no {label} patches to train on")
    size = patches[0].size
    for p in patches:
        if p.size != size:
            raise ContractError(
                f"{label} patches have mixed sizes ({size} vs {p.size})")
    return np.stack([p.pixels for p in patches]).astype(np.float64)


def _span(a: np.ndarray) -> float:
    s = float(a.max() - a.min())
    return s if s > 0 else 1.0


def _locate_nonfinite(model: Model, x: np.ndarray) -> str:
    """Re-run a forward pass with per-layer checks to name the first layer
    that produced a non-finite activation."""
    try:
        model.forward(x, mode="train", check_finite=True)
    except NumericFailure as e:
        return str(e)
    return "activations finite; loss or gradient overflowed"


def train(model: Model, dataset: Dataset, gain: GainModel, config: TrainConfig,
          checkpoint_dir=None, on_batch: Optional[Callable] = None,
          log: Optional[Callable[[str], None]] = None,
          ssim_params: Optional[SsimParams] = None):
    """Train the noise-map regressor on a patch dataset.

    Each iteration draws a fresh dose-reduced realisation of its clean
    batch, runs forward/backward in train mode, and applies one Adam step.
    Returns (model, TrainHistory); the model is updated in place.

    ssim_params sets the window and stabiliser constants of the loss; its
    dynamic_range is replaced by the span of each batch's clean images.

    Raises NumericFailure if the loss goes non-finite, identifying the
    first offending layer when an activation is to blame.
    """
    dataset.validate()
    base_params = ssim_params or SsimParams()
    gt_train = _patch_stack(dataset.train_patches, "train")
    n = gt_train.shape[0]
    bs = min(config.batch_size, n)
    steps_per_epoch = n // bs

    have_val = bool(dataset.val_patches)
    if have_val:
        gt_val = _patch_stack(dataset.val_patches, "val")
        val_noisy, val_clean = augment_arrays(
            gt_val, gain.k, config.alpha, derive_seed(config.seed, "val-noise"))
        val_params = replace(base_params, dynamic_range=_span(val_clean))
        val_peak = _span(val_clean)

    opt = Adam(model.parameters(), config.learning_rate, config.adam_beta1,
               config.adam_beta2, config.adam_epsilon)
    history = TrainHistory()
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    for epoch in range(config.epochs):
        t0 = time.monotonic()
        perm = np.random.Generator(
            np.random.Philox(derive_seed(config.seed, "shuffle", epoch))
        ).permutation(n)
        epoch_losses = []
        for step in range(steps_per_epoch):
            idx = perm[step * bs:(step + 1) * bs]
            noisy_t, clean_t = augment_arrays(
                gt_train[idx], gain.k, config.alpha,
                derive_seed(config.seed, "noise", epoch, step))
            noise_true = noisy_t - clean_t
            x = noisy_t[:, None, :, :]
            pred = model.forward(x, mode="train")
            if not np.isfinite(pred).all():
                detail = _locate_nonfinite(model, x)
                raise NumericFailure(
                    f"non-finite prediction at epoch {epoch + 1} "
                    f"step {step + 1}: {detail}")
            params = replace(base_params, dynamic_range=_span(clean_t))
            loss, grad = total_loss_and_grad(
                pred, noise_true[:, None, :, :], x, params, config.loss_weight_ssim)
            if not np.isfinite(loss):
                detail = _locate_nonfinite(model, x)
                raise NumericFailure(
                    f"non-finite loss at epoch {epoch + 1} step {step + 1}: {detail}")
            opt.zero_grad()
            model.backward(grad)
            opt.step()
            epoch_losses.append(loss)
            if on_batch is not None:
                on_batch(epoch, step, {"loss": loss, "noisy": noisy_t,
                                       "clean": clean_t, "noise_pred": pred})
        history.train_loss.append(float(np.mean(epoch_losses)))

        if have_val:
            vloss, vpsnr, vssim = _validate(model, val_noisy, val_clean,
                                            val_params, val_peak, config, bs)
        else:
            vloss = vpsnr = vssim = float("nan")
        history.val_loss.append(vloss)
        history.val_psnr.append(vpsnr)
        history.val_ssim.append(vssim)
        history.epoch_seconds.append(time.monotonic() - t0)

        if log is not None:
            log(f"epoch {epoch + 1}/{config.epochs} "
                f"train_loss={history.train_loss[-1]:.5f} "
                f"val_loss={vloss:.5f} val_psnr={vpsnr:.3f} "
                f"({history.epoch_seconds[-1]:.1f}s)")
        if (checkpoint_dir is not None and config.checkpoint_every > 0
                and (epoch + 1) % config.checkpoint_every == 0):
            save_checkpoint(model, checkpoint_dir / f"epoch_{epoch + 1:04d}.ckpt",
                            meta={"epoch": epoch + 1, "train_seed": config.seed})
    return model, history


def _validate(model, val_noisy, val_clean, params, peak, config, batch_size):
    """Fixed-noise validation pass in eval mode; the forward runs are
    chunked to bound memory, the metrics are computed over the whole set."""
    n = val_noisy.shape[0]
    preds = np.empty_like(val_noisy)
    for start in range(0, n, batch_size):
        x = val_noisy[start:start + batch_size, None, :, :]
        preds[start:start + batch_size] = model.forward(x, mode="eval")[:, 0]
    if not np.isfinite(preds).all():
        raise NumericFailure("non-finite prediction during validation")
    denoised = val_noisy - preds
    vloss = total_loss(preds, val_noisy - val_clean, val_noisy,
                       params, config.loss_weight_ssim)
    return (vloss, psnr(denoised, val_clean, peak=peak),
            ssim(denoised, val_clean, params))


def overfit_probe(model: Model, patches: List[Patch], gain: GainModel,
                  config: TrainConfig, iterations: int = 200,
                  on_iteration: Optional[Callable] = None,
                  ssim_params: Optional[SsimParams] = None) -> List[float]:
    """Sanity probe: can the model drive the loss down on one fixed batch?

    Uses a single noise realisation (seed derived from config.seed) and
    trains on the whole patch list as one batch every iteration. Returns the
    loss sequence: entry i is the loss before update i, plus one final
    post-update loss, so the list has iterations + 1 entries.
    """
    if iterations < 1:
        raise ContractError(f"iterations must be >= 1, got {iterations}")
    gt = _patch_stack(patches, "probe")
    noisy_t, clean_t = augment_arrays(
        gt, gain.k, config.alpha, derive_seed(config.seed, "probe-noise"))
    noise_true = (noisy_t - clean_t)[:, None, :, :]
    x = noisy_t[:, None, :, :]
    params = replace(ssim_params or SsimParams(), dynamic_range=_span(clean_t))
    opt = Adam(model.parameters(), config.learning_rate, config.adam_beta1,
               config.adam_beta2, config.adam_epsilon)
    losses: List[float] = []
    for it in range(iterations):
        pred = model.forward(x, mode="train")
        if not np.isfinite(pred).all():
            detail = _locate_nonfinite(model, x)
            raise NumericFailure(
                f"non-finite probe prediction at iteration {it + 1}: {detail}")
        loss, grad = total_loss_and_grad(pred, noise_true, x, params,
                                         config.loss_weight_ssim)
        if not np.isfinite(loss):
            raise NumericFailure(f"non-finite probe loss at iteration {it + 1}")
        losses.append(loss)
        opt.zero_grad()
        model.backward(grad)
        opt.step()
        if on_iteration is not None:
            on_iteration(it, loss)
    pred = model.forward(x, mode="train")
    losses.append(total_loss(pred, noise_true, x, params, config.loss_weight_ssim))
    return losses


def gradient_check(config=None, batch_shape=(2, 1, 8, 8), step: float = 1e-5,
                   seed: int = 0, window_size: int = 5,
                   ssim_weight: float = 10.0) -> float:
    """Compare analytic parameter gradients against central differences.

    Builds a small float64 model (by default one block, four channels),
    evaluates the full objective on random data, and returns the maximum
    relative error over every parameter element. The relative error uses a
    floor of 1e-3 * max|grad| in the denominator so structurally zero
    gradients (conv biases absorbed by batch norm) compare on noise level
    rather than blowing up the ratio.
    """
    from .nn.model import ModelConfig, build_model  # local: avoid cycle at import

    if config is None:
        config = ModelConfig(num_blocks=1, channels=4)
    if batch_shape[2] < window_size or batch_shape[3] < window_size:
        raise ContractError(
            f"batch spatial size {batch_shape[2:]} smaller than SSIM window "
            f"{window_size}")
    model = build_model(config, init_seed=derive_seed(seed, "init"),
                        dtype=np.float64)
    rng = np.random.Generator(np.random.Philox(derive_seed(seed, "data")))
    noisy = 4.0 + 0.5 * rng.standard_normal(batch_shape)
    noise_true = 0.1 * rng.standard_normal(batch_shape)
    params = SsimParams(window_size=window_size, dynamic_range=1.0)

    def loss_value() -> float:
        pred = model.forward(noisy, mode="train")
        return total_loss(pred, noise_true, noisy, params, ssim_weight)

    pred = model.forward(noisy, mode="train")
    _, grad = total_loss_and_grad(pred, noise_true, noisy, params, ssim_weight)
    model.zero_grad()
    model.backward(grad)
    analytic = np.concatenate([p.grad.ravel() for p in model.parameters()])

    numeric = np.empty_like(analytic)
    i = 0
    for p in model.parameters():
        flat = p.value.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = loss_value()
            flat[j] = orig - step
            down = loss_value()
            flat[j] = orig
            numeric[i] = (up - down) / (2.0 * step)
            i += 1

    floor = max(1e-8, 1e-3 * float(np.abs(analytic).max()))
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / denom).max())
