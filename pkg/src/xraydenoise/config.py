"""Unified run configuration: one JSON file, one global seed.

Every stochastic stage (phantom rendering, patch cutting, weight init,
per-iteration noise, evaluation noise) derives its own seed from the global
one by hashed key strings, so a single integer reproduces a whole run.
Nested sections therefore must not carry their own "seed" entries.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ContractError, FormatError
from .losses import SsimParams
from .nn.model import ModelConfig
from .phantom import PhantomSpec
from .seeding import derive_seed
from .training import TrainConfig

_INVERSE_MODES = ("unbiased", "algebraic")


def _ssim_from_dict(d: dict) -> SsimParams:
    known = set(SsimParams.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise ContractError(f"unknown ssim config keys: {sorted(unknown)}")
    return SsimParams(**d)


@dataclass
class RunConfig:
    seed: int = 0
    data_dir: str = "data"
    checkpoint_dir: str = "checkpoints"
    report_path: str = "report.txt"
    report_csv_path: str = "report.csv"
    history_path: str = "history.csv"
    n_train: int = 20
    n_val: int = 5
    patch_size: int = 64
    patches_per_image: int = 64
    gain_k: float = 1.0
    gaussian_sigma: float = 1.0
    inverse_mode: str = "unbiased"
    tile: int = 64
    overlap: int = 16
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ssim: SsimParams = field(default_factory=SsimParams)

    def __post_init__(self):
        if not isinstance(self.seed, int):
            raise ContractError(f"seed must be an int, got {self.seed!r}")
        for name in ("data_dir", "checkpoint_dir", "report_path",
                     "report_csv_path", "history_path"):
            v = getattr(self, name)
            if not isinstance(v, str) or not v:
                raise ContractError(f"{name} must be a non-empty path string, got {v!r}")
        for name, lo in (("n_train", 1), ("n_val", 1), ("patch_size", 8),
                         ("patches_per_image", 1), ("tile", 8)):
            v = getattr(self, name)
            if not isinstance(v, int) or v < lo:
                raise ContractError(f"{name} must be an int >= {lo}, got {v!r}")
        if not isinstance(self.overlap, int) or not (0 <= self.overlap < self.tile):
            raise ContractError(
                f"overlap must be an int in [0, tile), got {self.overlap!r}")
        if not (self.gain_k > 0):
            raise ContractError(f"gain_k must be > 0, got {self.gain_k!r}")
        if not (self.gaussian_sigma > 0):
            raise ContractError(f"gaussian_sigma must be > 0, got {self.gaussian_sigma!r}")
        if self.inverse_mode not in _INVERSE_MODES:
            raise ContractError(
                f"inverse_mode must be one of {_INVERSE_MODES}, got {self.inverse_mode!r}")
        if self.patch_size < self.ssim.window_size:
            raise ContractError(
                f"patch_size {self.patch_size} smaller than ssim window "
                f"{self.ssim.window_size}")

    # ---- seed derivation ---------------------------------------------------

    def phantom_seed(self) -> int:
        return derive_seed(self.seed, "phantom")

    def model_init_seed(self) -> int:
        return derive_seed(self.seed, "model-init")

    def train_seed(self) -> int:
        return derive_seed(self.seed, "train")

    def patch_seed(self, image_name: str) -> int:
        return derive_seed(self.seed, "patches", image_name)

    def eval_noise_seed(self, image_name: str) -> int:
        return derive_seed(self.seed, "eval-noise", image_name)

    def resolved_phantom(self) -> PhantomSpec:
        return replace(self.phantom, seed=self.phantom_seed())

    def resolved_train(self) -> TrainConfig:
        return replace(self.train, seed=self.train_seed())

    # ---- (de)serialisation ---------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            name: getattr(self, name)
            for name in self.__dataclass_fields__
            if name not in ("phantom", "model", "train", "ssim")
        }
        phantom = self.phantom.to_dict()
        phantom.pop("seed", None)
        train = self.train.to_dict()
        train.pop("seed", None)
        d["phantom"] = phantom
        d["model"] = self.model.to_dict()
        d["train"] = train
        d["ssim"] = {k: getattr(self.ssim, k) for k in SsimParams.__dataclass_fields__}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for section, parse in (("phantom", PhantomSpec.from_dict),
                               ("model", ModelConfig.from_dict),
                               ("train", TrainConfig.from_dict),
                               ("ssim", _ssim_from_dict)):
            if section in d:
                sub = d[section]
                if not isinstance(sub, dict):
                    raise ContractError(f"config section {section!r} must be an object")
                if section in ("phantom", "train") and "seed" in sub:
                    raise ContractError(
                        f"{section}.seed is derived from the global seed; "
                        f"remove it from the config")
                d[section] = parse(sub)
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise FormatError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise FormatError(f"config {path} must hold a JSON object")
        return cls.from_dict(raw)

    def to_file(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
