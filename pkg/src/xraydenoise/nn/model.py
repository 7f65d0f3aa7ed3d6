"""Network assembly, parameter accounting, checkpoint serialisation.

The default model regresses a noise map from an Anscombe-domain image:
a head conv lifts 1 channel to `channels`, `num_blocks` residual blocks do
the work, a tail conv drops back to 1 channel. The plain variant is the
classic straight conv-BN-ReLU stack of `plain_depth` layers, kept as a
baseline architecture.

Checkpoints are a single file: magic, version, a JSON header describing the
config and every array (name, shape, dtype, offset), then the raw array
bytes, all little-endian.
"""

import json
import struct
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional

import numpy as np

from ..errors import ContractError, FormatError
from .ops import BatchNorm2d, Conv2d, Param, ReLU, ResidualBlock, _check_finite
from .tensor import Tensor, as_array

_ARCHS = ("resnet", "plain_cnn")
_SKIPS = ("conv1x1", "identity")

_MAGIC = b"XDNC"
_FORMAT_VERSION = 1
_DTYPE_CODES = {"float32": "<f4", "float64": "<f8"}


@dataclass
class ModelConfig:
    arch: str = "resnet"
    num_blocks: int = 15
    convs_per_block: int = 3
    channels: int = 64
    kernel: int = 3
    skip_projection: str = "conv1x1"
    plain_depth: int = 17
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        if self.arch not in _ARCHS:
            raise ContractError(f"arch must be one of {_ARCHS}, got {self.arch!r}")
        if self.skip_projection not in _SKIPS:
            raise ContractError(
                f"skip_projection must be one of {_SKIPS}, got {self.skip_projection!r}"
            )
        for field_name in ("num_blocks", "convs_per_block", "channels"):
            v = getattr(self, field_name)
            if not isinstance(v, int) or v < 1:
                raise ContractError(f"{field_name} must be a positive int, got {v!r}")
        if not isinstance(self.kernel, int) or self.kernel < 1 or self.kernel % 2 == 0:
            raise ContractError(f"kernel must be a positive odd int, got {self.kernel!r}")
        # depth counts head and tail, so 3 is the shallowest real network
        if not isinstance(self.plain_depth, int) or self.plain_depth < 3:
            raise ContractError(f"plain_depth must be an int >= 3, got {self.plain_depth!r}")
        if not (self.bn_epsilon > 0):
            raise ContractError(f"bn_epsilon must be > 0, got {self.bn_epsilon!r}")
        if not (0 < self.bn_momentum <= 1):
            raise ContractError(f"bn_momentum must be in (0, 1], got {self.bn_momentum!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


class Model:
    """Ordered stage list with NCHW in/out and NHWC internals."""

    def __init__(self, config: ModelConfig, init_seed: int, dtype=np.float32):
        if dtype not in (np.float32, np.float64):
            raise ContractError(f"dtype must be float32 or float64, got {dtype!r}")
        self.config = config
        self.init_seed = int(init_seed)
        self.dtype = np.dtype(dtype).type
        rng = np.random.Generator(np.random.Philox(self.init_seed))
        cfg = config
        stages: list = []
        if cfg.arch == "resnet":
            stages.append(Conv2d("head.conv", 1, cfg.channels, cfg.kernel, rng, dtype))
            stages.append(ReLU("head.relu"))
            for b in range(cfg.num_blocks):
                stages.append(ResidualBlock(
                    f"block{b:02d}", cfg.channels, cfg.convs_per_block, cfg.kernel,
                    cfg.skip_projection, rng, cfg.bn_epsilon, cfg.bn_momentum, dtype))
            stages.append(Conv2d("tail.conv", cfg.channels, 1, cfg.kernel, rng, dtype))
        else:  # plain_cnn
            stages.append(Conv2d("layer01.conv", 1, cfg.channels, cfg.kernel, rng, dtype))
            stages.append(ReLU("layer01.relu"))
            for i in range(2, cfg.plain_depth):
                stages.append(Conv2d(f"layer{i:02d}.conv", cfg.channels, cfg.channels,
                                     cfg.kernel, rng, dtype))
                stages.append(BatchNorm2d(f"layer{i:02d}.bn", cfg.channels,
                                          cfg.bn_epsilon, cfg.bn_momentum, dtype))
                stages.append(ReLU(f"layer{i:02d}.relu"))
            stages.append(Conv2d(f"layer{cfg.plain_depth:02d}.conv", cfg.channels, 1,
                                 cfg.kernel, rng, dtype))
        self.stages = stages

    # ---- parameter access -------------------------------------------------

    def parameters(self) -> List[Param]:
        out: List[Param] = []
        for stage in self.stages:
            out.extend(stage.params())
        return out

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def _layers(self):
        for stage in self.stages:
            if isinstance(stage, ResidualBlock):
                yield from stage.layers()
            else:
                yield stage

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """Every array needed to reproduce the model: params + BN stats."""
        out: Dict[str, np.ndarray] = {}
        for layer in self._layers():
            for p in layer.params():
                out[p.name] = p.value
            if isinstance(layer, BatchNorm2d):
                out[layer.name + ".running_mean"] = layer.running_mean
                out[layer.name + ".running_var"] = layer.running_var
        return out

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]):
        own = self.state_arrays()
        if set(arrays) != set(own):
            missing = sorted(set(own) - set(arrays))
            extra = sorted(set(arrays) - set(own))
            raise FormatError(f"state mismatch: missing={missing} extra={extra}")
        for layer in self._layers():
            for p in layer.params():
                src = arrays[p.name]
                if src.shape != p.value.shape:
                    raise FormatError(
                        f"{p.name}: shape {src.shape} != expected {p.value.shape}")
                p.value = src.astype(self.dtype, copy=False)
                p.grad = np.zeros_like(p.value)
            if isinstance(layer, BatchNorm2d):
                layer.running_mean = arrays[layer.name + ".running_mean"].astype(
                    self.dtype, copy=False)
                layer.running_var = arrays[layer.name + ".running_var"].astype(
                    self.dtype, copy=False)

    # ---- forward / backward ----------------------------------------------

    def _validate_batch(self, x: np.ndarray):
        if x.ndim != 4 or x.shape[1] != 1:
            raise ContractError(f"batch must be (B, 1, H, W), got {x.shape}")
        if x.shape[2] < self.config.kernel or x.shape[3] < self.config.kernel:
            raise ContractError(
                f"spatial size {x.shape[2]}x{x.shape[3]} smaller than kernel "
                f"{self.config.kernel}")

    def forward(self, x: np.ndarray, mode: str = "eval",
                check_finite: bool = False) -> np.ndarray:
        """x: (B, 1, H, W) -> noise-map estimate of the same shape."""
        if mode not in ("train", "eval"):
            raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")
        x = np.asarray(x)
        self._validate_batch(x)
        train = mode == "train"
        h = x.transpose(0, 2, 3, 1).astype(self.dtype, copy=False)
        for stage in self.stages:
            if isinstance(stage, ResidualBlock):
                h = stage.forward(h, train, check_finite)
                _check_finite(stage.name, h, check_finite)
            else:
                h = stage.forward(h, train)
                _check_finite(stage.name, h, check_finite)
        return h.transpose(0, 3, 1, 2)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        """Accumulate parameter grads; dy matches the forward output shape."""
        dy = np.asarray(dy)
        self._validate_batch(dy)
        dh = dy.transpose(0, 2, 3, 1).astype(self.dtype, copy=False)
        for stage in reversed(self.stages):
            dh = stage.backward(dh)
        return dh.transpose(0, 3, 1, 2)


def build_model(config: Optional[ModelConfig] = None, init_seed: int = 0,
                dtype=np.float32) -> Model:
    """Construct a model with He-initialised weights.

    Weight draws come from a counter-based generator seeded with init_seed,
    in declaration order, so the same (config, seed, dtype) always yields
    bit-identical weights.
    """
    return Model(config or ModelConfig(), init_seed, dtype)


def forward(model: Model, batch, mode: str = "eval") -> Tensor:
    """Run the network on a (B, 1, H, W) batch; raises on non-finite
    activations, naming the offending layer."""
    x = as_array(batch)
    out = model.forward(x, mode=mode, check_finite=True)
    return Tensor(out)


def param_count(model: Model) -> int:
    return sum(p.size for p in model.parameters())


def analytic_param_count(config: ModelConfig) -> int:
    """Closed-form parameter count, for cross-checking param_count."""
    k2 = config.kernel * config.kernel
    ch = config.channels
    head = (k2 * 1 + 1) * ch
    tail = k2 * ch + 1
    if config.arch == "plain_cnn":
        mid = (config.plain_depth - 2) * (k2 * ch * ch + ch + 2 * ch)
        return head + mid + tail
    per_block = config.convs_per_block * (k2 * ch * ch + ch + 2 * ch)
    if config.skip_projection == "conv1x1":
        per_block += ch * ch + ch
    return head + config.num_blocks * per_block + tail


# ---- checkpoint I/O --------------------------------------------------------


def save_checkpoint(model: Model, path, meta: Optional[dict] = None):
    """Write the model (config + every array) to a single binary file."""
    arrays = model.state_arrays()
    dtype_name = np.dtype(model.dtype).name
    code = _DTYPE_CODES[dtype_name]
    entries = []
    offset = 0
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name]).astype(code, copy=False)
        blob = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape),
                        "dtype": code, "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "config": model.config.to_dict(),
        "init_seed": model.init_seed,
        "dtype": dtype_name,
        "meta": meta or {},
        "arrays": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _FORMAT_VERSION))
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path) -> Model:
    """Rebuild a model from a checkpoint file. Raises FormatError on
    bad magic, unsupported version, or truncated/malformed contents."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise FormatError(f"not a checkpoint file (magic {magic!r})")
        raw = f.read(4)
        if len(raw) < 4:
            raise FormatError("truncated checkpoint header")
        (version,) = struct.unpack("<I", raw)
        if version != _FORMAT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        raw = f.read(8)
        if len(raw) < 8:
            raise FormatError("truncated checkpoint header")
        (hlen,) = struct.unpack("<Q", raw)
        header_bytes = f.read(hlen)
        if len(header_bytes) < hlen:
            raise FormatError("truncated checkpoint header")
        try:
            header = json.loads(header_bytes.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"bad checkpoint header: {e}") from e
        data = f.read()
    try:
        config = ModelConfig.from_dict(header["config"])
        dtype_name = header["dtype"]
        init_seed = header["init_seed"]
        entries = header["arrays"]
    except (KeyError, TypeError) as e:
        raise FormatError(f"bad checkpoint header: {e}") from e
    if dtype_name not in _DTYPE_CODES:
        raise FormatError(f"unsupported checkpoint dtype {dtype_name!r}")
    arrays: Dict[str, np.ndarray] = {}
    for ent in entries:
        dt = np.dtype(ent["dtype"])
        nbytes = dt.itemsize * int(np.prod(ent["shape"], dtype=np.int64)) \
            if ent["shape"] else dt.itemsize
        start = ent["offset"]
        chunk = data[start:start + nbytes]
        if len(chunk) < nbytes:
            raise FormatError(f"truncated checkpoint data for {ent['name']!r}")
        arrays[ent["name"]] = np.frombuffer(chunk, dtype=dt).reshape(ent["shape"]).copy()
    model = Model(config, init_seed, np.dtype(dtype_name).type)
    model.load_state_arrays(arrays)
    return model


def checkpoint_meta(path) -> dict:
    """Read just the JSON header of a checkpoint (config, seeds, meta)."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise FormatError(f"not a checkpoint file (magic {magic!r})")
        (version,) = struct.unpack("<I", f.read(4))
        if version != _FORMAT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header_bytes = f.read(hlen)
        if len(header_bytes) < hlen:
            raise FormatError("truncated checkpoint header")
    try:
        return json.loads(header_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"bad checkpoint header: {e}") from e
