"""Layers: convolution, batch norm, ReLU, residual block.

Everything runs in NHWC layout (channels last) because that is what keeps the
GEMMs contiguous on CPU. The public model API speaks NCHW; model.py converts
at the boundary.

Convolution uses a kn2row-style lowering: pad the input once, do a single
(B*Hp*Wp, C) @ (C, k*k*K) GEMM, then accumulate the k*k shifted views into
the output. This avoids materialising an im2col buffer of the gathered input
and measures about 2x faster than im2col on one core at the sizes used here.
"""

from typing import List, Optional

import numpy as np

from ..errors import ContractError, NumericFailure


class Param:
    """A trainable array with its gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def size(self) -> int:
        return int(self.value.size)

    def zero_grad(self):
        self.grad[...] = 0


def _check_finite(name: str, arr: np.ndarray, enabled: bool):
    if enabled and not np.all(np.isfinite(arr)):
        raise NumericFailure(f"non-finite activation after layer '{name}'")


def conv2d_forward(xp: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Valid correlation of a pre-padded NHWC input with an HWIO kernel.

    xp: (B, H + k - 1, W + k - 1, C) already padded
    w:  (k, k, C, K)
    returns (B, H, W, K), no bias.
    """
    k = w.shape[0]
    C, K = w.shape[2], w.shape[3]
    B, Hp, Wp, _ = xp.shape
    H, W = Hp - (k - 1), Wp - (k - 1)
    # one GEMM over every padded position, all taps at once
    w_all = w.transpose(2, 0, 1, 3).reshape(C, k * k * K)
    t = (xp.reshape(-1, C) @ w_all).reshape(B, Hp, Wp, k * k, K)
    out = np.zeros((B, H, W, K), dtype=xp.dtype)
    for u in range(k):
        for v in range(k):
            out += t[:, u : u + H, v : v + W, u * k + v, :]
    return out


def conv2d_backward_input(dy: np.ndarray, w: np.ndarray, pad: int) -> np.ndarray:
    """Gradient wrt the unpadded input. dy: (B, H, W, K), w: (k, k, C, K)."""
    k = w.shape[0]
    C, K = w.shape[2], w.shape[3]
    B, H, W, _ = dy.shape
    wt_all = w.transpose(3, 0, 1, 2).reshape(K, k * k * C)
    g = (dy.reshape(-1, K) @ wt_all).reshape(B, H, W, k * k, C)
    dxp = np.zeros((B, H + k - 1, W + k - 1, C), dtype=dy.dtype)
    for u in range(k):
        for v in range(k):
            dxp[:, u : u + H, v : v + W, :] += g[:, :, :, u * k + v, :]
    if pad == 0:
        return dxp
    return dxp[:, pad : pad + H, pad : pad + W, :]


def conv2d_backward_weight(xp: np.ndarray, dy: np.ndarray, k: int) -> np.ndarray:
    """Gradient wrt the kernel. xp is the padded input cached from forward."""
    B, H, W, K = dy.shape
    C = xp.shape[3]
    dy_flat = dy.reshape(-1, K)
    dw = np.empty((k, k, C, K), dtype=dy.dtype)
    for u in range(k):
        for v in range(k):
            patch = xp[:, u : u + H, v : v + W, :].reshape(-1, C)
            dw[u, v] = patch.T @ dy_flat
    return dw


class Conv2d:
    """3x3 (or 1x1) same-padding convolution, He-initialised."""

    def __init__(self, name: str, in_ch: int, out_ch: int, kernel: int,
                 rng: np.random.Generator, dtype=np.float32):
        if kernel % 2 != 1:
            raise ContractError(f"kernel size must be odd, got {kernel}")
        self.name = name
        self.kernel = kernel
        self.pad = kernel // 2
        fan_in = in_ch * kernel * kernel
        std = np.sqrt(2.0 / fan_in)
        w = rng.normal(0.0, std, size=(kernel, kernel, in_ch, out_ch))
        self.weight = Param(name + ".weight", w.astype(dtype))
        self.bias = Param(name + ".bias", np.zeros(out_ch, dtype=dtype))
        self._xp = None

    def params(self) -> List[Param]:
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if self.pad:
            p = self.pad
            xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        else:
            xp = x
        if train:
            self._xp = xp
        return conv2d_forward(xp, self.weight.value) + self.bias.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._xp is None:
            raise ContractError(f"{self.name}: backward before train-mode forward")
        self.weight.grad += conv2d_backward_weight(self._xp, dy, self.kernel)
        self.bias.grad += dy.sum(axis=(0, 1, 2))
        dx = conv2d_backward_input(dy, self.weight.value, self.pad)
        self._xp = None
        return dx


class BatchNorm2d:
    """Per-channel batch normalisation over (B, H, W).

    Training uses batch statistics (population variance in the normaliser)
    and updates running stats with momentum; the running variance update uses
    the unbiased estimate. Eval normalises with the running statistics.
    """

    def __init__(self, name: str, ch: int, eps: float = 1e-5,
                 momentum: float = 0.1, dtype=np.float32):
        self.name = name
        self.eps = eps
        self.momentum = momentum
        self.gamma = Param(name + ".gamma", np.ones(ch, dtype=dtype))
        self.beta = Param(name + ".beta", np.zeros(ch, dtype=dtype))
        self.running_mean = np.zeros(ch, dtype=dtype)
        self.running_var = np.ones(ch, dtype=dtype)
        self._cache = None

    def params(self) -> List[Param]:
        return [self.gamma, self.beta]

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if train:
            n = x.shape[0] * x.shape[1] * x.shape[2]
            if n < 2:
                raise ContractError(f"{self.name}: batch norm needs >= 2 samples per channel")
            mu = x.mean(axis=(0, 1, 2))
            var = x.var(axis=(0, 1, 2))
            m = self.momentum
            self.running_mean = ((1 - m) * self.running_mean + m * mu).astype(x.dtype)
            unbiased = var * (n / (n - 1))
            self.running_var = ((1 - m) * self.running_var + m * unbiased).astype(x.dtype)
            inv = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mu) * inv
            self._cache = (xhat, inv.astype(x.dtype))
        else:
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean) * inv
        return self.gamma.value * xhat + self.beta.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise ContractError(f"{self.name}: backward before train-mode forward")
        xhat, inv = self._cache
        n = dy.shape[0] * dy.shape[1] * dy.shape[2]
        dbeta = dy.sum(axis=(0, 1, 2))
        dgamma = (dy * xhat).sum(axis=(0, 1, 2))
        self.beta.grad += dbeta
        self.gamma.grad += dgamma
        # standard batch-stat backward: both mean and variance carry gradient
        dx = (self.gamma.value * inv) * (dy - dbeta / n - xhat * (dgamma / n))
        self._cache = None
        return dx.astype(dy.dtype, copy=False)


class ReLU:
    def __init__(self, name: str):
        self.name = name
        self._mask = None

    def params(self) -> List[Param]:
        return []

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        out = np.maximum(x, 0)
        if train:
            self._mask = x > 0
        return out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._mask is None:
            raise ContractError(f"{self.name}: backward before train-mode forward")
        dx = dy * self._mask
        self._mask = None
        return dx


class ResidualBlock:
    """conv-BN-ReLU stack plus a skip path, merged by addition after the
    final activation.

    skip is either an identity or a 1x1 projection; with equal input/output
    widths the projection is still useful early in training because it is
    He-initialised rather than frozen at identity.
    """

    def __init__(self, name: str, ch: int, convs: int, kernel: int,
                 skip_projection: str, rng: np.random.Generator,
                 eps: float, momentum: float, dtype=np.float32):
        self.name = name
        self.convs: List[Conv2d] = []
        self.bns: List[BatchNorm2d] = []
        self.relus: List[ReLU] = []
        for i in range(convs):
            self.convs.append(Conv2d(f"{name}.conv{i + 1}", ch, ch, kernel, rng, dtype))
            self.bns.append(BatchNorm2d(f"{name}.bn{i + 1}", ch, eps, momentum, dtype))
            self.relus.append(ReLU(f"{name}.relu{i + 1}"))
        if skip_projection == "conv1x1":
            self.skip: Optional[Conv2d] = Conv2d(f"{name}.skip", ch, ch, 1, rng, dtype)
        elif skip_projection == "identity":
            self.skip = None
        else:
            raise ContractError(f"unknown skip_projection {skip_projection!r}")

    def params(self) -> List[Param]:
        out: List[Param] = []
        for conv, bn in zip(self.convs, self.bns):
            out.extend(conv.params())
            out.extend(bn.params())
        if self.skip is not None:
            out.extend(self.skip.params())
        return out

    def layers(self):
        for conv, bn, relu in zip(self.convs, self.bns, self.relus):
            yield conv
            yield bn
            yield relu
        if self.skip is not None:
            yield self.skip

    def forward(self, x: np.ndarray, train: bool, check_finite: bool = False) -> np.ndarray:
        s = x if self.skip is None else self.skip.forward(x, train)
        h = x
        for conv, bn, relu in zip(self.convs, self.bns, self.relus):
            h = conv.forward(h, train)
            _check_finite(conv.name, h, check_finite)
            h = bn.forward(h, train)
            _check_finite(bn.name, h, check_finite)
            h = relu.forward(h, train)
        return h + s

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dh = dy
        for conv, bn, relu in zip(reversed(self.convs), reversed(self.bns),
                                  reversed(self.relus)):
            dh = relu.backward(dh)
            dh = bn.backward(dh)
            dh = conv.backward(dh)
        if self.skip is None:
            ds = dy
        else:
            ds = self.skip.backward(dy)
        return dh + ds
