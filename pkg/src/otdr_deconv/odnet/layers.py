"""Building-block layers with explicit backward passes.

Tensors are (batch, channels, length). Convolutions use same-length zero
padding, so kernel sizes must be odd. Each layer caches what its backward
pass needs during forward; calling backward without a cached forward is a
usage error.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Conv1d:
    """Cross-channel 1D convolution with same-length zero padding.

    out[b, o, i] = bias[o] + sum_{c,k} weight[o, c, k] * padded_x[b, c, i + k]
    """

    def __init__(self, in_channels, out_channels, kernel_size, rng=None, dtype=np.float32):
        if kernel_size < 1 or kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and >= 1, got {kernel_size}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.dtype = np.dtype(dtype)
        if rng is None:
            rng = np.random.default_rng(0)
        # Kaiming fan-in scaling; biases start at zero
        std = np.sqrt(2.0 / (in_channels * kernel_size))
        self.weight = rng.normal(0.0, std, (out_channels, in_channels, kernel_size)).astype(
            self.dtype
        )
        self.bias = np.zeros(out_channels, dtype=self.dtype)
        self.grad_weight = None
        self.grad_bias = None
        self._windows = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"expected (batch, {self.in_channels}, length) input, got {x.shape}"
            )
        p = (self.kernel_size - 1) // 2
        xp = np.pad(x, ((0, 0), (0, 0), (p, p)))
        windows = sliding_window_view(xp, self.kernel_size, axis=2)  # (B, C, L, K)
        out = np.tensordot(windows, self.weight, axes=([1, 3], [1, 2]))  # (B, L, O)
        out = np.ascontiguousarray(np.moveaxis(out, 2, 1))
        out += self.bias[None, :, None]
        self._windows = windows if train else None
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._windows is None:
            raise RuntimeError("backward called without a cached training forward")
        windows = self._windows
        self.grad_weight = np.tensordot(grad_out, windows, axes=([0, 2], [0, 2]))
        self.grad_bias = grad_out.sum(axis=(0, 2))
        p = (self.kernel_size - 1) // 2
        gp = np.pad(grad_out, ((0, 0), (0, 0), (p, p)))
        gwin = sliding_window_view(gp, self.kernel_size, axis=2)  # (B, O, L, K)
        wflip = self.weight[:, :, ::-1]
        grad_in = np.tensordot(gwin, wflip, axes=([1, 3], [0, 2]))  # (B, L, C)
        return np.ascontiguousarray(np.moveaxis(grad_in, 2, 1))

    def param_items(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def grad_items(self):
        if self.grad_weight is None:
            raise RuntimeError("gradients not computed yet")
        return [("weight", self.grad_weight), ("bias", self.grad_bias)]


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        mask = x > 0
        self._mask = mask if train else None
        return x * mask

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._mask is None:
            raise RuntimeError("backward called without a cached training forward")
        return grad_out * self._mask


class BatchNorm1d:
    """Per-channel normalization over (batch, length).

    Training mode normalizes by batch statistics and updates the running
    estimates with the given momentum; eval mode uses the running stats.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float32):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.dtype = np.dtype(dtype)
        self.scale = np.ones(channels, dtype=self.dtype)
        self.shift = np.zeros(channels, dtype=self.dtype)
        self.running_mean = np.zeros(channels, dtype=self.dtype)
        self.running_var = np.ones(channels, dtype=self.dtype)
        self.grad_scale = None
        self.grad_shift = None
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 3 or x.shape[1] != self.channels:
            raise ValueError(f"expected (batch, {self.channels}, length) input, got {x.shape}")
        if train:
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            self.running_mean = ((1.0 - self.momentum) * self.running_mean
                                 + self.momentum * mean).astype(self.dtype)
            self.running_var = ((1.0 - self.momentum) * self.running_var
                                + self.momentum * var).astype(self.dtype)
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None]) * inv_std[None, :, None]
        self._cache = (xhat, inv_std) if train else None
        return self.scale[None, :, None] * xhat + self.shift[None, :, None]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("backward called without a cached training forward")
        xhat, inv_std = self._cache
        b, _, length = grad_out.shape
        m = b * length
        self.grad_scale = (grad_out * xhat).sum(axis=(0, 2))
        self.grad_shift = grad_out.sum(axis=(0, 2))
        # compact batch-statistics backward (biased variance)
        coeff = (self.scale * inv_std / m)[None, :, None]
        return coeff * (
            m * grad_out
            - self.grad_shift[None, :, None]
            - xhat * self.grad_scale[None, :, None]
        )

    def param_items(self):
        return [("scale", self.scale), ("shift", self.shift)]

    def grad_items(self):
        if self.grad_scale is None:
            raise RuntimeError("gradients not computed yet")
        return [("scale", self.grad_scale), ("shift", self.grad_shift)]

    def stat_items(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]
