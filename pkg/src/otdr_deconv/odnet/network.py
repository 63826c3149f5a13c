"""Residual 1D network: head conv widens to the trunk width, a stack of
ResBlocks refines, and a tail conv projects back to one channel. With the
reference settings (11 blocks, kernel 9) the receptive field is 193.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import BatchNorm1d, Conv1d, ReLU


@dataclass
class NetArchitecture:
    n_resblocks: int = 11
    channels: int = 128
    kernel_size: int = 9
    use_bn: bool = False

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and >= 1, got {self.kernel_size}")
        if self.channels < 1:
            raise ValueError("channels must be at least 1")
        if self.n_resblocks < 1:
            raise ValueError("n_resblocks must be at least 1")

    @property
    def receptive_field(self) -> int:
        # head conv + 2 convs per block + tail conv, each adding K-1
        return (2 * self.n_resblocks + 2) * (self.kernel_size - 1) + 1


class ResBlock:
    """x + Conv(ReLU([BN]Conv(x))); the shortcut is the identity."""

    def __init__(self, channels, kernel_size, use_bn, rng, dtype=np.float32):
        self.conv1 = Conv1d(channels, channels, kernel_size, rng, dtype)
        self.bn = BatchNorm1d(channels, dtype=dtype) if use_bn else None
        self.relu = ReLU()
        self.conv2 = Conv1d(channels, channels, kernel_size, rng, dtype)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        t = self.conv1.forward(x, train)
        if self.bn is not None:
            t = self.bn.forward(t, train)
        t = self.relu.forward(t, train)
        t = self.conv2.forward(t, train)
        return x + t

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        g = self.conv2.backward(grad_out)
        g = self.relu.backward(g)
        if self.bn is not None:
            g = self.bn.backward(g)
        g = self.conv1.backward(g)
        return grad_out + g


class ODNet:
    """The full deconvolution network over (batch, 1, length) traces."""

    def __init__(self, arch: NetArchitecture, seed: int = 0, dtype=np.float32):
        self.arch = arch
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.head = Conv1d(1, arch.channels, arch.kernel_size, rng, dtype)
        self.blocks = [
            ResBlock(arch.channels, arch.kernel_size, arch.use_bn, rng, dtype)
            for _ in range(arch.n_resblocks)
        ]
        self.tail = Conv1d(arch.channels, 1, arch.kernel_size, rng, dtype)

    # --- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 1:
            x = x[None, None, :]
        if x.ndim != 3 or x.shape[1] != 1:
            raise ValueError(f"expected (batch, 1, length) input, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("network input must be finite")
        t = self.head.forward(x, train)
        for block in self.blocks:
            t = block.forward(t, train)
        return self.tail.forward(t, train)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        g = self.tail.backward(grad_out)
        for block in reversed(self.blocks):
            g = block.backward(g)
        return self.head.backward(g)

    def infer(self, samples: np.ndarray) -> np.ndarray:
        """Single-trace convenience: 1-D in, 1-D out, eval mode."""
        out = self.forward(np.asarray(samples, dtype=self.dtype)[None, None, :])
        return out[0, 0]

    # --- parameter plumbing ---------------------------------------------------

    def _named_layers(self):
        yield "head", self.head
        for i, block in enumerate(self.blocks):
            yield f"block{i}.conv1", block.conv1
            if block.bn is not None:
                yield f"block{i}.bn", block.bn
            yield f"block{i}.conv2", block.conv2
        yield "tail", self.tail

    def param_dict(self) -> dict[str, np.ndarray]:
        """Live references to the trainable tensors, in declaration order."""
        return {
            f"{lname}.{pname}": arr
            for lname, layer in self._named_layers()
            for pname, arr in layer.param_items()
        }

    def grad_dict(self) -> dict[str, np.ndarray]:
        return {
            f"{lname}.{pname}": arr
            for lname, layer in self._named_layers()
            for pname, arr in layer.grad_items()
        }

    def state_dict(self) -> dict[str, np.ndarray]:
        """Trainable tensors plus batch-norm running statistics."""
        out = {}
        for lname, layer in self._named_layers():
            for pname, arr in layer.param_items():
                out[f"{lname}.{pname}"] = arr
            if isinstance(layer, BatchNorm1d):
                for pname, arr in layer.stat_items():
                    out[f"{lname}.{pname}"] = arr
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = self.state_dict()
        if set(own) != set(state):
            missing = set(own) ^ set(state)
            raise ValueError(f"state tensors do not match architecture: {sorted(missing)}")
        for name, arr in own.items():
            src = np.asarray(state[name], dtype=arr.dtype)
            if src.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: {src.shape} vs {arr.shape}")
            arr[...] = src

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.state_dict().items()}

    @property
    def param_count(self) -> int:
        return sum(arr.size for arr in self.param_dict().values())

    def clone(self) -> "ODNet":
        other = ODNet(self.arch, seed=0, dtype=self.dtype)
        other.load_state_dict(self.state_dict())
        return other
