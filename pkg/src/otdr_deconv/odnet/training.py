"""MSE training loop with Adam: seeded shuffling, random crops, per-epoch
full-length PSNR evaluation, and checkpointing.

The per-epoch RNG is derived from (seed, epoch), so a run resumed from a
checkpoint walks the same shuffles and crops as an uninterrupted one.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import save_checkpoint
from .network import ODNet


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int = 64
    learning_rate: float = 3e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    crop_len: int = 2048
    seed: int = 0
    checkpoint_every: int = 0  # 0 disables periodic checkpoints
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.learning_rate > 0.0:
            raise ValueError("learning_rate must be positive")
        if self.crop_len < 1:
            raise ValueError("crop_len must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            t=0,
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """Bias-corrected Adam update, applied in place."""
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements and its gradient w.r.t. pred."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    grad = (2.0 / diff.size) * diff
    return loss, grad


@dataclass
class TrainLogEntry:
    epoch: int
    train_loss: float
    train_psnr: float
    val_psnr: float
    seconds: float


@dataclass
class TrainLog:
    entries: list[TrainLogEntry] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("epoch,train_loss,train_psnr,val_psnr,seconds\n")
            for e in self.entries:
                f.write(
                    f"{e.epoch},{e.train_loss!r},{e.train_psnr!r},"
                    f"{e.val_psnr!r},{e.seconds!r}\n"
                )

    def val_psnrs(self) -> np.ndarray:
        return np.array([e.val_psnr for e in self.entries])

    def train_losses(self) -> np.ndarray:
        return np.array([e.train_loss for e in self.entries])


@dataclass
class TrainState:
    """Mutable training progress, as persisted in checkpoints."""

    epoch: int = 0  # epochs completed so far
    seed: int = 0
    val_psnr: float = float("nan")
    adam: AdamState | None = None
    best_val_psnr: float = float("-inf")
    best_epoch: int = -1
    best_state: dict[str, np.ndarray] | None = None


def _as_float32(pairs) -> tuple[list[np.ndarray], list[np.ndarray]]:
    inputs = [np.asarray(p.input.samples, dtype=np.float32) for p in pairs]
    labels = [np.asarray(p.label.samples, dtype=np.float32) for p in pairs]
    return inputs, labels


def _batched_psnr(model: ODNet, inputs, labels, batch_size: int) -> float:
    """Mean per-curve PSNR (peak 1.0) of model outputs on full-length curves."""
    psnrs = []
    for start in range(0, len(inputs), batch_size):
        xs = np.stack(inputs[start : start + batch_size])[:, None, :]
        ys = np.stack(labels[start : start + batch_size])[:, None, :]
        out = model.forward(xs, train=False)
        mse = np.mean((out.astype(np.float64) - ys) ** 2, axis=(1, 2))
        psnrs.extend(np.where(mse > 0.0, 10.0 * np.log10(1.0 / np.maximum(mse, 1e-300)), np.inf))
    return float(np.mean(psnrs))


def evaluate_psnr(model: ODNet, pairs, batch_size: int = 16) -> float:
    inputs, labels = _as_float32(pairs)
    return _batched_psnr(model, inputs, labels, batch_size)


def train(
    model: ODNet,
    train_pairs,
    val_pairs,
    cfg: TrainConfig,
    state: TrainState | None = None,
    on_epoch=None,
) -> tuple[ODNet, TrainLog]:
    """Train in place and return (best-validation-PSNR model, log).

    Each epoch shuffles the training curves, draws one random crop per
    curve, steps Adam per mini-batch, then evaluates train and validation
    PSNR on the full-length curves. Passing the TrainState from a loaded
    checkpoint resumes exactly where the checkpoint left off. on_epoch,
    when given, receives each TrainLogEntry as it is produced.
    """
    if len(train_pairs) == 0:
        raise ValueError("training set is empty")
    rf = model.arch.receptive_field
    if cfg.crop_len < rf:
        raise ValueError(f"crop_len {cfg.crop_len} below receptive field {rf}")
    tr_in, tr_lab = _as_float32(train_pairs)
    va_in, va_lab = _as_float32(val_pairs)
    curve_len = min(len(a) for a in tr_in)
    if cfg.crop_len > curve_len:
        raise ValueError(f"crop_len {cfg.crop_len} exceeds curve length {curve_len}")

    if state is None:
        state = TrainState(seed=cfg.seed)
    if state.adam is None:
        state.adam = AdamState.for_params(model.param_dict())

    params = model.param_dict()
    log = TrainLog()
    n_train = len(tr_in)
    crop = cfg.crop_len

    for epoch in range(state.epoch, cfg.epochs):
        t0 = time.perf_counter()
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, epoch]))
        perm = rng.permutation(n_train)
        starts = rng.integers(0, curve_len - crop + 1, size=n_train)

        losses = []
        for bstart in range(0, n_train, cfg.batch_size):
            idx = perm[bstart : bstart + cfg.batch_size]
            xs = np.stack([tr_in[i][starts[i] : starts[i] + crop] for i in idx])[:, None, :]
            ys = np.stack([tr_lab[i][starts[i] : starts[i] + crop] for i in idx])[:, None, :]
            out = model.forward(xs, train=True)
            loss, grad = mse_loss(out, ys)
            losses.append(loss)
            model.backward(grad.astype(model.dtype))
            adam_step(
                params,
                model.grad_dict(),
                state.adam,
                cfg.learning_rate,
                cfg.adam_beta1,
                cfg.adam_beta2,
                cfg.adam_eps,
            )

        train_loss = float(np.mean(losses))
        if not np.isfinite(train_loss):
            if cfg.checkpoint_dir is not None:
                path = os.path.join(cfg.checkpoint_dir, f"diverged_epoch{epoch}.odn")
                save_checkpoint(model, state, path)
            raise RuntimeError(f"training loss became non-finite at epoch {epoch}")

        train_psnr = _batched_psnr(model, tr_in, tr_lab, cfg.batch_size)
        val_psnr = _batched_psnr(model, va_in, va_lab, cfg.batch_size) if va_in else float("nan")
        state.epoch = epoch + 1
        state.val_psnr = val_psnr
        if va_in and val_psnr > state.best_val_psnr:
            state.best_val_psnr = val_psnr
            state.best_epoch = epoch
            state.best_state = model.snapshot()
        entry = TrainLogEntry(epoch, train_loss, train_psnr, val_psnr, time.perf_counter() - t0)
        log.entries.append(entry)
        if on_epoch is not None:
            on_epoch(entry)

        if (
            cfg.checkpoint_every > 0
            and cfg.checkpoint_dir is not None
            and (epoch + 1) % cfg.checkpoint_every == 0
        ):
            path = os.path.join(cfg.checkpoint_dir, f"epoch{epoch + 1:04d}.odn")
            save_checkpoint(model, state, path)

    best = model.clone()
    if state.best_state is not None:
        best.load_state_dict(state.best_state)
    return best, log
