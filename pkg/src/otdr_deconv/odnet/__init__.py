"""1D residual convolutional deconvolver: layers, network, training loop,
and checkpoint serialization. Forward and backward passes are explicit
numpy; no autograd framework is involved.
"""

from .layers import BatchNorm1d, Conv1d, ReLU
from .network import NetArchitecture, ODNet, ResBlock
from .training import (
    AdamState,
    TrainConfig,
    TrainLog,
    TrainLogEntry,
    TrainState,
    adam_step,
    evaluate_psnr,
    mse_loss,
    train,
)
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "AdamState",
    "BatchNorm1d",
    "Conv1d",
    "NetArchitecture",
    "ODNet",
    "ReLU",
    "ResBlock",
    "TrainConfig",
    "TrainLog",
    "TrainLogEntry",
    "TrainState",
    "adam_step",
    "evaluate_psnr",
    "load_checkpoint",
    "mse_loss",
    "save_checkpoint",
    "train",
]
