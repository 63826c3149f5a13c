"""Checkpoint file format: magic `ODN1`, a length-prefixed JSON header,
then raw tensors (length-prefixed shape descriptors, little-endian data)
in declaration order: model state, optional Adam moments, optional
best-so-far model state.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .network import NetArchitecture, ODNet

_MAGIC = b"ODN1"
CHECKPOINT_FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8"}


def _write_tensor(f, arr: np.ndarray, code: str) -> None:
    f.write(struct.pack("<I", arr.ndim))
    for d in arr.shape:
        f.write(struct.pack("<Q", d))
    f.write(np.ascontiguousarray(arr, dtype=code).tobytes())


def _read_tensor(f, code: str) -> np.ndarray:
    raw = f.read(4)
    if len(raw) != 4:
        raise ValueError("truncated tensor block")
    (ndim,) = struct.unpack("<I", raw)
    shape = tuple(struct.unpack("<Q", f.read(8))[0] for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    itemsize = np.dtype(code).itemsize
    data = f.read(count * itemsize)
    if len(data) != count * itemsize:
        raise ValueError("truncated tensor data")
    return np.frombuffer(data, dtype=code).reshape(shape).copy()


def save_checkpoint(model: ODNet, state, path) -> None:
    """Persist the model (and training state, when given) to `path`.

    `state` is a TrainState or None; None writes a bare inference model.
    """
    dtype_name = model.dtype.name
    if dtype_name not in _DTYPES:
        raise ValueError(f"unsupported model dtype {dtype_name}")
    code = _DTYPES[dtype_name]
    model_state = model.state_dict()
    params = model.param_dict()
    has_opt = state is not None and state.adam is not None
    has_best = state is not None and state.best_state is not None
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "arch": {
            "n_resblocks": model.arch.n_resblocks,
            "channels": model.arch.channels,
            "kernel_size": model.arch.kernel_size,
            "use_bn": model.arch.use_bn,
        },
        "dtype": dtype_name,
        "epoch": state.epoch if state is not None else 0,
        "val_psnr": state.val_psnr if state is not None else None,
        "seed": state.seed if state is not None else 0,
        "state_names": list(model_state),
        "param_names": list(params),
        "has_optimizer": has_opt,
        "adam_t": state.adam.t if has_opt else 0,
        "has_best": has_best,
        "best_val_psnr": state.best_val_psnr if has_best else None,
        "best_epoch": state.best_epoch if has_best else None,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for arr in model_state.values():
            _write_tensor(f, arr, code)
        if has_opt:
            for name in params:
                _write_tensor(f, state.adam.m[name], code)
            for name in params:
                _write_tensor(f, state.adam.v[name], code)
        if has_best:
            for name in model_state:
                _write_tensor(f, state.best_state[name], code)


def load_checkpoint(path):
    """Load (model, state) from a checkpoint file.

    The returned state is a TrainState (with Adam moments when the file
    carries them); bare model files yield a TrainState with adam=None.
    """
    from .training import AdamState, TrainState  # deferred: training imports this module

    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: bad checkpoint magic {magic!r}")
        (blob_len,) = struct.unpack("<Q", f.read(8))
        try:
            header = json.loads(f.read(blob_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: corrupt checkpoint header: {exc}") from exc
        if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(
                f"{path}: unsupported checkpoint version {header.get('format_version')}"
            )
        code = _DTYPES[header["dtype"]]
        arch = NetArchitecture(**header["arch"])
        model = ODNet(arch, seed=0, dtype=np.dtype(header["dtype"]))
        state_names = header["state_names"]
        tensors = {name: _read_tensor(f, code) for name in state_names}
        model.load_state_dict(tensors)

        state = TrainState(
            epoch=header["epoch"],
            seed=header["seed"],
            val_psnr=header["val_psnr"] if header["val_psnr"] is not None else float("nan"),
        )
        if header["has_optimizer"]:
            param_names = header["param_names"]
            m = {name: _read_tensor(f, code) for name in param_names}
            v = {name: _read_tensor(f, code) for name in param_names}
            state.adam = AdamState(m=m, v=v, t=header["adam_t"])
        if header["has_best"]:
            state.best_state = {name: _read_tensor(f, code) for name in state_names}
            state.best_val_psnr = header["best_val_psnr"]
            state.best_epoch = header["best_epoch"]
    return model, state
