"""Synthetic training corpus: random piecewise-constant truth signals,
pulse-blurred noisy inputs, and a streamable single-file dataset format.

Every stochastic step takes an explicit seed; per-pair seeds are derived
from (generator_seed, pair_index) so pairs are independent and the whole
dataset is reproducible byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from .trace_model import PulseProfile, Trace, add_gaussian_noise, convolve

_DATASET_MAGIC = b"ODS1"
DATASET_FORMAT_VERSION = 1


@dataclass
class GroundTruthSignal:
    """Piecewise-constant truth: per-run levels, run lengths, and the
    expanded sample trace."""

    levels: np.ndarray
    run_lengths: np.ndarray
    realized: Trace


@dataclass
class DatasetPair:
    input: Trace  # noisy pulse-blurred measurement
    label: Trace  # ground truth
    seed: int


@dataclass
class DatasetManifest:
    n_pairs: int
    samples_per_curve: int
    split: tuple[int, int]  # (train_count, val_count)
    pulse_source: str
    noise_sigma: float
    generator_seed: int
    format_version: int = DATASET_FORMAT_VERSION
    dt: float = 1e-8
    run_range: tuple[int, int] = (1, 20)
    level_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        self.split = tuple(self.split)
        self.run_range = tuple(self.run_range)
        self.level_range = tuple(self.level_range)
        if self.n_pairs < 1 or self.samples_per_curve < 1:
            raise ValueError("n_pairs and samples_per_curve must be positive")
        if sum(self.split) != self.n_pairs:
            raise ValueError(f"split {self.split} does not sum to n_pairs {self.n_pairs}")
        if any(c < 0 for c in self.split):
            raise ValueError("split counts must be non-negative")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be non-negative")


def sample_ground_truth(
    n_samples: int,
    run_range: tuple[int, int] = (1, 20),
    level_range: tuple[float, float] = (0.0, 1.0),
    seed: int = 0,
    dt: float = 1e-8,
) -> GroundTruthSignal:
    """Draw a random piecewise-constant signal of exactly n_samples.

    Run lengths are i.i.d. uniform integers in run_range (the final run is
    truncated to fit); levels are i.i.d. uniform in level_range.
    """
    lo, hi = run_range
    if not (1 <= lo <= hi):
        raise ValueError(f"bad run_range {run_range}")
    vlo, vhi = level_range
    if not vlo < vhi:
        raise ValueError(f"bad level_range {level_range}")
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    # each run is >= 1 sample, so n_samples draws always cover the signal
    runs_all = rng.integers(lo, hi + 1, size=n_samples)
    levels_all = rng.uniform(vlo, vhi, size=n_samples)
    ends = np.cumsum(runs_all)
    k = int(np.searchsorted(ends, n_samples, side="left")) + 1
    runs = runs_all[:k].astype(np.int64)
    levels = levels_all[:k].copy()
    runs[-1] -= int(ends[k - 1]) - n_samples
    samples = np.repeat(levels, runs)
    return GroundTruthSignal(levels=levels, run_lengths=runs, realized=Trace(samples, dt))


def make_pair(
    gt: GroundTruthSignal, pulse: PulseProfile, noise_sigma: float, seed: int
) -> DatasetPair:
    """Blur the truth with the pulse and add noise; no boundary handling
    beyond the linear convolution's implicit zeros."""
    measured = add_gaussian_noise(convolve(gt.realized, pulse), noise_sigma, seed)
    return DatasetPair(input=measured, label=gt.realized, seed=seed)


def derive_pair_seeds(generator_seed: int, k: int) -> tuple[int, int, int]:
    """Deterministic (pair_seed, truth_seed, noise_seed) for pair k."""
    ss = np.random.SeedSequence([int(generator_seed), int(k)])
    a, b, c = ss.generate_state(3, np.uint64)
    return int(a), int(b), int(c)


def _generate_pair(manifest: DatasetManifest, pulse: PulseProfile, k: int) -> DatasetPair:
    pair_seed, truth_seed, noise_seed = derive_pair_seeds(manifest.generator_seed, k)
    gt = sample_ground_truth(
        manifest.samples_per_curve,
        run_range=manifest.run_range,
        level_range=manifest.level_range,
        seed=truth_seed,
        dt=manifest.dt,
    )
    pair = make_pair(gt, pulse, manifest.noise_sigma, noise_seed)
    pair.seed = pair_seed
    return pair


def generate_pairs(manifest: DatasetManifest, pulse: PulseProfile) -> list[DatasetPair]:
    """All dataset pairs in index order, in memory."""
    return [_generate_pair(manifest, pulse, k) for k in range(manifest.n_pairs)]


def _write_array(f, arr: np.ndarray) -> None:
    f.write(struct.pack("<Q", arr.size))
    f.write(arr.astype("<f8").tobytes())


def generate_dataset(manifest: DatasetManifest, pulse: PulseProfile, path) -> None:
    """Write the full dataset file: magic, length-prefixed JSON manifest,
    then per pair the label and input arrays (f64 little-endian)."""
    blob = json.dumps(asdict(manifest), sort_keys=True).encode("utf-8")
    try:
        with open(path, "wb") as f:
            f.write(_DATASET_MAGIC)
            f.write(struct.pack("<Q", len(blob)))
            f.write(blob)
            for k in range(manifest.n_pairs):
                pair = _generate_pair(manifest, pulse, k)
                _write_array(f, pair.label.samples)
                _write_array(f, pair.input.samples)
    except OSError as exc:
        raise OSError(f"cannot write dataset to {path}: {exc}") from exc


class DatasetReader:
    """Random-access reader over the single-file dataset format."""

    def __init__(self, path):
        self.path = path
        self._f = open(path, "rb")
        try:
            magic = self._f.read(4)
            if magic != _DATASET_MAGIC:
                raise ValueError(f"{path}: bad magic {magic!r}")
            (blob_len,) = struct.unpack("<Q", self._f.read(8))
            manifest_dict = json.loads(self._f.read(blob_len).decode("utf-8"))
            if manifest_dict.get("format_version") != DATASET_FORMAT_VERSION:
                raise ValueError(
                    f"{path}: unsupported format_version {manifest_dict.get('format_version')}"
                )
            self.manifest = DatasetManifest(**manifest_dict)
            self._pairs_offset = 4 + 8 + blob_len
            # fixed-length curves make every pair the same size on disk
            self._pair_stride = 2 * (8 + 8 * self.manifest.samples_per_curve)
        except Exception:
            self._f.close()
            raise

    def __len__(self) -> int:
        return self.manifest.n_pairs

    def pair(self, k: int) -> DatasetPair:
        if not 0 <= k < len(self):
            raise IndexError(f"pair index {k} out of range")
        self._f.seek(self._pairs_offset + k * self._pair_stride)
        label = self._read_array()
        inp = self._read_array()
        pair_seed, _, _ = derive_pair_seeds(self.manifest.generator_seed, k)
        dt = self.manifest.dt
        return DatasetPair(input=Trace(inp, dt), label=Trace(label, dt), seed=pair_seed)

    def _read_array(self) -> np.ndarray:
        (count,) = struct.unpack("<Q", self._f.read(8))
        if count != self.manifest.samples_per_curve:
            raise ValueError(f"{self.path}: corrupt pair block (count {count})")
        raw = self._f.read(count * 8)
        if len(raw) != count * 8:
            raise ValueError(f"{self.path}: truncated pair block")
        return np.frombuffer(raw, dtype="<f8").copy()

    def __iter__(self):
        for k in range(len(self)):
            yield self.pair(k)

    def train_pairs(self) -> list[DatasetPair]:
        return [self.pair(k) for k in range(self.manifest.split[0])]

    def val_pairs(self) -> list[DatasetPair]:
        first = self.manifest.split[0]
        return [self.pair(k) for k in range(first, self.manifest.n_pairs)]

    def close(self) -> None:
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
