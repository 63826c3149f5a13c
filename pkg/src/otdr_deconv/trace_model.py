"""OTDR trace physics: time-of-flight mapping, pulse convolution, noise,
and synthetic scenario traces.

All intensities are linear power units. Traces are uniformly sampled; the
sampling interval `dt` is carried alongside the samples because every
physical quantity (distance, spatial resolution, attenuation slope) derives
from it.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

LIGHT_SPEED = 2.9979e8  # vacuum, m/s

# below this work estimate the direct sum beats the FFT setup cost
_DIRECT_CONV_MAX_WORK = 1 << 16


@dataclass
class FiberParams:
    """Fiber constants for time-to-distance conversion and loss slope."""

    refractive_index: float = 1.468  # group index of standard SMF
    light_speed: float = LIGHT_SPEED
    attenuation_db_per_km: float = 0.2  # one-way loss

    def __post_init__(self):
        if self.refractive_index <= 1.0:
            raise ValueError(f"refractive index must exceed 1, got {self.refractive_index}")
        if self.attenuation_db_per_km < 0.0:
            raise ValueError("attenuation must be non-negative")


@dataclass
class Trace:
    """A uniformly sampled intensity signal.

    samples: intensity per sample (linear units)
    dt: sampling interval in seconds
    origin_index: index of sample 0 in the parent coordinate system
    """

    samples: np.ndarray
    dt: float
    origin_index: int = 0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("trace needs a non-empty 1-D sample array")
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("trace samples must be finite")

    def __len__(self) -> int:
        return len(self.samples)

    def with_samples(self, samples: np.ndarray) -> "Trace":
        return Trace(samples, self.dt, self.origin_index)


@dataclass
class PulseProfile:
    """Discrete probe-pulse shape used as the blur kernel.

    Peak-normalized on construction: max tap is exactly 1.0.
    """

    taps: np.ndarray
    dt: float
    nominal_width: float

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.float64)
        if self.taps.ndim != 1 or self.taps.size == 0:
            raise ValueError("pulse needs a non-empty 1-D tap array")
        if not np.all(np.isfinite(self.taps)):
            raise ValueError("pulse taps must be finite")
        peak = self.taps.max()
        if not peak > 0.0:
            raise ValueError("pulse needs at least one strictly positive tap")
        self.taps = self.taps / peak
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    def __len__(self) -> int:
        return len(self.taps)


@dataclass
class LossEvent:
    """Persistent downward step: everything past `index` is attenuated."""

    index: int
    loss_db: float


@dataclass
class ReflectionEvent:
    """Single-sample spike whose intensity is set to `peak_intensity`."""

    index: int
    peak_intensity: float


Event = LossEvent | ReflectionEvent


def validate_events(events: list, n_samples: int) -> None:
    """Check ordering, bounds, and magnitudes of a scenario event list."""
    prev = -1
    for ev in events:
        if not 0 <= ev.index < n_samples:
            raise ValueError(f"event index {ev.index} outside trace of {n_samples} samples")
        if ev.index <= prev:
            raise ValueError("event indices must be strictly increasing")
        prev = ev.index
        if isinstance(ev, LossEvent):
            if not ev.loss_db > 0.0:
                raise ValueError("loss_db must be positive")
        elif isinstance(ev, ReflectionEvent):
            if not ev.peak_intensity > 0.0:
                raise ValueError("peak_intensity must be positive")
        else:
            raise ValueError(f"unknown event type {type(ev).__name__}")


def time_to_distance(t: float, fp: FiberParams) -> float:
    """Map round-trip flight time to fiber distance: c*t/(2n)."""
    if t < 0.0:
        raise ValueError(f"flight time must be non-negative, got {t}")
    return fp.light_speed * t / (2.0 * fp.refractive_index)


def spatial_resolution(pulse_width: float, fp: FiberParams) -> float:
    """Minimum resolvable event separation for a given pulse width: c*tau/(2n)."""
    if not pulse_width > 0.0:
        raise ValueError(f"pulse width must be positive, got {pulse_width}")
    return fp.light_speed * pulse_width / (2.0 * fp.refractive_index)


def _check_dt(a_dt: float, b_dt: float) -> None:
    if not math.isclose(a_dt, b_dt, rel_tol=1e-9):
        raise ValueError(f"sampling intervals differ: {a_dt} vs {b_dt}")


def convolve(x: Trace, h: PulseProfile, method: str = "auto") -> Trace:
    """Causal linear convolution of a trace with a pulse, truncated to len(x).

    Output sample i is sum_k h[k] * x[i-k]; the implicit padding is zeros
    (linear, not circular). `method` selects "direct" (plain sum),
    "fft" (overlap via FFT), or "auto" (direct for small work sizes).
    Both paths agree to ~1e-12 relative.
    """
    _check_dt(x.dt, h.dt)
    n = len(x.samples)
    if method == "auto":
        method = "direct" if n * len(h.taps) <= _DIRECT_CONV_MAX_WORK else "fft"
    if method == "direct":
        full = np.convolve(x.samples, h.taps)
    elif method == "fft":
        full = fftconvolve(x.samples, h.taps)
    else:
        raise ValueError(f"unknown convolution method {method!r}")
    return x.with_samples(full[:n])


def add_gaussian_noise(x: Trace, sigma: float, seed: int) -> Trace:
    """Add i.i.d. zero-mean Gaussian noise of standard deviation `sigma`."""
    if sigma < 0.0:
        raise ValueError(f"noise sigma must be non-negative, got {sigma}")
    rng = np.random.default_rng(seed)
    return x.with_samples(x.samples + rng.normal(0.0, sigma, len(x.samples)))


def parametric_pulse(width: float, rise_fraction: float, dt: float) -> PulseProfile:
    """Trapezoidal pulse of total duration `width`.

    rise_fraction gives the linear rise (and fall) as a fraction of the
    width; 0 produces a rectangle. Peak is normalized to 1.0.
    """
    if width < dt:
        raise ValueError(f"pulse width {width} shorter than sampling interval {dt}")
    if not 0.0 <= rise_fraction < 0.5:
        raise ValueError(f"rise_fraction must be in [0, 0.5), got {rise_fraction}")
    n = max(1, int(round(width / dt)))
    taps = np.ones(n)
    rise = int(math.floor(rise_fraction * n))
    for j in range(rise):
        v = (j + 1) / (rise + 1)
        taps[j] = v
        taps[n - 1 - j] = v
    return PulseProfile(taps=taps, dt=dt, nominal_width=width)


def synth_scenario_trace(
    n_samples: int,
    initial_intensity: float,
    fp: FiberParams,
    events: list,
    pulse: PulseProfile,
    noise_sigma: float,
    seed: int,
) -> tuple[Trace, Trace]:
    """Build a (clean_truth, measured) pair for a loss/reflection scenario.

    The clean truth is an exponential-decay baseline with the round-trip
    attenuation slope, multiplicative drops at loss events, and single
    samples set to the given peak at reflection events. The measurement is
    the pulse convolution of the truth plus Gaussian noise.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    validate_events(events, n_samples)
    dt = pulse.dt
    z_km = fp.light_speed * (np.arange(n_samples) * dt) / (2.0 * fp.refractive_index) / 1000.0
    # 2x: an OTDR trace sees the loss on the way out and on the way back
    clean = initial_intensity * 10.0 ** (-2.0 * fp.attenuation_db_per_km * z_km / 10.0)
    for ev in events:
        if isinstance(ev, LossEvent):
            clean[ev.index :] *= 10.0 ** (-ev.loss_db / 10.0)
    for ev in events:
        if isinstance(ev, ReflectionEvent):
            clean[ev.index] = ev.peak_intensity
    truth = Trace(clean, dt)
    measured = add_gaussian_noise(convolve(truth, pulse), noise_sigma, seed)
    return truth, measured


# ---------------------------------------------------------------------------
# file formats

_TRACE_MAGIC = b"OTR1"


def write_trace_csv(trace: Trace, path) -> None:
    """Write `index,intensity` rows with full round-trip precision."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("index,intensity\n")
        for i, v in enumerate(trace.samples):
            f.write(f"{trace.origin_index + i},{float(v)!r}\n")


def read_trace_csv(path, dt: float = 1e-8) -> Trace:
    indices, values = _read_indexed_csv(path, "intensity")
    return Trace(np.array(values), dt, origin_index=indices[0])


def write_pulse_csv(pulse: PulseProfile, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("index,amplitude\n")
        for i, v in enumerate(pulse.taps):
            f.write(f"{i},{float(v)!r}\n")


def read_pulse_csv(path, dt: float = 1e-8) -> PulseProfile:
    """Load a pulse shape; the constructor peak-normalizes it."""
    _, values = _read_indexed_csv(path, "amplitude")
    return PulseProfile(np.array(values), dt, nominal_width=len(values) * dt)


def _read_indexed_csv(path, value_column: str) -> tuple[list[int], list[float]]:
    indices: list[int] = []
    values: list[float] = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        expected = f"index,{value_column}"
        if header != expected:
            raise ValueError(f"{path}: expected header {expected!r}, got {header!r}")
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                idx_s, val_s = line.split(",")
                indices.append(int(idx_s))
                values.append(float(val_s))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad row {line!r}") from exc
    if not values:
        raise ValueError(f"{path}: no samples")
    return indices, values


def write_trace_bin(trace: Trace, path) -> None:
    """Binary trace: magic, u64 count, f64 samples, f64 dt (all little-endian)."""
    with open(path, "wb") as f:
        f.write(_TRACE_MAGIC)
        f.write(struct.pack("<Q", len(trace.samples)))
        f.write(trace.samples.astype("<f8").tobytes())
        f.write(struct.pack("<d", trace.dt))


def read_trace_bin(path) -> Trace:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _TRACE_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        (count,) = struct.unpack("<Q", f.read(8))
        raw = f.read(count * 8)
        if len(raw) != count * 8:
            raise ValueError(f"{path}: truncated sample block")
        samples = np.frombuffer(raw, dtype="<f8").copy()
        (dt,) = struct.unpack("<d", f.read(8))
    return Trace(samples, dt)
