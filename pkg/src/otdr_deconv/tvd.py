"""Classical deconvolution baselines: regularized Fourier inverse filtering
and total-variation deconvolution via an augmented-Lagrangian splitting.

The TV solver works on a circular domain. In the default "zero_padded"
boundary mode the trace is extended with zeros at both ends before solving,
which turns the implicit wrap-around of the frequency-domain updates into a
join between two near-zero regions; "circular" solves on the raw trace and
exhibits the classic end artifacts when the two ends are uncorrelated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trace_model import PulseProfile, Trace, _check_dt

BOUNDARY_MODES = ("zero_padded", "circular")


@dataclass
class TvdConfig:
    """Knobs for tv_deconvolve.

    lam weights the total-variation term against the data fidelity;
    norm_p picks the fidelity norm (2 = least squares, 1 = robust);
    rho is the splitting penalty; pad_len None means 2 * len(pulse).
    """

    lam: float = 2e-4
    norm_p: int = 2
    max_iters: int = 500
    tol: float = 1e-6
    rho: float = 2.0
    boundary: str = "zero_padded"
    pad_len: int | None = None

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValueError("lam must be non-negative")
        if self.norm_p not in (1, 2):
            raise ValueError(f"norm_p must be 1 or 2, got {self.norm_p}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if not self.rho > 0.0:
            raise ValueError("rho must be positive")
        if self.boundary not in BOUNDARY_MODES:
            raise ValueError(f"boundary must be one of {BOUNDARY_MODES}")
        if self.pad_len is not None and self.pad_len < 0:
            raise ValueError("pad_len must be non-negative")


@dataclass
class TvdResult:
    estimate: Trace
    objective_trace: np.ndarray
    iterations_used: int
    converged: bool


def pad_boundary(y: Trace, pad_len: int) -> Trace:
    """Zero-extend a trace by pad_len samples at each end."""
    if pad_len < 0:
        raise ValueError("pad_len must be non-negative")
    if pad_len == 0:
        return y.with_samples(y.samples.copy())
    return Trace(
        np.pad(y.samples, pad_len), y.dt, origin_index=y.origin_index - pad_len
    )


def crop_boundary(y: Trace, pad_len: int) -> Trace:
    """Inverse of pad_boundary: drop pad_len samples from each end."""
    if pad_len < 0:
        raise ValueError("pad_len must be non-negative")
    if pad_len == 0:
        return y.with_samples(y.samples.copy())
    if len(y.samples) <= 2 * pad_len:
        raise ValueError("trace shorter than twice the pad length")
    return Trace(
        y.samples[pad_len:-pad_len].copy(), y.dt, origin_index=y.origin_index + pad_len
    )


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    """Elementwise shrinkage sign(v) * max(|v| - t, 0)."""
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def inverse_filter(y: Trace, h: PulseProfile, eps: float = 0.0) -> Trace:
    """Frequency-domain inverse: IFFT( Y * conj(H) / (|H|^2 + eps) ).

    With eps = 0 this is the naive spectral division, which amplifies noise
    wherever |H| is small and fails outright on spectral zeros.
    """
    _check_dt(y.dt, h.dt)
    if eps < 0.0:
        raise ValueError("eps must be non-negative")
    n = len(y.samples)
    if n < len(h.taps):
        raise ValueError("trace shorter than the pulse")
    H = np.fft.rfft(h.taps, n)
    mag2 = np.abs(H) ** 2
    if eps == 0.0 and mag2.min() <= 1e-24 * mag2.max():
        raise ValueError(
            "pulse spectrum vanishes at some frequency; the eps=0 inverse is singular"
        )
    Y = np.fft.rfft(y.samples)
    x = np.fft.irfft(Y * np.conj(H) / (mag2 + eps), n)
    return y.with_samples(x)


def _circular_diff(x: np.ndarray) -> np.ndarray:
    return np.roll(x, -1) - x


def tv_deconvolve(y: Trace, h: PulseProfile, cfg: TvdConfig | None = None) -> TvdResult:
    """Deconvolve y by the pulse under a total-variation prior.

    Splits u = Dx (D the circular forward difference on the working
    domain); alternates a frequency-domain x-update, soft-thresholding of
    u with threshold lam/rho, and dual ascent. For norm_p == 2 the
    fidelity is the least-squares form 0.5*||h*x - y||^2; for norm_p == 1
    a second splitting z = h*x - y makes the fidelity an l1 norm.

    Non-convergence within max_iters is reported via converged=False, not
    an exception.
    """
    if cfg is None:
        cfg = TvdConfig()
    _check_dt(y.dt, h.dt)
    n = len(y.samples)
    if n < len(h.taps):
        raise ValueError("trace shorter than the pulse")

    if cfg.boundary == "zero_padded":
        pad = 2 * len(h.taps) if cfg.pad_len is None else cfg.pad_len
    else:
        pad = 0
    yw = np.pad(y.samples, pad) if pad else y.samples.astype(np.float64)
    m = len(yw)

    Hf = np.fft.rfft(h.taps, m)
    dk = np.zeros(m)
    if m > 1:  # for m == 1 the circular difference is the zero operator
        dk[0] = -1.0
        dk[-1] = 1.0
    Df = np.fft.rfft(dk)
    Yf = np.fft.rfft(yw)
    HtY = np.conj(Hf) * Yf
    H2 = np.abs(Hf) ** 2
    D2 = np.abs(Df) ** 2

    rho = cfg.rho
    lam = cfg.lam
    x = np.zeros(m)
    u = np.zeros(m)
    du = np.zeros(m)
    if cfg.norm_p == 1:
        z = np.zeros(m)
        dz = np.zeros(m)
        denom = H2 + D2  # rho cancels when both terms carry it
    else:
        denom = H2 + rho * D2

    objective = []
    converged = False
    iterations = 0
    for _ in range(cfg.max_iters):
        iterations += 1
        x_prev = x
        if cfg.norm_p == 2:
            rhs = HtY + rho * np.conj(Df) * np.fft.rfft(u - du)
        else:
            rhs = np.conj(Hf) * np.fft.rfft(yw + z - dz) + np.conj(Df) * np.fft.rfft(u - du)
        Xf = rhs / denom
        x = np.fft.irfft(Xf, m)

        Dx = _circular_diff(x)
        u = soft_threshold(Dx + du, lam / rho)
        du = du + Dx - u

        resid = np.fft.irfft(Hf * Xf, m) - yw
        if cfg.norm_p == 1:
            z = soft_threshold(resid + dz, 1.0 / rho)
            dz = dz + resid - z
            fid = np.abs(resid).sum()
        else:
            fid = 0.5 * float(resid @ resid)
        objective.append(fid + lam * np.abs(Dx).sum())

        delta = np.linalg.norm(x - x_prev)
        scale = max(np.linalg.norm(x_prev), 1e-12)
        if delta / scale < cfg.tol:
            converged = True
            break

    est = Trace(x, y.dt, origin_index=y.origin_index - pad)
    if pad:
        est = crop_boundary(est, pad)
    return TvdResult(
        estimate=est,
        objective_trace=np.array(objective),
        iterations_used=iterations,
        converged=converged,
    )
