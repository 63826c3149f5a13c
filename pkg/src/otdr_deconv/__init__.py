"""Pulse deconvolution toolkit for OTDR traces.

Modules:
    trace_model -- trace physics, pulse shapes, scenario synthesis, file IO
    datagen     -- randomized training corpus generation and dataset files
    tvd         -- inverse filtering and total-variation deconvolution
    odnet       -- the 1D residual CNN deconvolver and its training loop
    evalharness -- PSNR, residual statistics, event detection, comparisons
    cli         -- the otdr-deconv command-line front end
"""

__version__ = "0.1.0"

from .trace_model import (
    FiberParams,
    LossEvent,
    PulseProfile,
    ReflectionEvent,
    Trace,
    add_gaussian_noise,
    convolve,
    parametric_pulse,
    spatial_resolution,
    synth_scenario_trace,
    time_to_distance,
)

__all__ = [
    "FiberParams",
    "LossEvent",
    "PulseProfile",
    "ReflectionEvent",
    "Trace",
    "add_gaussian_noise",
    "convolve",
    "parametric_pulse",
    "spatial_resolution",
    "synth_scenario_trace",
    "time_to_distance",
    "__version__",
]
