"""Shared fixtures: the desk-scale training corpus and trained models used
by the acceptance suite, plus a terminal summary that prints one PASS/FAIL
line per acceptance criterion.
"""

import sys
import time
from types import SimpleNamespace

import numpy as np
import pytest

from otdr_deconv.datagen import DatasetManifest, generate_pairs
from otdr_deconv.odnet import NetArchitecture, ODNet, TrainConfig, evaluate_psnr, train
from otdr_deconv.trace_model import parametric_pulse

# the frozen desk-scale recipe: small trunk, full-length curves, fixed seed
DESK_SEED = 0
DESK_EPOCHS = 50
DESK_BATCH = 16
DESK_LR = 3e-4
DESK_CROP = 2000
DESK_ARCH = dict(n_resblocks=3, channels=32, kernel_size=9)

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    def record(criterion: str, passed: bool, detail: str = ""):
        _ACCEPTANCE_LINES.append((criterion, bool(passed), detail))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in _ACCEPTANCE_LINES:
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] {crit}" + (f" -- {detail}" if detail else ""))


def desk_manifest() -> DatasetManifest:
    return DatasetManifest(
        n_pairs=512,
        samples_per_curve=2000,
        split=(448, 64),
        pulse_source="rect 100 ns",
        noise_sigma=1e-3,
        generator_seed=DESK_SEED,
    )


@pytest.fixture(scope="session")
def desk_corpus():
    pulse = parametric_pulse(100e-9, 0.0, 1e-8)
    manifest = desk_manifest()
    pairs = generate_pairs(manifest, pulse)
    k = manifest.split[0]
    return SimpleNamespace(
        manifest=manifest, pulse=pulse, train_pairs=pairs[:k], val_pairs=pairs[k:]
    )


def _raw_val_psnr(corpus) -> float:
    vals = []
    for p in corpus.val_pairs:
        mse = np.mean((p.input.samples - p.label.samples) ** 2)
        vals.append(10.0 * np.log10(1.0 / mse))
    return float(np.mean(vals))


def _train_desk(corpus, use_bn: bool):
    arch = NetArchitecture(use_bn=use_bn, **DESK_ARCH)
    model = ODNet(arch, seed=DESK_SEED)
    cfg = TrainConfig(
        epochs=DESK_EPOCHS,
        batch_size=DESK_BATCH,
        learning_rate=DESK_LR,
        crop_len=DESK_CROP,
        seed=DESK_SEED,
    )
    tag = "bn" if use_bn else "no-bn"
    print(f"\n[desk training, {tag}] {DESK_EPOCHS} epochs ...", file=sys.stderr, flush=True)

    def show(e):
        print(
            f"[desk training, {tag}] epoch {e.epoch:3d} loss {e.train_loss:.3e} "
            f"val {e.val_psnr:6.2f} dB ({e.seconds:.0f}s)",
            file=sys.stderr,
            flush=True,
        )

    t0 = time.perf_counter()
    best, log = train(model, corpus.train_pairs, corpus.val_pairs, cfg, on_epoch=show)
    seconds = time.perf_counter() - t0
    print(f"[desk training, {tag}] done in {seconds:.0f}s, "
          f"best val {max(e.val_psnr for e in log.entries):.2f} dB",
          file=sys.stderr, flush=True)
    return SimpleNamespace(
        model=best,
        final_model=model,
        log=log,
        seconds=seconds,
        raw_val_psnr=_raw_val_psnr(corpus),
        best_val_psnr=float(max(e.val_psnr for e in log.entries)),
    )


@pytest.fixture(scope="session")
def desk_run(desk_corpus):
    return _train_desk(desk_corpus, use_bn=False)


@pytest.fixture(scope="session")
def desk_run_bn(desk_corpus):
    return _train_desk(desk_corpus, use_bn=True)
