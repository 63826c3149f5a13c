import numpy as np
import numpy.testing as npt
import pytest

from otdr_deconv.datagen import DatasetManifest, generate_pairs
from otdr_deconv.odnet import (
    AdamState,
    NetArchitecture,
    ODNet,
    TrainConfig,
    adam_step,
    evaluate_psnr,
    load_checkpoint,
    mse_loss,
    save_checkpoint,
    train,
)
from otdr_deconv.trace_model import parametric_pulse

TINY = NetArchitecture(n_resblocks=2, channels=4, kernel_size=3, use_bn=False)


def tiny_corpus(n_pairs=8, n_samples=256, split=None, seed=0):
    manifest = DatasetManifest(
        n_pairs=n_pairs,
        samples_per_curve=n_samples,
        split=split or (n_pairs - 2, 2),
        pulse_source="rect",
        noise_sigma=1e-3,
        generator_seed=seed,
    )
    pulse = parametric_pulse(100e-9, 0.0, 1e-8)
    pairs = generate_pairs(manifest, pulse)
    k = manifest.split[0]
    return pairs[:k], pairs[k:]


# --- adam ----------------------------------------------------------------------


def test_adam_zero_gradient_no_motion():
    params = {"w": np.array([1.0, -2.0, 3.0], dtype=np.float32)}
    grads = {"w": np.zeros(3, dtype=np.float32)}
    state = AdamState.for_params(params)
    before = params["w"].copy()
    adam_step(params, grads, state, lr=0.1)
    npt.assert_array_equal(params["w"], before)
    assert state.t == 1


def test_adam_first_step_is_signed_lr():
    # with bias correction the first update is lr * g / (|g| + eps')
    params = {"w": np.array([0.0, 0.0], dtype=np.float64)}
    grads = {"w": np.array([0.5, -3.0])}
    state = AdamState.for_params(params)
    lr = 1e-3
    adam_step(params, grads, state, lr=lr)
    npt.assert_allclose(params["w"], [-lr, lr], rtol=1e-3)


def test_adam_two_constant_steps_descend_quadratic():
    # two updates with the same downhill gradient each reduce (w - 3)^2
    w = {"w": np.array([0.0])}
    state = AdamState.for_params(w)
    g = {"w": np.array([2.0 * (0.0 - 3.0)])}

    def loss():
        return float((w["w"][0] - 3.0) ** 2)

    l0 = loss()
    adam_step(w, g, state, lr=0.05)
    l1 = loss()
    adam_step(w, g, state, lr=0.05)
    l2 = loss()
    assert l0 > l1 > l2


def test_adam_converges_on_quadratic():
    w = {"w": np.array([0.0])}
    state = AdamState.for_params(w)
    for _ in range(200):
        g = {"w": 2.0 * (w["w"] - 3.0)}
        adam_step(w, g, state, lr=0.05)
    assert float((w["w"][0] - 3.0) ** 2) < 1e-2


def test_mse_loss_value_and_gradient():
    pred = np.array([[1.0, 2.0]])
    target = np.array([[0.0, 4.0]])
    loss, grad = mse_loss(pred, target)
    assert loss == pytest.approx((1.0 + 4.0) / 2.0)
    npt.assert_allclose(grad, [[1.0, -2.0]])


# --- training loop -------------------------------------------------------------


def test_train_overfits_single_pair():
    # memorization sanity check: one noiseless curve, short sharp pulse
    from otdr_deconv.datagen import make_pair, sample_ground_truth
    from otdr_deconv.trace_model import PulseProfile

    gt = sample_ground_truth(256, seed=0)
    pulse = PulseProfile(np.array([1.0, 0.3]), 1e-8, 2e-8)
    pair = make_pair(gt, pulse, 0.0, seed=1)
    model = ODNet(NetArchitecture(2, 8, 5, use_bn=False), seed=0)
    cfg = TrainConfig(epochs=800, batch_size=1, learning_rate=3e-3, crop_len=256, seed=0)
    best, log = train(model, [pair], [pair], cfg)
    assert log.entries[-1].train_loss < 1e-4


def test_train_validates_crop():
    train_pairs, val_pairs = tiny_corpus()
    model = ODNet(TINY, seed=0)
    with pytest.raises(ValueError):
        train(model, train_pairs, val_pairs, TrainConfig(epochs=1, crop_len=512, seed=0))
    with pytest.raises(ValueError):
        train(model, train_pairs, val_pairs, TrainConfig(epochs=1, crop_len=4, seed=0))
    with pytest.raises(ValueError):
        train(model, [], val_pairs, TrainConfig(epochs=1, crop_len=64, seed=0))


def test_train_deterministic_logs_and_weights():
    train_pairs, val_pairs = tiny_corpus()
    cfg = TrainConfig(epochs=3, batch_size=4, learning_rate=1e-3, crop_len=128, seed=11)
    m1 = ODNet(TINY, seed=1)
    m2 = ODNet(TINY, seed=1)
    b1, l1 = train(m1, train_pairs, val_pairs, cfg)
    b2, l2 = train(m2, train_pairs, val_pairs, cfg)
    for e1, e2 in zip(l1.entries, l2.entries):
        assert e1.train_loss == e2.train_loss
        assert e1.train_psnr == e2.train_psnr
        assert e1.val_psnr == e2.val_psnr
    for name, arr in m1.state_dict().items():
        npt.assert_array_equal(arr, m2.state_dict()[name])


def test_train_seed_changes_trajectory():
    train_pairs, val_pairs = tiny_corpus()
    m1 = ODNet(TINY, seed=1)
    m2 = ODNet(TINY, seed=1)
    _, l1 = train(m1, train_pairs, val_pairs,
                  TrainConfig(epochs=2, batch_size=4, crop_len=128, seed=1))
    _, l2 = train(m2, train_pairs, val_pairs,
                  TrainConfig(epochs=2, batch_size=4, crop_len=128, seed=2))
    assert l1.entries[0].train_loss != l2.entries[0].train_loss


def test_checkpoint_resume_is_bitwise_identical(tmp_path):
    train_pairs, val_pairs = tiny_corpus()
    cfg3 = TrainConfig(epochs=3, batch_size=4, learning_rate=1e-3, crop_len=128, seed=5)

    ref = ODNet(TINY, seed=2)
    _, ref_log = train(ref, train_pairs, val_pairs, cfg3)

    cfg2 = TrainConfig(epochs=2, batch_size=4, learning_rate=1e-3, crop_len=128, seed=5)
    part = ODNet(TINY, seed=2)
    from otdr_deconv.odnet import TrainState

    state = TrainState(seed=5)
    _, part_log = train(part, train_pairs, val_pairs, cfg2, state=state)
    ckpt = tmp_path / "mid.odn"
    save_checkpoint(part, state, ckpt)

    resumed, rstate = load_checkpoint(ckpt)
    assert rstate.epoch == 2
    assert rstate.adam is not None
    _, resume_log = train(resumed, train_pairs, val_pairs, cfg3, state=rstate)

    for name, arr in ref.state_dict().items():
        npt.assert_array_equal(arr, resumed.state_dict()[name])
    assert resume_log.entries[-1].train_loss == ref_log.entries[-1].train_loss
    assert resume_log.entries[-1].val_psnr == ref_log.entries[-1].val_psnr


def test_train_returns_best_val_model():
    train_pairs, val_pairs = tiny_corpus()
    model = ODNet(TINY, seed=3)
    cfg = TrainConfig(epochs=4, batch_size=4, learning_rate=1e-3, crop_len=128, seed=7)
    best, log = train(model, train_pairs, val_pairs, cfg)
    best_logged = max(e.val_psnr for e in log.entries)
    assert evaluate_psnr(best, val_pairs) == pytest.approx(best_logged, abs=1e-6)


def test_train_log_csv(tmp_path):
    train_pairs, val_pairs = tiny_corpus()
    model = ODNet(TINY, seed=4)
    _, log = train(model, train_pairs, val_pairs,
                   TrainConfig(epochs=2, batch_size=4, crop_len=128, seed=0))
    path = tmp_path / "log.csv"
    log.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,train_loss,train_psnr,val_psnr,seconds"
    assert len(lines) == 3


def test_periodic_checkpoints_written(tmp_path):
    train_pairs, val_pairs = tiny_corpus()
    model = ODNet(TINY, seed=5)
    cfg = TrainConfig(
        epochs=4,
        batch_size=4,
        crop_len=128,
        seed=0,
        checkpoint_every=2,
        checkpoint_dir=str(tmp_path),
    )
    train(model, train_pairs, val_pairs, cfg)
    assert (tmp_path / "epoch0002.odn").exists()
    assert (tmp_path / "epoch0004.odn").exists()
    loaded, state = load_checkpoint(tmp_path / "epoch0002.odn")
    assert state.epoch == 2
