import math

import numpy as np
import pytest
import torch

from vqdeepsc.codec import CodecConfig
from vqdeepsc.model import ModelConfig, VQDeepSC
from vqdeepsc.training import (
    DiscriminatorConfig,
    NonFiniteLossError,
    PatchDiscriminator,
    TrainConfig,
    Trainer,
    batch_indices,
    channel_in_loop,
    gan_loss,
    generator_adversarial_loss,
    total_loss,
    train,
)


def tiny_model(mode="vq"):
    return VQDeepSC(ModelConfig(CodecConfig(2, 4, [4, 8]), [4, 4], [True, True], mode=mode, analog_channels=[2, 2]))


def test_gan_loss_arithmetic():
    d_real = torch.full((2, 1, 3, 3), 0.8)
    d_fake = torch.full((2, 1, 3, 3), 0.3)
    assert gan_loss(d_real, d_fake).item() == pytest.approx(math.log(0.8) + math.log(0.7), rel=1e-6)
    assert generator_adversarial_loss(d_fake).item() == pytest.approx(math.log(0.7), rel=1e-6)
    assert generator_adversarial_loss(d_fake, non_saturating=True).item() == pytest.approx(-math.log(0.3), rel=1e-6)


def test_gan_loss_is_finite_at_the_boundary():
    v = gan_loss(torch.zeros(1, 1, 2, 2), torch.ones(1, 1, 2, 2))
    assert math.isfinite(v.item())
    with pytest.raises(ValueError):
        gan_loss(torch.full((1, 1, 2, 2), 1.5), torch.zeros(1, 1, 2, 2))
    with pytest.raises(ValueError):
        gan_loss(torch.zeros(1, 1, 2, 2), torch.zeros(1, 1, 3, 3))


def test_total_loss_arithmetic():
    img = torch.zeros(1, 3, 2, 2)
    rec = torch.full((1, 3, 2, 2), 0.25)
    terms = [(torch.tensor(1.0), torch.tensor(2.0)), None, (torch.tensor(0.5), torch.tensor(4.0))]
    # 0.25 + (1 + 0.25 * 2) + (0.5 + 0.25 * 4)
    assert total_loss(img, rec, terms, 0.25).item() == pytest.approx(3.25)


def test_discriminator_grid():
    d = PatchDiscriminator()
    out = d(torch.rand(2, 3, 64, 64))
    assert out.shape == (2, 1, 6, 6) and DiscriminatorConfig().grid_size(64) == 6
    assert 0 <= out.min() and out.max() <= 1
    with pytest.raises(ValueError):
        d(torch.rand(1, 3, 16, 16))


def test_batch_indices_is_a_per_epoch_permutation():
    seen = np.concatenate([batch_indices(20, 6, s, seed=3) for s in range(3)])
    assert len(set(seen.tolist())) == 18
    assert np.array_equal(batch_indices(20, 6, 4, 3), batch_indices(20, 6, 4, 3))
    with pytest.raises(ValueError):
        batch_indices(4, 6, 0, 0)


def _run(steps=4, **kw):
    torch.manual_seed(0)
    m = tiny_model()
    tr = Trainer(m, TrainConfig(batch_size=4, epochs=4, **kw), PatchDiscriminator(), steps_per_epoch=2)
    imgs = np.random.default_rng(0).random((8, 3, 32, 32)).astype(np.float32)
    return tr, train(tr, imgs, steps, seed=1)


def test_training_is_deterministic():
    _, h1 = _run()
    _, h2 = _run()
    assert h1 == h2


def test_each_step_updates_both_networks_once(monkeypatch):
    tr, _ = _run(steps=0)
    calls = {"g": 0, "d": 0}
    og, od = tr.opt_g.step, tr.opt_d.step
    monkeypatch.setattr(tr.opt_g, "step", lambda *a, **k: (calls.__setitem__("g", calls["g"] + 1), og())[1])
    monkeypatch.setattr(tr.opt_d, "step", lambda *a, **k: (calls.__setitem__("d", calls["d"] + 1), od())[1])
    before = [p.detach().clone() for p in tr.disc.parameters()]
    tr.train_step(torch.rand(4, 3, 32, 32))
    assert calls == {"g": 1, "d": 1}
    assert any(not torch.equal(a, b) for a, b in zip(before, tr.disc.parameters()))


def test_discriminator_untouched_without_adversarial_term():
    tr, _ = _run(steps=0, adversarial=False)
    before = [p.detach().clone() for p in tr.disc.parameters()]
    m = tr.train_step(torch.rand(4, 3, 32, 32))
    assert all(torch.equal(a, b) for a, b in zip(before, tr.disc.parameters()))
    assert "gan_d" not in m and m["gen_adv"] == 0.0


def test_generator_step_leaves_no_discriminator_gradients():
    tr, _ = _run(steps=1)
    assert all(p.grad is None for p in tr.disc.parameters())


def test_schedules_step_per_epoch():
    tr, hist = _run(steps=4)
    assert tr.epoch == 2
    assert tr.opt_d.param_groups[0]["lr"] == pytest.approx(1e-5 * (1 - 2 / 4))
    assert hist[0]["lr_g"] == pytest.approx(1.75e-4)
    assert {"gan_d", "gen_adv", "mae", "gen_total", "usage_entropy_l1", "embedding_l2"} <= set(hist[0])


def test_codec_lr_halves_after_step_size():
    torch.manual_seed(0)
    tr = Trainer(tiny_model(), TrainConfig(step_size_epochs=1, epochs=10), steps_per_epoch=1)
    tr.train_step(torch.rand(2, 3, 32, 32))
    assert tr.opt_g.param_groups[0]["lr"] == pytest.approx(1.75e-4 / 2)


def test_non_finite_loss_raises():
    tr, _ = _run(steps=0)
    batch = torch.rand(4, 3, 32, 32)
    batch[0, 0, 0, 0] = float("nan")
    with pytest.raises(NonFiniteLossError) as err:
        tr.train_step(batch)
    assert "gen_total" in err.value.metrics


def test_adversarial_warmup_and_weight():
    tr, hist = _run(steps=3, adv_start_step=2, adv_weight=0.5)
    assert "gan_d" not in hist[0] and "gan_d" in hist[2]
    h = hist[2]
    assert h["gen_total"] == pytest.approx(0.1 * h["vq_total"] + 0.5 * h["gen_adv"], rel=1e-5)


def test_channel_in_loop_for_analog_training():
    cfg = TrainConfig(channel_in_loop=True, train_snr_db=60.0)
    fn = channel_in_loop(cfg, torch.Generator().manual_seed(0))
    z = torch.randn(2, 40)
    assert torch.allclose(fn(z), z, atol=1e-2)
    cfg = TrainConfig(channel_in_loop=True, train_snr_db=0.0, train_channel="rayleigh")
    assert not torch.allclose(channel_in_loop(cfg, torch.Generator().manual_seed(0))(z), z, atol=1e-2)
    torch.manual_seed(0)
    tr = Trainer(tiny_model("analog"), TrainConfig(channel_in_loop=True, batch_size=2), steps_per_epoch=1)
    m = tr.train_step(torch.rand(2, 3, 32, 32))
    assert math.isfinite(m["gen_total"])


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lam=0)
    with pytest.raises(ValueError):
        TrainConfig(lr_codec=-1)
