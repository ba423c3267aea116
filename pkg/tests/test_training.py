import math

import numpy as np
import pytest
from conftest import model_grad_error

from foasurprise.ambisonics import render_scene
from foasurprise.ambisonics.synth import training_scene
from foasurprise.errors import ConfigError, InvalidBatchError, InvalidDimensionError, InvalidEpochError
from foasurprise.model import ModelConfig, SurpriseModel
from foasurprise.numerics import Tensor, grad_check
from foasurprise.training import (LOSS_LOG_COLUMNS, TrainConfig, align_loss, curriculum_weights, infonce_loss,
                                  make_crops, recon_loss, save_training, train)


def test_infonce_uniform_logits_is_log_n():
    pool = np.random.default_rng(0).normal(size=(10, 4))
    loss = infonce_loss([np.zeros((3, 4))], [np.array([0, 4, 9])], pool)
    assert abs(loss.item() - math.log(10)) < 1e-9


def test_infonce_sums_horizons():
    pool = np.random.default_rng(0).normal(size=(6, 4))
    loss = infonce_loss([np.zeros((2, 4))] * 3, [np.array([1, 2])] * 3, pool)
    assert loss.item() == pytest.approx(3 * math.log(6), abs=1e-12)


def test_infonce_saturates_on_confident_positive():
    pool = np.eye(5)
    loss = infonce_loss([pool[[2]] * 50.0], [np.array([2])], pool)
    assert 0.0 <= loss.item() < 1e-40


def test_infonce_pool_permutation_invariant():
    gen = np.random.default_rng(1)
    pool, pred = gen.normal(size=(8, 3)), gen.normal(size=(4, 3))
    pos = np.array([0, 3, 5, 7])
    perm = gen.permutation(8)
    inv = np.argsort(perm)
    a = infonce_loss([pred], [pos], pool).item()
    b = infonce_loss([pred], [inv[pos]], pool[perm]).item()
    assert a == pytest.approx(b, abs=1e-12)


def test_infonce_hand_example():
    pool = np.array([[1.0, 0.0], [0.0, 1.0]])
    loss = infonce_loss([np.array([[1.0, 0.0]])], [np.array([0])], pool, temperature=0.5)
    assert loss.item() == pytest.approx(math.log(1 + math.exp(-2.0)), abs=1e-15)


def test_infonce_errors():
    with pytest.raises(InvalidBatchError):
        infonce_loss([np.zeros((1, 2))], [np.array([0])], np.zeros((1, 2)))
    with pytest.raises(InvalidBatchError):
        infonce_loss([np.zeros((1, 2))], [np.array([5])], np.zeros((3, 2)))
    with pytest.raises(ConfigError):
        infonce_loss([np.zeros((1, 2))], [np.array([0])], np.zeros((3, 2)), temperature=0.0)


def test_recon_loss_hand_arithmetic():
    assert recon_loss(np.array([[1.0, 2.0], [3.0, 4.0]]), np.zeros((2, 2))).item() == 7.5
    assert recon_loss(np.array([0.5, -0.5]), np.array([0.25, 0.25])).item() == (0.0625 + 0.5625) / 2
    with pytest.raises(InvalidDimensionError):
        recon_loss(np.zeros(2), np.zeros(3))


def test_align_loss_value_and_gradient():
    target = np.array([[1.0, 2.0], [0.0, 0.0]])
    assert align_loss(np.zeros((2, 2)), target).item() == 2.5
    assert grad_check(lambda x: align_loss(x, target), np.random.default_rng(0).normal(size=(2, 2))) < 1e-8
    t = Tensor(target, True)
    align_loss(Tensor(np.zeros((2, 2)), True), t).backward()
    assert t.grad is None


def test_curriculum_schedule():
    assert [curriculum_weights(e) for e in range(1, 11)] == [(1.0, 0.0)] * 6 + [(5.0, 0.2)] * 4
    with pytest.raises(InvalidEpochError):
        curriculum_weights(0)


def test_initial_contrastive_loss_is_log_pool_size():
    t_len, batch = 64, 16
    for seed in range(2):
        model = SurpriseModel(ModelConfig(seed=seed))
        prepared = model.prepare(render_scene(training_scene(seed, duration=3.0)))
        starts = np.random.default_rng(seed).integers(0, prepared.n_frames - t_len, size=batch)
        z = model.latents(np.stack([prepared.node_inputs[s: s + t_len] for s in starts]))
        h = model.gru.unroll(z)
        pool = z.reshape(t_len * batch, -1)
        preds = [model.heads.predict(h[: t_len - k].reshape((t_len - k) * batch, -1), k) for k in (1, 2, 3)]
        positives = [(np.arange(k, t_len)[:, None] * batch + np.arange(batch)[None, :]).reshape(-1)
                     for k in (1, 2, 3)]
        per_horizon = infonce_loss(preds, positives, pool).item() / 3
        assert abs(per_horizon - math.log(t_len * batch)) < 0.2


@pytest.mark.parametrize("seed", [0, 1])
def test_full_objective_gradient(seed):
    assert model_grad_error(seed, hidden=16) < 1e-4


def test_make_crops_cover_full_lengths():
    class Fake:
        def __init__(self, n):
            self.n_frames = n

    crops = make_crops([Fake(100), Fake(10), Fake(64)], 32, np.random.default_rng(0))
    assert sorted(c for c, _ in crops) == [0, 0, 0, 2, 2]
    assert all(s + 32 <= [100, 10, 64][c] for c, s in crops)


def test_phase_one_leaves_prediction_heads_unchanged(tiny_corpus):
    config = TrainConfig(seq_len=32, batch_size=8, epochs=2, seed=0, model=ModelConfig(hidden=16))
    model = SurpriseModel(config.model)
    before = {n: p.data.copy() for n, p in model.heads.params.items()}
    result = train(tiny_corpus, config, model=model)
    for name, value in before.items():
        if name.startswith("heads.pred"):
            np.testing.assert_array_equal(model.heads.params[name].data, value)
        else:
            assert not np.array_equal(model.heads.params[name].data, value)
    assert all(r.w_cpc == 0.0 for r in result.history)


def test_training_run_contracts(tiny_trained):
    history = tiny_trained.history
    assert [r.epoch for r in history] == list(range(1, 8))
    assert tiny_trained.model.compressor.checksum() == tiny_trained.compressor_checksum_before
    assert all(tiny_trained.grad_nonzero.values())
    assert history[-1].recon_loss < history[0].recon_loss
    lines = tiny_trained.loss_csv().splitlines()
    assert lines[0] == ",".join(LOSS_LOG_COLUMNS)
    assert len(lines) == 8
    assert lines[7].startswith("7,5.0,0.2,")


def test_training_deterministic(tiny_corpus, tmp_path):
    config = TrainConfig(seq_len=32, batch_size=8, epochs=1, seed=4, model=ModelConfig(hidden=16))
    a, b = train(tiny_corpus, config), train(tiny_corpus, config)
    assert a.loss_csv() == b.loss_csv()
    save_training(a, tmp_path / "a.ckpt", tmp_path / "a.csv", config)
    save_training(b, tmp_path / "b.ckpt", tmp_path / "b.csv", config)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    _, extra = SurpriseModel.load(tmp_path / "a.ckpt")
    assert extra["curriculum_epoch"] == 1


def test_resume_continues_curriculum(tiny_corpus):
    config = TrainConfig(seq_len=32, batch_size=8, epochs=1, seed=0, model=ModelConfig(hidden=16))
    first = train(tiny_corpus, config)
    second = train(tiny_corpus, config, model=first.model, start_epoch=7, optimizer=first.optimizer)
    assert second.history[0].epoch == 7 and second.history[0].w_cpc == 0.2


def test_training_rejects_bad_inputs(tiny_corpus):
    with pytest.raises(ConfigError):
        train([], TrainConfig())
    with pytest.raises(ConfigError):
        train(tiny_corpus, TrainConfig(seq_len=10_000, model=ModelConfig(hidden=8)))
    with pytest.raises(ConfigError):
        TrainConfig(temperature=0.0).validate()
