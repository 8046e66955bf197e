"""
Tests for Adam, learning-rate decay and the training loop
"""

import os
import sys

import numpy as np
import pytest
from pydantic import ValidationError

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core import trainer as trainer_module
from core.errors import ConfigError, DatasetError, DivergenceError, NumericalError
from core.lifter_model import LifterConfig, build, load_checkpoint
from core.metrics import JointWeights, LossKind, mpjpe
from core.nncore import Param
from core.pose_data import compute_norm_stats, stack_2d, stack_3d
from core.trainer import (
    TRAIN_LOG_COLUMNS,
    AdamState,
    TrainConfig,
    Trainer,
    TrainLog,
    adam_step,
    clip_grad_norm,
    lr_at,
    predict_mm,
    train,
)


def tiny_model(variant="original", seed=0, dropout_rate=0.0):
    return build(LifterConfig.for_variant(variant, linear_size=16, dropout_rate=dropout_rate), seed=seed)


@pytest.fixture
def small_split(synthetic_data):
    train_data = [p for p in synthetic_data if p.subject in ("S1", "S2", "S3", "S4", "S5")][:40]
    test_data = [p for p in synthetic_data if p.subject in ("S6", "S7")][:20]
    return train_data, test_data, compute_norm_stats(train_data)


def test_adam_zero_gradient_is_fixed_point():
    """Zero gradients leave parameters unchanged"""
    p = Param("w", np.array([[1.5, -2.0]]))
    adam_step([p], AdamState(), lr=0.1)
    assert np.array_equal(p.value, [[1.5, -2.0]])


def test_adam_first_step():
    """Unit gradient at lr 0.1 moves a scalar by about 0.1"""
    p = Param("w", np.array([[1.0]]))
    p.grad[...] = 1.0
    state = AdamState()
    adam_step([p], state, lr=0.1)
    assert p.value[0, 0] == pytest.approx(0.9, abs=1e-7)
    assert state.t == 1


def test_adam_rejects_non_finite_gradient():
    """The error names the offending parameter"""
    p = Param("block0.linear.W", np.zeros((1, 2)))
    p.grad[0, 1] = np.inf
    with pytest.raises(NumericalError, match="block0.linear.W"):
        adam_step([p], AdamState(), lr=0.1)


def test_lr_staircase():
    """Decay applies once per full interval"""
    cfg = TrainConfig(learning_rate=1e-3, decay_interval=100)
    assert lr_at(cfg, 0) == 1e-3
    assert lr_at(cfg, 99) == 1e-3
    assert lr_at(cfg, 100) == pytest.approx(1e-3 * 0.96)
    assert lr_at(cfg, 300) == pytest.approx(1e-3 * 0.96 ** 3)


def test_train_config_validation():
    """epochs 0 fails validation; create() reports it as a configuration error"""
    with pytest.raises(ValidationError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError, match="epochs"):
        TrainConfig.create(epochs=0)


def test_clip_grad_norm():
    """Gradients above the threshold are scaled to it"""
    a, b = Param("a", np.zeros((1, 1))), Param("b", np.zeros((1, 1)))
    a.grad[...] = 3.0
    b.grad[...] = 4.0
    assert clip_grad_norm([a, b], 1.0) == pytest.approx(5.0)
    assert a.grad[0, 0] == pytest.approx(0.6)
    assert b.grad[0, 0] == pytest.approx(0.8)
    assert clip_grad_norm([a, b], 10.0) == pytest.approx(1.0)


def test_batch_larger_than_data(small_split):
    """batch_size above n is a configuration error"""
    train_data, test_data, stats = small_split
    with pytest.raises(ConfigError, match="batch_size"):
        train(tiny_model(), train_data, test_data, stats, TrainConfig(epochs=1, batch_size=1000))


def test_empty_training_data(small_split):
    """Training needs samples"""
    _, test_data, stats = small_split
    with pytest.raises(DatasetError):
        train(tiny_model(), [], test_data, stats, TrainConfig(epochs=1))


def test_training_reduces_loss_and_logs(small_split, tmp_path):
    """A few epochs lower the loss and fill every log column"""
    train_data, test_data, stats = small_split
    model, log = train(tiny_model(), train_data, test_data, stats, TrainConfig(epochs=15, batch_size=8))
    assert len(log) == 15
    assert log.records[-1].train_loss < log.records[0].train_loss
    assert np.isfinite(log.records[-1].eval_mpjpe_mm)
    assert np.isfinite(log.records[-1].eval_wmpjpe_mm)

    frame = TrainLog.load_csv(log.save_csv(tmp_path / "train_log.csv")).to_frame()
    assert list(frame.columns) == TRAIN_LOG_COLUMNS
    assert frame["train_loss"].tolist() == [r.train_loss for r in log.records]


def test_training_without_test_split(small_split):
    """An empty test split logs NaN evaluation values"""
    train_data, _, stats = small_split
    _, log = train(tiny_model(), train_data, [], stats, TrainConfig(epochs=2, batch_size=8))
    assert np.isnan(log.records[-1].eval_mpjpe_mm)


def test_identical_runs_give_identical_checkpoints(small_split, tmp_path):
    """Same seeds and config reproduce the checkpoint byte for byte"""
    train_data, test_data, stats = small_split
    cfg = TrainConfig(epochs=3, batch_size=8, seed=4)
    paths = []
    for run in ("a", "b"):
        path = tmp_path / run / "checkpoint.json"
        train(tiny_model("v2", seed=9, dropout_rate=0.5), train_data, test_data, stats, cfg, checkpoint_path=path)
        paths.append(path)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_uniform_wmse_matches_mse_training(small_split):
    """Uniform-weight WMSE follows the exact same trajectory as MSE"""
    train_data, test_data, stats = small_split
    models = []
    for loss, weights in ((LossKind.MSE, None), (LossKind.WMSE, JointWeights.uniform())):
        cfg = TrainConfig(epochs=20, batch_size=8, loss=loss, seed=1)
        model, _ = train(tiny_model("v2", seed=3, dropout_rate=0.2), train_data, test_data, stats, cfg, weights=weights)
        models.append(model)
    for a, b in zip(models[0].parameters(), models[1].parameters()):
        assert np.array_equal(a.value, b.value)


def test_wmse_without_weights_uses_default(small_split):
    """The weighted loss falls back to the shipped weights"""
    trainer = Trainer(TrainConfig(loss=LossKind.WMSE))
    assert trainer.weights is not None
    assert not trainer.weights.is_uniform


def test_divergence_keeps_last_good_checkpoint(small_split, tmp_path, monkeypatch):
    """A NaN loss in epoch 2 aborts and leaves the epoch 1 checkpoint"""
    train_data, test_data, stats = small_split
    path = tmp_path / "checkpoint.json"
    trainer = Trainer(TrainConfig(epochs=5, batch_size=len(train_data), shuffle=False), checkpoint_path=path)
    real = trainer.loss_fn
    calls = []

    def failing_loss(pred, target):
        calls.append(1)
        value, grad = real(pred, target)
        return (float("nan"), grad) if len(calls) == 2 else (value, grad)

    monkeypatch.setattr(trainer, "loss_fn", failing_loss)
    with pytest.raises(DivergenceError) as info:
        trainer.train(tiny_model(), train_data, test_data, stats)
    assert info.value.epoch == 2
    assert len(trainer.log) == 1
    assert load_checkpoint(path).meta["epoch"] == 1


def test_predict_mm_chunks(small_split, monkeypatch):
    """Chunked inference matches a single pass"""
    train_data, _, stats = small_split
    model = tiny_model()
    model.set_mode("eval")
    whole = predict_mm(model, stack_2d(train_data), stats)
    monkeypatch.setattr(trainer_module, "EVAL_CHUNK", 7)
    assert np.allclose(predict_mm(model, stack_2d(train_data), stats), whole, atol=1e-9)


@pytest.mark.slow
def test_overfit_small_set(synthetic_data):
    """64 pairs, full batch, no dropout: memorized below 10 mm with a steadily falling loss"""
    data = synthetic_data[:64]
    stats = compute_norm_stats(data)
    model = build(LifterConfig.for_variant("original", dropout_rate=0.0), seed=0)
    cfg = TrainConfig(epochs=500, batch_size=64, shuffle=False, eval_every=500)
    model, log = train(model, data, [], stats, cfg)

    assert mpjpe(predict_mm(model, stack_2d(data), stats), stack_3d(data)) < 10.0
    losses = [r.train_loss for r in log.records]
    windows = [losses[e + 50] <= losses[e] for e in range(len(losses) - 50)]
    assert sum(windows) >= 0.95 * len(windows)
