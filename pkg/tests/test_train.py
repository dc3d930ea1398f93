import numpy as np
import pytest

from hginet.config import ModelConfig
from hginet.data import SynthSpec, make_pair
from hginet.errors import NumericError
from hginet.model import build
from hginet.nn import Parameter
from hginet.train import (
    Adam,
    TrainSettings,
    background_baseline,
    lr_at,
    train,
    validation_mae,
)


def tiny_model(seed=3):
    cfg = ModelConfig(
        input_size=32,
        stage_channels=(4, 8, 12, 16),
        stage_blocks=(1, 1, 1, 1),
        latent_channels=8,
        graph_vertices=4,
        hgit_layers=1,
        hgit_heads=2,
        seed=seed,
    ).validate()
    return build(cfg)


def tiny_pairs(n, seed=0):
    spec = SynthSpec(size=32, seed=seed)
    return [make_pair(spec, i) for i in range(n)]


def test_lr_schedule_quarters():
    s = TrainSettings(steps=300, lr=1e-4)
    assert lr_at(0, s) == 1e-4
    assert lr_at(74, s) == 1e-4
    assert lr_at(75, s) == pytest.approx(1e-5)
    assert lr_at(150, s) == pytest.approx(1e-6)
    assert lr_at(225, s) == pytest.approx(1e-7)
    assert lr_at(299, s) == pytest.approx(1e-7)


def test_adam_single_step_closed_form():
    class Holder:
        def named_parameters(self):
            yield "w", self.w

    holder = Holder()
    holder.w = Parameter(np.array([0.0, 1.0]))
    holder.w.grad = np.array([0.5, -2.0])
    opt = Adam(holder, TrainSettings(lr=0.01))
    opt.step()
    # bias-corrected first step is lr * g / (|g| + eps)
    np.testing.assert_allclose(holder.w.data, [0.0 - 0.01 * (0.5 / (0.5 + 1e-8)), 1.0 + 0.01 * (2.0 / (2.0 + 1e-8))], rtol=1e-9)


def test_adam_minimizes_quadratic():
    class Holder:
        def named_parameters(self):
            yield "w", self.w

    holder = Holder()
    holder.w = Parameter(np.array([4.0]))
    opt = Adam(holder, TrainSettings(lr=0.1))
    for _ in range(200):
        holder.w.grad = 2.0 * (holder.w.data - 3.0)
        opt.step()
    assert abs(holder.w.data[0] - 3.0) < 1e-3


def test_background_baseline_is_mean_fg_fraction():
    pairs = tiny_pairs(4)
    expect = np.mean([p.mask.mean() for p in pairs])
    assert background_baseline(pairs) == pytest.approx(expect, rel=1e-12)


def test_validation_mae_restores_training_mode():
    model = tiny_model()
    pairs = tiny_pairs(2)
    model.train()
    value = validation_mae(model, pairs)
    assert model.training
    assert 0.0 <= value <= 1.0


def test_train_runs_and_logs(tmp_path):
    model = tiny_model()
    result = train(
        model,
        tiny_pairs(8),
        tiny_pairs(2, seed=99),
        TrainSettings(steps=6, batch_size=2, lr=1e-3),
        out_dir=tmp_path,
    )
    assert len(result.step_losses) == 6
    assert all(np.isfinite(result.step_losses))
    assert result.epoch_rows  # at least one validation pass
    assert result.checkpoint_path is not None
    assert (tmp_path / "best.ckpt").exists()
    steps_csv = (tmp_path / "steps.csv").read_text().splitlines()
    assert steps_csv[0] == "step,lr,loss"
    assert len(steps_csv) == 7
    epochs_csv = (tmp_path / "epochs.csv").read_text().splitlines()
    assert epochs_csv[0] == "epoch,step,train_loss,val_mae"
    assert len(epochs_csv) == 1 + len(result.epoch_rows)


def test_same_seed_identical_trajectory():
    losses = []
    for _ in range(2):
        model = tiny_model(seed=5)
        result = train(
            model,
            tiny_pairs(4),
            tiny_pairs(2, seed=99),
            TrainSettings(steps=4, batch_size=2, lr=1e-3),
        )
        losses.append(result.step_losses)
    assert losses[0] == losses[1]


def test_non_finite_loss_names_step():
    model = tiny_model()
    weight = model.backbone.embed.weight
    weight.data[0, 0, 0, 0] = np.nan
    with pytest.raises(NumericError, match="step 0"):
        train(model, tiny_pairs(4), tiny_pairs(2, seed=99), TrainSettings(steps=2, batch_size=2))


def test_empty_sets_rejected():
    model = tiny_model()
    with pytest.raises(NumericError, match="nonempty"):
        train(model, [], tiny_pairs(2), TrainSettings(steps=1))
