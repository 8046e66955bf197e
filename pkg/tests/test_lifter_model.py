"""
Tests for the lifter network and its checkpoint format
"""

import json
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.errors import CheckpointError, ConfigError, ShapeError
from core.lifter_model import (
    ActivationKind,
    Lifter,
    LifterConfig,
    Variant,
    build,
    load_checkpoint,
    save_checkpoint,
)
from core.nncore import LayerMode, new_rng
from core.pose_data import NormStats


def small_config(variant="v2", **overrides):
    return LifterConfig.for_variant(variant, linear_size=16, **overrides)


@pytest.mark.parametrize(
    "variant, expected",
    [("original", 4_291_632), ("v1", 5_343_280), ("v2", 5_343_281), ("v3", 5_343_281)],
)
def test_parameter_counts(variant, expected):
    """Default-size networks have the documented parameter counts"""
    assert build(LifterConfig.for_variant(variant)).parameter_count() == expected


def test_output_shapes_all_variants():
    """Batch of 64 maps to (64, 48) with finite values"""
    x = new_rng(0).standard_normal((64, 32))
    for variant in Variant:
        model = build(small_config(variant.value), seed=1)
        out = model.forward(x, LayerMode.TRAIN)
        assert out.shape == (64, 48)
        assert np.all(np.isfinite(out))


def test_eval_single_sample():
    """Eval mode accepts a batch of one"""
    model = build(small_config("original"))
    assert model.forward(np.zeros((1, 32)), LayerMode.EVAL).shape == (1, 48)


def test_train_mode_rejects_single_sample():
    """Train mode needs batch statistics"""
    model = build(small_config("original"))
    with pytest.raises(ShapeError):
        model.forward(np.zeros((1, 32)), LayerMode.TRAIN)


def test_wrong_input_width():
    """Input width other than 2J is rejected"""
    with pytest.raises(ShapeError):
        build(small_config()).forward(np.zeros((4, 30)), LayerMode.EVAL)


def test_residual_block_identity_when_inner_is_zero():
    """A block with zero weights and zero batch-norm scale passes its input through"""
    for variant in ("original", "v2"):
        model = build(small_config(variant, num_blocks=1, dropout_rate=0.0))
        block = model.net.layers[-2]
        for stage in block.inner.layers:
            linear, bn = stage.layers[0], stage.layers[1]
            linear.W.value[...] = 0.0
            linear.b.value[...] = 0.0
            bn.gamma.value[...] = 0.0
            bn.beta_shift.value[...] = 0.0
        x = new_rng(3).standard_normal((5, 16))
        assert np.array_equal(block.forward(x, LayerMode.EVAL), x)
        assert np.array_equal(block.forward(x, LayerMode.TRAIN), x)


def test_variant_presets():
    """v1 adds the extra stage, v2 switches to swish, v3 keeps the v2 network"""
    expected = {
        "original": (False, ActivationKind.RELU),
        "v1": (True, ActivationKind.RELU),
        "v2": (True, ActivationKind.SWISH),
        "v3": (True, ActivationKind.SWISH),
    }
    for variant, (extra, activation) in expected.items():
        config = LifterConfig.for_variant(variant)
        assert (config.extra_layer, config.activation) == (extra, activation)


def test_same_seed_same_weights():
    """Two builds with the same seed hold identical parameters"""
    a, b = build(small_config(), seed=7), build(small_config(), seed=7)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert pa.name == pb.name
        assert np.array_equal(pa.value, pb.value)
    c = build(small_config(), seed=8)
    assert not np.array_equal(a.parameters()[0].value, c.parameters()[0].value)


def test_v3_architecture_equals_v2():
    """The loss-only variant shares the swish architecture"""
    v2, v3 = build(small_config("v2"), seed=2), build(small_config("v3"), seed=2)
    assert [p.name for p in v2.parameters()] == [p.name for p in v3.parameters()]
    assert v3.config.activation is ActivationKind.SWISH
    x = new_rng(4).standard_normal((3, 32))
    assert np.array_equal(v2.forward(x, LayerMode.EVAL), v3.forward(x, LayerMode.EVAL))


def test_shared_and_per_site_beta():
    """Shared beta gives one scalar; per-site beta gives one per activation"""
    shared = build(small_config("v2"))
    per_site = build(small_config("v2", shared_beta=False))
    assert sum(p.name.endswith("beta") for p in shared.parameters()) == 1
    # input, extra and two stages in each of two blocks
    assert sum(p.name.endswith("beta") for p in per_site.parameters()) == 6
    assert per_site.parameter_count() == shared.parameter_count() + 5


def test_unknown_variant_and_bad_dropout():
    """Invalid variant names and dropout rates are configuration errors"""
    with pytest.raises(ConfigError):
        LifterConfig.for_variant("v9")
    with pytest.raises(ConfigError):
        LifterConfig.for_variant("v1", dropout_rate=1.0)


def test_eval_forward_is_deterministic():
    """Eval mode gives bit-identical outputs across calls"""
    model = build(small_config())
    x = new_rng(5).standard_normal((8, 32))
    assert np.array_equal(model.forward(x, LayerMode.EVAL), model.forward(x, LayerMode.EVAL))


def trained_ish(variant="v2"):
    model = build(small_config(variant), seed=11)
    x = new_rng(12).standard_normal((16, 32))
    for _ in range(3):
        model.forward(x, LayerMode.TRAIN)
    return model


def test_checkpoint_round_trip_bit_exact(tmp_path):
    """Saved and reloaded models agree bit for bit in Eval mode"""
    model = trained_ish()
    stats = NormStats(
        mean2d=np.arange(32.0), std2d=np.ones(32), mean3d=np.zeros(48), std3d=np.full(48, 2.0)
    )
    path = save_checkpoint(model, tmp_path / "ckpt.json", norm_stats=stats, meta={"epoch": 3})
    loaded = load_checkpoint(path)

    assert loaded.model.mode is LayerMode.EVAL
    assert loaded.meta == {"epoch": 3}
    assert np.array_equal(loaded.norm_stats.mean2d, stats.mean2d)
    x = new_rng(13).standard_normal((4, 32))
    assert np.array_equal(loaded.model.forward(x), model.forward(x, LayerMode.EVAL))
    # tensors are written in a fixed order, so a second save is byte-identical
    again = save_checkpoint(loaded.model, tmp_path / "again.json", norm_stats=loaded.norm_stats, meta=loaded.meta)
    assert again.read_bytes() == path.read_bytes()


def test_checkpoint_missing_file(tmp_path):
    """A missing path is a CheckpointError"""
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "nope.json")


def test_checkpoint_corrupt_json(tmp_path):
    """Unparseable JSON is a CheckpointError"""
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(CheckpointError, match="corrupt"):
        load_checkpoint(path)


def test_checkpoint_future_version(tmp_path):
    """format_version 2 is rejected"""
    path = save_checkpoint(trained_ish(), tmp_path / "ckpt.json")
    doc = json.loads(path.read_text(encoding="utf-8"))
    doc["format_version"] = 2
    path.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(CheckpointError, match="format_version 2"):
        load_checkpoint(path)


def test_checkpoint_tensor_count_mismatch(tmp_path):
    """Dropping a tensor record is detected against the config"""
    path = save_checkpoint(trained_ish(), tmp_path / "ckpt.json")
    doc = json.loads(path.read_text(encoding="utf-8"))
    doc["params"] = doc["params"][:-1]
    path.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(CheckpointError, match="parameter tensors"):
        load_checkpoint(path)


def test_checkpoint_shape_mismatch(tmp_path):
    """A config that disagrees with the stored shapes is detected"""
    path = save_checkpoint(trained_ish(), tmp_path / "ckpt.json")
    doc = json.loads(path.read_text(encoding="utf-8"))
    doc["config"]["linear_size"] = 8
    path.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_lifter_repr_names_variant():
    """repr shows variant and parameter count"""
    text = repr(Lifter(small_config("v1")))
    assert "variant=v1" in text and "params=" in text
