import json

import numpy as np
import pytest

from backend.checkpoint import CheckpointError, load_checkpoint, read_manifest, save_checkpoint
from backend.networks import build_model
from backend.networks.discriminator import Discriminator
from backend.networks.features import clip_features
from backend.networks.retarget_model import ConditionBatch
from backend.optim import AdamState


@pytest.mark.parametrize("kind", ["fk", "rnn", "mlp"])
def test_round_trip_reproduces_outputs(kind, template, tiny_settings, small_dataset, tmp_path):
    model = build_model(template.n_joints, tiny_settings.model_copy(update={"kind": kind}), seed=11)
    save_checkpoint(tmp_path, model, template.names, step=7, mode="cycle", seed=11)
    checkpoint = load_checkpoint(tmp_path)

    assert checkpoint.step == 7
    assert checkpoint.model.kind == kind
    assert checkpoint.manifest.joint_names == list(template.names)
    assert checkpoint.discriminator is None

    clip = small_dataset.train_clips()[0].window(0, 8)
    features = clip_features(clip, np.float64)
    condition = ConditionBatch([template], np.float64)
    np.testing.assert_array_equal(checkpoint.model.synthesize(features, condition).features.data,
                                  model.synthesize(features, condition).features.data)


def test_discriminator_and_optimizer_state(template, tiny_settings, tmp_path):
    model = build_model(template.n_joints, tiny_settings)
    discriminator = Discriminator(template.n_joints, seed=4, dtype=np.float64)
    gen_state = AdamState(step=5, m={"decoder.layer0.bias": np.ones(24)}, v={"decoder.layer0.bias": np.ones(24)})
    rng = np.random.default_rng(21)
    rng.random(3)
    save_checkpoint(tmp_path, model, template.names, discriminator=discriminator,
                    optimizer_states={"gen": gen_state, "disc": AdamState()}, step=5,
                    rng_state=rng.bit_generator.state)

    checkpoint = load_checkpoint(tmp_path)
    for name, value in discriminator.state_dict().items():
        np.testing.assert_array_equal(checkpoint.discriminator.state_dict()[name], value)
    assert checkpoint.optimizer_states["gen"].step == 5
    np.testing.assert_array_equal(checkpoint.optimizer_states["gen"].m["decoder.layer0.bias"], np.ones(24))
    assert checkpoint.optimizer_states["disc"].step == 0

    restored = np.random.default_rng(0)
    restored.bit_generator.state = checkpoint.manifest.rng_state
    assert restored.random() == rng.random()


def test_manifest_records_shapes(template, tiny_settings, tmp_path):
    model = build_model(template.n_joints, tiny_settings)
    save_checkpoint(tmp_path, model, template.names)
    manifest = read_manifest(tmp_path)
    assert manifest.parameter_shapes["quat_head.weight"] == [8, 4 * template.n_joints]
    assert manifest.hidden_size == 8
    assert manifest.dtype == "float64"


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nothing")


def test_invalid_manifest(template, tiny_settings, tmp_path):
    save_checkpoint(tmp_path, build_model(template.n_joints, tiny_settings), template.names)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    manifest["model_kind"] = "transformer"
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(CheckpointError):
        read_manifest(tmp_path)
