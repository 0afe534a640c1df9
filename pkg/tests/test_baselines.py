import numpy as np
import pytest

from backend.networks.baselines import (ConditionalMlpBaseline, ConditionalRnnBaseline, MissingRotationsError,
                                        conditional_mlp_baseline, conditional_rnn_baseline, copy_retarget)
from evaluation.metrics import mse
from evaluation.synthetic import jitter_clip


def test_copy_is_exact_on_synthetic_pairs(small_dataset):
    assert small_dataset.pairs
    for pair in small_dataset.pairs:
        source, truth = small_dataset.clips[pair.source], small_dataset.clips[pair.truth]
        out = copy_retarget(source, truth.skeleton)
        np.testing.assert_allclose(out.local, truth.local, atol=1e-6)
        np.testing.assert_allclose(out.global_motion, truth.global_motion, atol=1e-6)
        np.testing.assert_allclose(out.world_positions(), truth.world_positions(), atol=1e-6)
        assert mse(out, truth) < 1e-12


def test_copy_onto_same_skeleton_is_identity(small_dataset):
    clip = small_dataset.train_clips()[0]
    out = copy_retarget(clip, clip.skeleton, name="same")
    assert out.name == "same"
    np.testing.assert_allclose(out.local, clip.local, atol=1e-9)
    np.testing.assert_array_equal(out.global_motion, clip.global_motion)
    np.testing.assert_array_equal(out.origin, clip.origin)


def test_copy_without_velocity_scaling(small_dataset):
    pair = small_dataset.pairs[0]
    source = small_dataset.clips[pair.source]
    target = small_dataset.clips[pair.truth].skeleton
    out = copy_retarget(source, target, scale_velocity=False)
    np.testing.assert_array_equal(out.global_motion, source.global_motion)
    assert out.name == f"{source.name}->{target.name}"


def test_copy_needs_rotations(small_dataset, rng):
    clip = jitter_clip(small_dataset.train_clips()[0], 0.5, rng)
    assert clip.rotations is None
    with pytest.raises(MissingRotationsError):
        copy_retarget(clip, clip.skeleton)


@pytest.mark.parametrize("cls,run", [(ConditionalRnnBaseline, conditional_rnn_baseline),
                                     (ConditionalMlpBaseline, conditional_mlp_baseline)])
def test_network_baselines_produce_target_clips(cls, run, small_dataset, tiny_settings):
    clip = small_dataset.train_clips()[0].window(0, 10)
    target = small_dataset.skeletons[small_dataset.characters["train"][-1]]
    model = cls(target.n_joints, tiny_settings.model_copy(update={"kind": cls.kind}), seed=2)
    out = run(model, clip, target)
    assert out.skeleton is target
    assert out.local.shape == clip.local.shape
    assert out.rotations is None
    assert np.all(np.isfinite(out.world_positions()))


def test_mlp_baseline_is_per_frame(small_dataset, tiny_settings):
    clip = small_dataset.train_clips()[0].window(0, 10)
    model = ConditionalMlpBaseline(clip.skeleton.n_joints, tiny_settings.model_copy(update={"kind": "mlp"}))
    forward = conditional_mlp_baseline(model, clip, clip.skeleton)
    reversed_clip = clip.replace(local=clip.local[::-1], global_motion=clip.global_motion[::-1])
    backward = conditional_mlp_baseline(model, reversed_clip, clip.skeleton)
    np.testing.assert_allclose(backward.local[::-1], forward.local, atol=1e-10)
