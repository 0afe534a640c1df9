import numpy as np
import pytest

from backend.motion_clip import SCENARIOS, MotionClip
from backend.networks.baselines import copy_retarget
from evaluation.reports import (ClipResult, build_report, evaluate_clip, evaluate_dataset, evaluate_predictions,
                                export_end_effector_csv, format_report, load_report, read_trajectory_csv,
                                save_report, variance_binned_report)
from ingestion.joint_aliases import END_EFFECTORS


def _result(truth, scenario, character, mse, variance):
    return ClipResult(truth=truth, scenario=scenario, character=character, mse=mse, variance=variance, bone_error=0.0)


@pytest.fixture(scope="module")
def copy_report(small_dataset):
    return evaluate_dataset(small_dataset, copy_retarget, method="copy")


def test_copy_is_exact_on_synthetic_pairs(copy_report, small_dataset):
    assert copy_report.method == "copy"
    assert len(copy_report.clips) == len(small_dataset.pairs)
    assert copy_report.mse == pytest.approx(0.0, abs=1e-12)
    assert all(result.bone_error < 1e-6 for result in copy_report.clips)
    assert set(copy_report.scenarios) == set(SCENARIOS)
    assert sum(cell.count for cell in copy_report.scenarios.values()) == len(small_dataset.pairs)


def test_scenario_filter(small_dataset):
    report = evaluate_dataset(small_dataset, copy_retarget, scenarios=["new_motion_new_character"])
    assert report.scenarios["new_motion_new_character"].count == len(report.clips) > 0
    assert report.scenarios["known_motion_known_character"].count == 0


def test_evaluate_clip_fields(small_dataset):
    pair = small_dataset.pairs[0]
    truth = small_dataset.clips[pair.truth]
    result = evaluate_clip(truth, truth, pair.scenario, source=pair.source)
    assert result.mse == 0.0
    assert result.character == truth.skeleton_id
    assert result.variance > 0.0


def test_build_report_groups():
    results = [
        _result("a", "known_motion_known_character", "x", 1.0, 1.0),
        _result("b", "known_motion_known_character", "y", 3.0, 6.0),
        _result("c", "new_motion_new_character", "x", 5.0, 30.0),
    ]
    report = build_report(results, method="test")
    assert report.mse == pytest.approx(3.0)
    assert report.scenarios["known_motion_known_character"].mse == pytest.approx(2.0)
    assert report.scenarios["known_motion_new_character"].count == 0
    assert report.characters["x"].mse == pytest.approx(3.0)
    assert report.characters["y"].count == 1
    counts = [b.count for b in report.bins]
    assert counts == [1, 0, 1, 0, 1]
    assert report.bins[-1].high is None
    assert report.bins[1].mse is None


def test_empty_report():
    report = build_report([])
    assert report.mse is None
    assert all(cell.count == 0 for cell in report.scenarios.values())
    assert "no clips" in format_report(report)
    assert [b.count for b in variance_binned_report([])] == [0] * 5


def test_format_report(copy_report):
    text = format_report(copy_report)
    assert "method: copy" in text
    assert "mean MSE:" in text
    assert "by ground-truth movement variance:" in text
    assert "by ground-truth" not in format_report(copy_report, show_bins=False)


def test_save_and_load(copy_report, tmp_path):
    path = save_report(copy_report, tmp_path / "reports" / "copy.json")
    loaded = load_report(path)
    assert loaded.method == copy_report.method
    assert len(loaded.clips) == len(copy_report.clips)
    assert loaded.bins == copy_report.bins


def test_evaluate_predictions(small_dataset):
    truths = {pair.truth: small_dataset.clips[pair.truth] for pair in small_dataset.pairs}
    report = evaluate_predictions(truths, truths, method="oracle")
    assert report.mse == 0.0
    assert report.scenarios["unspecified"].count == len(truths)
    with pytest.raises(ValueError):
        evaluate_predictions({}, truths)


def test_trajectory_csv(small_dataset, tmp_path):
    clip = small_dataset.train_clips()[0]
    path = export_end_effector_csv(clip, tmp_path / "traj.csv")
    joints, values = read_trajectory_csv(path)
    assert joints == list(END_EFFECTORS)
    expected = clip.local[:, [clip.skeleton.index(j) for j in END_EFFECTORS], 1]
    np.testing.assert_array_equal(values, expected)


def test_still_pose_gives_constant_columns(template, tmp_path):
    local = np.broadcast_to(template.tpose, (5, template.n_joints, 3))
    clip = MotionClip(template, 30.0, local, np.zeros((5, 4)), name="still")
    _, values = read_trajectory_csv(export_end_effector_csv(clip, tmp_path / "still.csv", ["LeftHand", "Head"]))
    assert values.shape == (5, 2)
    np.testing.assert_array_equal(values, np.broadcast_to(values[0], (5, 2)))


def test_bad_trajectory_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,LeftHand\n0,1.0\n")
    with pytest.raises(ValueError):
        read_trajectory_csv(path)
