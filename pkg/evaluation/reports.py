"""
Evaluation reports: per-clip results, the known/new motion x character
table, per-character means and movement-variance bins. Reports print as text
tables and save as JSON; end-effector trajectories export as CSV.
"""
import csv
import logging
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from backend.kinematics import Skeleton
from backend.motion_clip import SCENARIOS, Dataset, MotionClip
from evaluation.metrics import (VARIANCE_BINS, assign_bins, bone_length_error, end_effector_heights,
                                movement_variance, mse)
from ingestion.joint_aliases import END_EFFECTORS

logger = logging.getLogger(__name__)

RetargetFn = Callable[[MotionClip, Skeleton], MotionClip]


class ClipResult(BaseModel):
    source: Optional[str] = None
    truth: str
    scenario: str
    character: str
    mse: float
    variance: float
    bone_error: float


class CellSummary(BaseModel):
    count: int
    mse: Optional[float] = None
    variance: Optional[float] = None


class VarianceBin(BaseModel):
    low: float
    high: Optional[float] = None  # None: open bin
    count: int
    mse: Optional[float] = None


class EvalReport(BaseModel):
    method: str = "model"
    mse: Optional[float] = None
    clips: list[ClipResult] = Field(default_factory=list)
    scenarios: dict[str, CellSummary] = Field(default_factory=dict)
    characters: dict[str, CellSummary] = Field(default_factory=dict)
    bins: list[VarianceBin] = Field(default_factory=list)


def _summary(results: Sequence[ClipResult]) -> CellSummary:
    if not results:
        return CellSummary(count=0)
    return CellSummary(count=len(results),
                       mse=float(np.mean([r.mse for r in results])),
                       variance=float(np.mean([r.variance for r in results])))


def evaluate_clip(prediction: MotionClip, truth: MotionClip, scenario: str = "unspecified",
                  source: Optional[str] = None) -> ClipResult:
    return ClipResult(
        source=source,
        truth=truth.name,
        scenario=scenario,
        character=truth.skeleton_id,
        mse=mse(prediction, truth),
        variance=movement_variance(truth),
        bone_error=bone_length_error(prediction.local, prediction.skeleton),
    )


def variance_binned_report(results: Sequence[ClipResult], edges: Sequence[float] = VARIANCE_BINS) -> list:
    """Mean MSE of the clips whose ground-truth movement variance falls in each bin."""
    index = assign_bins([r.variance for r in results], edges) if results else np.array([], dtype=int)
    bins = []
    for b in range(len(edges) - 1):
        members = [r for r, i in zip(results, index) if i == b]
        high = edges[b + 1] if np.isfinite(edges[b + 1]) else None
        bins.append(VarianceBin(low=edges[b], high=high, count=len(members),
                                mse=float(np.mean([r.mse for r in members])) if members else None))
    return bins


def build_report(results: Sequence[ClipResult], method: str = "model",
                 edges: Sequence[float] = VARIANCE_BINS) -> EvalReport:
    results = list(results)
    scenarios = {scenario: _summary([r for r in results if r.scenario == scenario]) for scenario in SCENARIOS}
    for r in results:
        if r.scenario not in scenarios:
            scenarios[r.scenario] = _summary([x for x in results if x.scenario == r.scenario])
    characters = {name: _summary([r for r in results if r.character == name])
                  for name in sorted({r.character for r in results})}
    return EvalReport(
        method=method,
        mse=float(np.mean([r.mse for r in results])) if results else None,
        clips=results,
        scenarios=scenarios,
        characters=characters,
        bins=variance_binned_report(results, edges),
    )


def evaluate_dataset(dataset: Dataset, retarget: RetargetFn, method: str = "model",
                     scenarios: Optional[Sequence[str]] = None) -> EvalReport:
    """
    Retarget the source of every test pair onto the truth's skeleton and score it

    Args:
        dataset: dataset with test pairs
        retarget: (source clip, target skeleton) -> predicted clip
        method: label stored in the report
        scenarios: restrict to these scenarios

    Returns:
        EvalReport over the selected pairs
    """
    results = []
    for pair in dataset.pairs:
        if scenarios is not None and pair.scenario not in scenarios:
            continue
        source, truth = dataset.clips[pair.source], dataset.clips[pair.truth]
        try:
            prediction = retarget(source, truth.skeleton)
            results.append(evaluate_clip(prediction, truth, pair.scenario, source=pair.source))
        except Exception as e:
            logger.error(f"Error evaluating {pair.source} -> {pair.truth}: {e}")
            raise
    logger.info(f"evaluated {len(results)} test pairs with {method}")
    return build_report(results, method)


def evaluate_predictions(predictions: dict, truths: dict, scenarios: Optional[dict] = None,
                         sources: Optional[dict] = None, method: str = "model") -> EvalReport:
    """Score predicted clips against ground-truth clips of the same name."""
    scenarios = scenarios or {}
    sources = sources or {}
    missing = sorted(set(truths) - set(predictions))
    if missing:
        logger.warning(f"{len(missing)} ground-truth clips have no prediction, e.g. {missing[0]!r}")
    matched = [name for name in truths if name in predictions]
    if not matched:
        raise ValueError("no prediction matches a ground-truth clip by name")
    results = [evaluate_clip(predictions[name], truths[name], scenarios.get(name, "unspecified"), sources.get(name))
               for name in matched]
    return build_report(results, method)


def _cell(summary: Optional[CellSummary]) -> tuple:
    if summary is None or not summary.count:
        return "-", ""
    return f"{summary.mse:.6f} (n={summary.count})", f"var {summary.variance:.4f}"


def format_report(report: EvalReport, show_bins: bool = True) -> str:
    """Human-readable tables: scenario grid, per-character means and variance bins."""
    lines = [f"method: {report.method}",
             f"mean MSE: {report.mse:.6f} over {len(report.clips)} clips" if report.mse is not None
             else "mean MSE: - (no clips)", ""]
    width = 28
    lines.append(f"{'':16s}{'known character':>{width}s}{'new character':>{width}s}")
    for row in ("known_motion", "new_motion"):
        known = _cell(report.scenarios.get(f"{row}_known_character"))
        new = _cell(report.scenarios.get(f"{row}_new_character"))
        lines.append(f"{row.replace('_', ' '):16s}{known[0]:>{width}s}{new[0]:>{width}s}")
        lines.append(f"{'':16s}{known[1]:>{width}s}{new[1]:>{width}s}")
    other = {k: v for k, v in report.scenarios.items() if k not in SCENARIOS and v.count}
    for scenario, summary in other.items():
        lines.append(f"{scenario:16s}{_cell(summary)[0]:>{width}s}")

    if report.characters:
        lines += ["", "per character:"]
        for name, summary in report.characters.items():
            lines.append(f"  {name:20s} {summary.mse:.6f} (n={summary.count})")
    if show_bins and report.bins:
        lines += ["", "by ground-truth movement variance:"]
        for b in report.bins:
            high = "inf" if b.high is None else f"{b.high:g}"
            value = "-" if b.mse is None else f"{b.mse:.6f}"
            lines.append(f"  [{b.low:g}, {high}){'':4s}n={b.count:<5d} mse={value}")
    return "\n".join(lines)


def print_report(report: EvalReport, show_bins: bool = True) -> None:
    print(format_report(report, show_bins))


def save_report(report: EvalReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2))
    return path


def load_report(path) -> EvalReport:
    return EvalReport.model_validate_json(Path(path).read_text())


def export_end_effector_csv(clip: MotionClip, path, joints: Sequence[str] = END_EFFECTORS) -> Path:
    """
    Write per-frame end-effector heights of the local motion

    Columns: frame, then one column per joint in the order given.
    """
    heights = end_effector_heights(clip, joints)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["frame", *joints])
        for frame, row in enumerate(heights.tolist()):
            writer.writerow([frame, *[repr(value) for value in row]])
    logger.info(f"wrote {heights.shape[0]} frames of {len(joints)} end-effector heights to {path}")
    return path


def read_trajectory_csv(path) -> tuple:
    """(joint names, (T, J) heights) from a file written by export_end_effector_csv."""
    with Path(path).open(newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows or rows[0][:1] != ["frame"]:
        raise ValueError(f"{path} is not an end-effector trajectory file")
    joints = rows[0][1:]
    values = np.array([[float(v) for v in row[1:]] for row in rows[1:]], dtype=np.float64).reshape(-1, len(joints))
    return joints, values
