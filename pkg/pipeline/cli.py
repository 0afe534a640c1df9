"""
Command-line pipeline: generate data, train, retarget, evaluate, export.

    python -m pipeline.cli gen-data --characters 6 --motions 40 --seed 0 --out data
    python -m pipeline.cli train --data data --mode adv-cycle --steps 2000 --out runs/adv
    python -m pipeline.cli retarget --model runs/adv --input clip.json --target-skeleton skel.json --out out.json
    python -m pipeline.cli retarget --model runs/adv --dataset data --out preds
    python -m pipeline.cli eval --pred preds --truth data --report report.json --bins
    python -m pipeline.cli export-traj --clip out.json --out traj.csv

Exit codes: 0 success, 1 runtime error, 2 usage error. Every command takes
--config FILE (flat JSON mirroring flag names); flags override it.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from backend.checkpoint import load_checkpoint
from backend.config import DATA_DIR, HIDDEN_SIZE, LossWeights, ModelSettings, OptimizerSettings, TrainSettings, setup_logging
from backend.kinematics import ArityMismatchError, Skeleton
from backend.motion_clip import MotionClip
from backend.networks import MODEL_KINDS, build_model
from backend.networks.baselines import copy_retarget
from backend.networks.discriminator import MIN_FRAMES, Discriminator
from backend.networks.retarget_model import retarget_clip
from backend.training import train
from evaluation.reports import evaluate_predictions, export_end_effector_csv, print_report, save_report
from evaluation.synthetic import generate_dataset
from ingestion.bvh_parser import parse_bvh_file
from ingestion.clip_storage import (load_clip, load_clips_dir, load_dataset, load_joint_map, load_positions,
                                    load_skeleton, parse_clip_json, save_clip, save_dataset)
from ingestion.joint_aliases import CANONICAL_NAMES, END_EFFECTORS, apply_joint_map, canonical_name
from ingestion.preprocessing import preprocess, preprocess_positions
from pipeline.utils.cli_helper import UsageError, parse_with_config, run_command

logger = logging.getLogger(__name__)


def gen_data_task(args) -> dict:
    """Generate a synthetic dataset and write it to --out."""
    if args.characters < 2:
        raise UsageError(f"--characters must be at least 2, got {args.characters}")
    if args.motions < 1:
        raise UsageError(f"--motions must be at least 1, got {args.motions}")
    print(f"Generating {args.characters} characters x {args.motions} motions (seed {args.seed})...")
    dataset = generate_dataset(args.characters, args.motions, seed=args.seed)
    save_dataset(dataset, args.out)
    stats = {"clips": len(dataset.clips), "test_pairs": len(dataset.pairs),
             "train_characters": len(dataset.characters["train"]), "test_characters": len(dataset.characters["test"])}
    print(f"Dataset written to {args.out}: {stats['clips']} clips, {stats['test_pairs']} test pairs")
    return stats


def _settings(args) -> tuple:
    try:
        weights = LossWeights(beta=args.beta, alpha=args.alpha, lam=args.lam, omega=args.omega)
        optimizer = OptimizerSettings(lr=args.lr, clip_norm=args.clip_norm, balance_threshold=args.balance)
        model = ModelSettings(kind=args.model_kind, hidden_size=args.hidden_size, num_layers=args.layers,
                              mlp_width=args.mlp_width, composition=args.composition,
                              gru_variant=args.gru_variant, dtype=args.dtype)
        loop = TrainSettings(mode=args.mode, steps=args.steps, batch_size=args.batch_size, window=args.window,
                             seed=args.seed, checkpoint_every=args.checkpoint_every,
                             non_saturating=not args.saturating)
    except ValidationError as e:
        raise UsageError(str(e)) from None
    return weights, optimizer, model, loop


def train_task(args) -> dict:
    """Train a model on --data and write the checkpoint and metrics.csv to --out."""
    weights, optimizer, model_settings, loop = _settings(args)
    if not Path(args.data).is_dir():
        raise UsageError(f"--data {args.data} is not a directory")
    dataset = load_dataset(args.data)
    skeletons = dataset.train_skeletons()
    if loop.mode == "adv-cycle" and len(skeletons) < 2:
        raise UsageError(f"mode adv-cycle needs at least 2 training characters, the dataset has {len(skeletons)}")
    if not skeletons:
        raise UsageError(f"dataset {args.data} has no training clips")
    if loop.mode == "adv-cycle":
        window = min(loop.window, min(clip.length for clip in dataset.train_clips()))
        if window < MIN_FRAMES:
            raise UsageError(f"mode adv-cycle needs --window of at least {MIN_FRAMES} frames "
                             f"(and training clips that long), got {window}")
    joint_counts = {s.n_joints for s in skeletons}
    if len(joint_counts) != 1:
        raise ArityMismatchError(f"training skeletons have different joint counts {sorted(joint_counts)}")
    n_joints = joint_counts.pop()

    resume = None
    if args.resume:
        resume = load_checkpoint(args.resume)
        if resume.manifest.model_kind != model_settings.kind or resume.manifest.n_joints != n_joints:
            raise UsageError(f"--resume checkpoint holds a {resume.manifest.model_kind} model for "
                             f"{resume.manifest.n_joints} joints")
        model_settings = resume.model.settings
    model = build_model(n_joints, model_settings, seed=loop.seed)
    discriminator = Discriminator(n_joints, seed=loop.seed + 1, dtype=model_settings.dtype) \
        if loop.mode == "adv-cycle" else None

    print(f"Training {model_settings.kind} model, mode {loop.mode}, {loop.steps} steps, seed {loop.seed}")
    result = train(dataset, model, discriminator, weights, optimizer, loop, out_dir=args.out, resume=resume)
    print(f"✅ Checkpoint written to {result.checkpoint}, metrics in {result.metrics_path}")
    return {"steps": result.steps_run, "checkpoint": str(result.checkpoint)}


def _positions_to_canonical(record, joint_map: Optional[dict]):
    if joint_map is not None:
        return apply_joint_map(record.positions, record.joints, joint_map)
    mapping = {}
    for joint in record.joints:
        target = canonical_name(joint)
        if target is not None and target not in mapping:
            mapping[target] = joint
    missing = [name for name in CANONICAL_NAMES if name not in mapping]
    if missing:
        raise UsageError(f"input joints do not cover {missing}; pass --joint-map")
    return apply_joint_map(record.positions, record.joints, mapping)


def load_input(path, joint_map_path=None) -> MotionClip:
    """
    Read a retargetting input: a clip document, a BVH file or a position-only JSON file

    Position-only inputs are mapped onto the canonical joints (by name, or by
    --joint-map) and their skeleton is estimated from the observed bone lengths.
    """
    path = Path(path)
    if not path.exists():
        raise UsageError(f"input {path} does not exist")
    if path.suffix.lower() == ".bvh":
        motion = parse_bvh_file(path)
        return preprocess(motion.positions, motion.skeleton, fps=motion.fps, rotations=motion.rotations,
                          name=path.stem)
    text = path.read_text()
    document = json.loads(text)
    if isinstance(document, dict) and document.get("kind") == "clip":
        return parse_clip_json(text)
    record = load_positions(path)
    joint_map = load_joint_map(joint_map_path) if joint_map_path else None
    positions = _positions_to_canonical(record, joint_map)
    return preprocess_positions(positions, fps=record.fps, name=path.stem)


def _retargeter(args):
    """(clip, target skeleton) -> clip for the selected method."""
    if args.baseline == "copy":
        return lambda clip, target: copy_retarget(clip, target)
    if not args.model:
        raise UsageError("--model is required unless --baseline copy")
    checkpoint = load_checkpoint(args.model)
    kind = checkpoint.model.kind
    if args.baseline is not None and kind != args.baseline:
        raise UsageError(f"--baseline {args.baseline} but checkpoint {args.model} holds a {kind} model")
    model = checkpoint.model
    return lambda clip, target: retarget_clip(model, clip, target)


def retarget_task(args) -> int:
    """Retarget one input onto --target-skeleton, or every test pair of --dataset."""
    if bool(args.dataset) == bool(args.input):
        raise UsageError("give exactly one of --input or --dataset")
    if args.input and not args.target_skeleton:
        raise UsageError("--target-skeleton is required with --input")
    retarget = _retargeter(args)

    if args.dataset:
        dataset = load_dataset(args.dataset)
        if not dataset.pairs:
            raise UsageError(f"dataset {args.dataset} has no test pairs")
        out_dir = Path(args.out)
        print(f"Retargeting {len(dataset.pairs)} test pairs into {out_dir}...")
        for pair in dataset.pairs:
            truth = dataset.clips[pair.truth]
            prediction = retarget(dataset.clips[pair.source], truth.skeleton)
            save_clip(prediction.replace(name=pair.truth), out_dir / f"{pair.truth}.json")
        print(f"✅ Wrote {len(dataset.pairs)} retargeted clips")
        return len(dataset.pairs)

    clip = load_input(args.input, args.joint_map)
    target: Skeleton = load_skeleton(args.target_skeleton)
    result = retarget(clip, target)
    save_clip(result, args.out)
    print(f"✅ Retargeted {clip.name} ({clip.length} frames) onto {target.name}: {args.out}")
    return 1


def _truth_clips(directory) -> tuple:
    """Ground-truth clips plus scenario and source per clip name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise UsageError(f"--truth {directory} is not a directory")
    if (directory / "clips").is_dir():
        dataset = load_dataset(directory)
        if dataset.pairs:
            truths = {pair.truth: dataset.clips[pair.truth] for pair in dataset.pairs}
            scenarios = {pair.truth: pair.scenario for pair in dataset.pairs}
            sources = {pair.truth: pair.source for pair in dataset.pairs}
            return truths, scenarios, sources
        return dataset.clips, {}, {}
    return load_clips_dir(directory), {}, {}


def eval_task(args):
    """Score predicted clips against ground truth and write the JSON report."""
    if not Path(args.pred).is_dir():
        raise UsageError(f"--pred {args.pred} is not a directory")
    truths, scenarios, sources = _truth_clips(args.truth)
    predictions = load_clips_dir(args.pred)
    report = evaluate_predictions(predictions, truths, scenarios, sources, method=args.method)
    print_report(report, show_bins=args.bins)
    save_report(report, args.report)
    print(f"✅ Report written to {args.report}")
    return report


def export_traj_task(args) -> Path:
    clip = load_clip(args.clip)
    joints = args.joints or list(END_EFFECTORS)
    path = export_end_effector_csv(clip, args.out, joints)
    print(f"✅ Exported {len(joints)} end-effector trajectories to {path}")
    return path


COMMANDS = {
    "gen-data": gen_data_task,
    "train": train_task,
    "retarget": retarget_task,
    "eval": eval_task,
    "export-traj": export_traj_task,
}


def build_parser() -> tuple:
    parser = argparse.ArgumentParser(prog="retarget", description="Online motion retargetting pipeline")
    parser.add_argument("--log-level", default=None, help="overrides RETARGET_LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--config", default=None, help="flat JSON file of flag values")
        subparsers[name] = sub
        return sub

    gen = command("gen-data", "generate a synthetic dataset with ground truth")
    gen.add_argument("--characters", type=int, default=6)
    gen.add_argument("--motions", type=int, default=40)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    tr = command("train", "train a retargetting network")
    tr.add_argument("--data", default=DATA_DIR)
    tr.add_argument("--mode", choices=["auto", "cycle", "adv-cycle"], default="adv-cycle")
    tr.add_argument("--steps", type=int, default=2000)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", required=True)
    tr.add_argument("--beta", type=float, default=0.001)
    tr.add_argument("--alpha", type=float, default=100.0)
    tr.add_argument("--lambda", dest="lam", type=float, default=10.0)
    tr.add_argument("--omega", type=float, default=0.01)
    tr.add_argument("--saturating", action="store_true",
                    help="generator minimises beta * log(1 - r^B) instead of -beta * log(r^B)")
    tr.add_argument("--lr", type=float, default=1e-4)
    tr.add_argument("--clip-norm", type=float, default=25.0)
    tr.add_argument("--balance", type=float, default=0.3)
    tr.add_argument("--batch-size", type=int, default=16)
    tr.add_argument("--window", type=int, default=60)
    tr.add_argument("--checkpoint-every", type=int, default=0)
    tr.add_argument("--model-kind", "--baseline", dest="model_kind", choices=sorted(MODEL_KINDS), default="fk")
    tr.add_argument("--hidden-size", type=int, default=HIDDEN_SIZE)
    tr.add_argument("--layers", type=int, default=2)
    tr.add_argument("--mlp-width", type=int, default=512)
    tr.add_argument("--composition", choices=["hierarchical", "world"], default="hierarchical")
    tr.add_argument("--gru-variant", choices=["reset_before", "reset_after"], default="reset_before")
    tr.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    tr.add_argument("--resume", default=None, help="checkpoint directory to continue from")

    rt = command("retarget", "retarget a clip onto a skeleton")
    rt.add_argument("--model", default=None, help="checkpoint directory")
    rt.add_argument("--input", default=None, help="clip JSON, BVH or position-only JSON")
    rt.add_argument("--target-skeleton", default=None)
    rt.add_argument("--dataset", default=None, help="retarget every test pair of a dataset directory")
    rt.add_argument("--out", required=True)
    rt.add_argument("--baseline", choices=["copy", "rnn", "mlp"], default=None)
    rt.add_argument("--joint-map", default=None, help="JSON mapping canonical joint -> input joint")

    ev = command("eval", "score predictions against ground truth")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--report", required=True)
    ev.add_argument("--bins", action="store_true", help="print the movement-variance bins")
    ev.add_argument("--method", default="model")

    ex = command("export-traj", "export end-effector height trajectories as CSV")
    ex.add_argument("--clip", required=True)
    ex.add_argument("--out", required=True)
    ex.add_argument("--joints", nargs="+", default=None)
    return parser, subparsers


def main(argv=None) -> int:
    parser, subparsers = build_parser()
    try:
        args = parse_with_config(parser, subparsers, argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    except UsageError as e:
        print(f"usage error: {e}")
        return 2
    setup_logging(args.log_level)
    return run_command(args.command, COMMANDS[args.command], args)


if __name__ == "__main__":
    sys.exit(main())
