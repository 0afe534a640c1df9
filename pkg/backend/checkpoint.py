"""
Checkpoint directories:

    manifest.json       CheckpointManifest
    params.npz          model parameters, name -> array
    discriminator.npz   discriminator parameters (adversarial runs)
    optimizer.npz       Adam moments, prefixed "gen|" / "disc|"
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from pydantic import ValidationError

from backend.config import ModelSettings
from backend.models.checkpoint_record import CHECKPOINT_FORMAT_VERSION, CheckpointManifest
from backend.networks import build_model
from backend.networks.discriminator import Discriminator
from backend.networks.retarget_model import SequenceModel
from backend.optim import AdamState

logger = logging.getLogger(__name__)


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: SequenceModel
    manifest: CheckpointManifest
    discriminator: Optional[Discriminator] = None
    optimizer_states: dict = field(default_factory=dict)

    @property
    def step(self) -> int:
        return self.manifest.step


def save_checkpoint(path, model: SequenceModel, joint_names: Sequence[str], discriminator: Optional[Discriminator] = None,
                    optimizer_states: Optional[dict] = None, step: int = 0, mode: Optional[str] = None,
                    seed: Optional[int] = None, rng_state: Optional[dict] = None) -> Path:
    """
    Write a checkpoint directory

    Args:
        path: target directory, created if missing
        model: network to store
        joint_names: joint order the model was trained on
        discriminator: optional discriminator
        optimizer_states: name ("gen", "disc") -> AdamState
        step: completed training steps
        rng_state: bit-generator state for exact resume

    Returns:
        The checkpoint directory
    """
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        params = model.state_dict()
        s = model.settings
        manifest = CheckpointManifest(
            version=CHECKPOINT_FORMAT_VERSION,
            model_kind=model.kind,
            n_joints=model.n_joints,
            joint_names=list(joint_names),
            composition=s.composition,
            hidden_size=s.hidden_size,
            num_layers=s.num_layers,
            mlp_width=s.mlp_width,
            gru_variant=s.gru_variant,
            dtype=s.dtype,
            step=step,
            mode=mode,
            seed=seed,
            has_discriminator=discriminator is not None,
            has_optimizer=bool(optimizer_states),
            parameter_shapes={name: list(value.shape) for name, value in params.items()},
            rng_state=rng_state,
        )
        np.savez(path / "params.npz", **params)
        if discriminator is not None:
            np.savez(path / "discriminator.npz", **discriminator.state_dict())
        if optimizer_states:
            arrays = {}
            for prefix, state in optimizer_states.items():
                arrays.update({f"{prefix}|{key}": value for key, value in state.state_dict().items()})
            np.savez(path / "optimizer.npz", **arrays)
        (path / "manifest.json").write_text(manifest.model_dump_json(indent=2))
        logger.info(f"saved checkpoint at step {step} to {path}")
        return path
    except Exception as e:
        logger.error(f"Error saving checkpoint to {path}: {e}")
        raise


def read_manifest(path) -> CheckpointManifest:
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise CheckpointError(f"{path} is not a checkpoint directory (no manifest.json)")
    try:
        return CheckpointManifest.model_validate(json.loads(manifest_path.read_text()))
    except (ValidationError, json.JSONDecodeError) as e:
        raise CheckpointError(f"invalid checkpoint manifest {manifest_path}: {e}") from e


def load_checkpoint(path) -> Checkpoint:
    """Rebuild the model (and discriminator, optimizer moments) stored at `path`."""
    path = Path(path)
    manifest = read_manifest(path)
    settings = ModelSettings(
        kind=manifest.model_kind,
        hidden_size=manifest.hidden_size,
        num_layers=manifest.num_layers,
        mlp_width=manifest.mlp_width,
        composition=manifest.composition,
        gru_variant=manifest.gru_variant,
        dtype=manifest.dtype,
    )
    model = build_model(manifest.n_joints, settings)
    with np.load(path / "params.npz") as arrays:
        model.load_state_dict({name: arrays[name] for name in arrays.files})

    discriminator = None
    if manifest.has_discriminator:
        discriminator = Discriminator(manifest.n_joints, dtype=manifest.dtype)
        with np.load(path / "discriminator.npz") as arrays:
            discriminator.load_state_dict({name: arrays[name] for name in arrays.files})

    optimizer_states = {}
    if manifest.has_optimizer:
        grouped: dict = {}
        with np.load(path / "optimizer.npz") as arrays:
            for key in arrays.files:
                prefix, _, name = key.partition("|")
                grouped.setdefault(prefix, {})[name] = arrays[key]
        optimizer_states = {prefix: AdamState.from_state_dict(values) for prefix, values in grouped.items()}

    logger.info(f"loaded {manifest.model_kind} checkpoint from {path} (step {manifest.step})")
    return Checkpoint(model=model, manifest=manifest, discriminator=discriminator, optimizer_states=optimizer_states)
