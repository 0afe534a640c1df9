"""
Training loop for the retargetting networks.

Modes:
    auto       target skeleton = input skeleton, one pass, reconstruction + twist
    cycle      A -> B -> A with the adversarial branch returning 0
    adv-cycle  A -> B -> A plus the sequence discriminator

Generator gradients are clipped by global norm before Adam. The discriminator
is not updated when the mean realism of generated clips falls below the
balance threshold.
"""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from backend import autodiff as ad
from backend.autodiff import Tape, Tensor
from backend.checkpoint import Checkpoint, save_checkpoint
from backend.config import LossWeights, OptimizerSettings, TrainSettings
from backend.losses import (LossTerms, adversarial_or_reconstruction_loss, cycle_loss, smoothing_loss,
                            total_objective, twist_loss)
from backend.motion_clip import Dataset, sample_window
from backend.networks.discriminator import MIN_FRAMES, Discriminator, discriminate
from backend.networks.features import clip_features
from backend.networks.retarget_model import ConditionBatch, SequenceModel
from backend.optim import Adam

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["step", "C", "R_gen", "R_disc", "J", "S", "rA_mean", "rB_mean"]


class TrainingAborted(RuntimeError):
    def __init__(self, term: str, step: int):
        super().__init__(f"non-finite {term} loss at step {step}; training aborted")
        self.term = term
        self.step = step


@dataclass
class Batch:
    features: np.ndarray        # (B, T, 3N+4) input motion x^A
    sources: list               # skeletons A
    targets: list               # skeletons B
    same: np.ndarray            # (B,) bool, B is A


@dataclass
class TrainResult:
    history: list = field(default_factory=list)
    checkpoint: Optional[Path] = None
    metrics_path: Optional[Path] = None
    steps_run: int = 0
    disc_updates: int = 0
    disc_skips: int = 0


def split_features(features: np.ndarray, n_joints: int) -> tuple:
    """(B, T, 3N+4) -> (local (B, T, N, 3), velocity (B, T, 4))."""
    batch, frames = features.shape[:2]
    return features[..., :3 * n_joints].reshape(batch, frames, n_joints, 3), features[..., 3 * n_joints:]


class Trainer:
    """
    Owns the models, their optimizers and the random stream of one run

    Args:
        dataset: training data; only clips tagged "train" are sampled
        model: generator network
        discriminator: required for mode "adv-cycle"
        weights: objective weights
        optimizer: Adam / clipping / balancing settings
        settings: loop settings
        use_twist: include the twist term; defaults to True for quaternion models
    """

    def __init__(self, dataset: Dataset, model: SequenceModel, discriminator: Optional[Discriminator] = None,
                 weights: Optional[LossWeights] = None, optimizer: Optional[OptimizerSettings] = None,
                 settings: Optional[TrainSettings] = None, use_twist: Optional[bool] = None):
        self.dataset = dataset
        self.model = model
        self.discriminator = discriminator
        self.weights = weights or LossWeights()
        self.optimizer_settings = optimizer or OptimizerSettings()
        self.settings = settings or TrainSettings()
        self.use_twist = (model.kind == "fk") if use_twist is None else use_twist
        self.rng = np.random.default_rng(self.settings.seed)
        self.step = 0

        self.clips = dataset.train_clips()
        if not self.clips:
            raise ValueError("training needs at least one training clip")
        self.skeletons = dataset.train_skeletons()
        if self.adversarial:
            if len(self.skeletons) < 2:
                raise ValueError(f"adversarial training needs at least 2 training skeletons, got {len(self.skeletons)}")
            if discriminator is None:
                raise ValueError("mode adv-cycle needs a discriminator")
        self.window = min(self.settings.window, min(clip.length for clip in self.clips))
        if self.adversarial and self.window < MIN_FRAMES:
            raise ValueError(f"mode adv-cycle needs windows of at least {MIN_FRAMES} frames for the discriminator, "
                             f"got {self.window}")

        self.gen_opt = Adam(model.parameters(), self.optimizer_settings, clip=True)
        self.disc_opt = Adam(discriminator.parameters(), self.optimizer_settings, clip=False) if discriminator else None

    @property
    def adversarial(self) -> bool:
        return self.settings.mode == "adv-cycle"

    def restore(self, checkpoint: Checkpoint) -> None:
        """Continue from a checkpoint written by this trainer."""
        self.model.load_state_dict(checkpoint.model.state_dict())
        if self.discriminator is not None and checkpoint.discriminator is not None:
            self.discriminator.load_state_dict(checkpoint.discriminator.state_dict())
        if "gen" in checkpoint.optimizer_states:
            self.gen_opt.state = checkpoint.optimizer_states["gen"]
        if self.disc_opt is not None and "disc" in checkpoint.optimizer_states:
            self.disc_opt.state = checkpoint.optimizer_states["disc"]
        if checkpoint.manifest.rng_state is not None:
            self.rng.bit_generator.state = checkpoint.manifest.rng_state
        self.step = checkpoint.step
        logger.info(f"resumed training at step {self.step}")

    def sample_batch(self) -> Batch:
        clips = [self.clips[i] for i in self.rng.integers(0, len(self.clips), size=self.settings.batch_size)]
        windows = [sample_window(clip, self.window, self.rng) for clip in clips]
        sources = [clip.skeleton for clip in windows]
        if self.settings.mode == "auto":
            targets = list(sources)
        else:
            targets = [self.skeletons[i] for i in self.rng.integers(0, len(self.skeletons), size=len(sources))]
        features = np.stack([clip_features(clip, self.model.dtype) for clip in windows])
        same = np.array([a.name == b.name for a, b in zip(sources, targets)])
        return Batch(features, sources, targets, same)

    def sample_real(self, targets: list) -> np.ndarray:
        """One real training window per target skeleton, drawn independently of the input clips."""
        real = []
        for skeleton in targets:
            pool = self.dataset.clips_of(skeleton.name, "train")
            clip = pool[int(self.rng.integers(0, len(pool)))]
            real.append(clip_features(sample_window(clip, self.window, self.rng), self.model.dtype))
        return np.stack(real)

    def _check_finite(self, values: dict) -> None:
        for term, value in values.items():
            if not np.isfinite(value):
                logger.error(f"non-finite {term} loss at step {self.step}")
                raise TrainingAborted(term, self.step)

    def generator_step(self, batch: Batch) -> tuple:
        """
        Forward A -> B (-> A), one clipped Adam update of the generator

        Returns:
            (metrics dict, r^B Tensor or None, synthesis output for B)
        """
        dtype = self.model.dtype
        cond_a = ConditionBatch(batch.sources, dtype)
        cond_b = ConditionBatch(batch.targets, dtype)
        x_a = Tensor(batch.features)
        zero = Tensor(np.zeros((), dtype=dtype))
        r_b = None

        with Tape() as tape:
            out_b = self.model.synthesize(x_a, cond_b)
            if self.settings.mode == "auto":
                cycle = zero
                gen, _ = adversarial_or_reconstruction_loss(out_b.features, x_a, same_skeleton=True)
                twist = twist_loss(out_b.quats, None, self.weights.alpha) if self.use_twist else zero
                smooth = zero
            else:
                out_a = self.model.synthesize(out_b.features, cond_a)
                cycle = cycle_loss(out_a.features, x_a)
                if self.adversarial and not batch.same.all():
                    r_b = discriminate(self.discriminator, out_b.local, out_b.velocity, cond_b,
                                       rng=self.rng, training=True)
                gen, _ = adversarial_or_reconstruction_loss(
                    out_b.features, x_a, r_b=r_b, same_skeleton=batch.same, beta=self.weights.beta,
                    non_saturating=self.settings.non_saturating, adversarial=self.adversarial,
                )
                twist = twist_loss(out_b.quats, out_a.quats, self.weights.alpha) if self.use_twist else zero
                smooth = smoothing_loss(out_b.velocity, out_a.velocity)
            terms = LossTerms(cycle, gen, twist, smooth)
            total = total_objective(terms, self.weights)
            self._check_finite({"C": cycle.item(), "R_gen": gen.item(), "J": twist.item(), "S": smooth.item()})
            self.gen_opt.zero_grad()
            tape.backward(total)
        self.gen_opt.step()
        if self.discriminator is not None:
            self.discriminator.zero_grad()

        metrics = {"C": cycle.item(), "R_gen": gen.item(), "J": twist.item(), "S": smooth.item()}
        return metrics, r_b, out_b

    def discriminator_step(self, batch: Batch, r_b: Tensor, out_b) -> tuple:
        """
        Update the discriminator on real clips of B vs the detached generated clips

        Returns:
            (discriminator objective, mean r^A, updated flag)
        """
        cross = ~batch.same
        rb_mean = float(np.mean(r_b.data[cross]))
        if rb_mean < self.optimizer_settings.balance_threshold:
            logger.debug(f"step {self.step}: r^B mean {rb_mean:.3f} below balance threshold, discriminator frozen")
            return float("nan"), float("nan"), False

        n = self.model.n_joints
        cond_b = ConditionBatch(batch.targets, self.model.dtype)
        real_local, real_velocity = split_features(self.sample_real(batch.targets), n)
        fake_local, fake_velocity = out_b.local.data, out_b.velocity.data
        with Tape() as tape:
            r_a = discriminate(self.discriminator, real_local, real_velocity, cond_b, rng=self.rng, training=True)
            r_fake = discriminate(self.discriminator, fake_local, fake_velocity, cond_b, rng=self.rng, training=True)
            _, objective = adversarial_or_reconstruction_loss(
                out_b.features.data, out_b.features.data, r_a=r_a, r_b=r_fake, same_skeleton=batch.same,
            )
            self._check_finite({"R_disc": objective.item()})
            self.disc_opt.zero_grad()
            tape.backward(ad.neg(objective))
        self.disc_opt.step()
        return objective.item(), float(np.mean(r_a.data[cross])), True

    def train_step(self) -> dict:
        batch = self.sample_batch()
        metrics, r_b, out_b = self.generator_step(batch)
        row = {"step": self.step + 1, **metrics, "R_disc": float("nan"), "rA_mean": float("nan"),
               "rB_mean": float("nan")}
        if r_b is not None:
            row["rB_mean"] = float(np.mean(r_b.data[~batch.same]))
            row["R_disc"], row["rA_mean"], updated = self.discriminator_step(batch, r_b, out_b)
            row["disc_updated"] = updated
        self.step += 1
        return row

    def checkpoint(self, path, joint_names) -> Path:
        states = {"gen": self.gen_opt.state}
        if self.disc_opt is not None:
            states["disc"] = self.disc_opt.state
        return save_checkpoint(
            path, self.model, joint_names, discriminator=self.discriminator, optimizer_states=states,
            step=self.step, mode=self.settings.mode, seed=self.settings.seed,
            rng_state=self.rng.bit_generator.state,
        )

    def run(self, steps: Optional[int] = None, out_dir=None) -> TrainResult:
        """
        Train until `steps` total steps have completed

        Args:
            steps: total step count, defaults to settings.steps
            out_dir: checkpoint directory; metrics.csv is written next to it

        Returns:
            TrainResult with the per-step metric rows
        """
        steps = self.settings.steps if steps is None else steps
        result = TrainResult()
        joint_names = self.clips[0].skeleton.names
        writer = handle = None
        if out_dir is not None:
            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            result.metrics_path = out_dir / "metrics.csv"
            append = self.step > 0 and result.metrics_path.exists()
            handle = open(result.metrics_path, "a" if append else "w", newline="")
            writer = csv.DictWriter(handle, fieldnames=METRIC_COLUMNS, extrasaction="ignore")
            if not append:
                writer.writeheader()

        logger.info(f"training {self.model.kind} model in {self.settings.mode} mode: "
                    f"steps {self.step + 1}..{steps}, {len(self.clips)} clips, {len(self.skeletons)} skeletons")
        try:
            while self.step < steps:
                row = self.train_step()
                result.history.append(row)
                result.steps_run += 1
                if "disc_updated" in row:
                    result.disc_updates += int(row["disc_updated"])
                    result.disc_skips += int(not row["disc_updated"])
                if writer is not None:
                    writer.writerow(row)
                if self.step % 100 == 0 or self.step == steps:
                    logger.info(f"step {self.step}: C={row['C']:.4f} R_gen={row['R_gen']:.4f} "
                                f"J={row['J']:.4f} S={row['S']:.4f} rB={row['rB_mean']:.3f}")
                every = self.settings.checkpoint_every
                if out_dir is not None and every and self.step % every == 0 and self.step < steps:
                    self.checkpoint(out_dir / f"step_{self.step:06d}", joint_names)
        finally:
            if handle is not None:
                handle.close()

        if out_dir is not None:
            result.checkpoint = self.checkpoint(out_dir, joint_names)
        return result


def train(dataset: Dataset, model: SequenceModel, discriminator: Optional[Discriminator] = None,
          weights: Optional[LossWeights] = None, optimizer: Optional[OptimizerSettings] = None,
          settings: Optional[TrainSettings] = None, out_dir=None, resume: Optional[Checkpoint] = None) -> TrainResult:
    """Run a full training schedule and return the metric log."""
    trainer = Trainer(dataset, model, discriminator, weights, optimizer, settings)
    if resume is not None:
        trainer.restore(resume)
    result = trainer.run(out_dir=out_dir)
    print(f"Training complete: {result.steps_run} steps, discriminator updates {result.disc_updates}, "
          f"skipped {result.disc_skips}")
    return result
