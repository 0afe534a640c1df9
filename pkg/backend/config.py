"""
Runtime configuration: environment settings, logging setup and hyperparameter models.

Environment variables (a local .env file is honoured):
    RETARGET_LOG_LEVEL    logging level name (default INFO)
    RETARGET_DTYPE        float32 for training, float64 for gradient checks
    RETARGET_DATA_DIR     default dataset directory for the CLI
    RETARGET_HIDDEN_SIZE  GRU width override for desk-scale runs (default 512)
"""
import logging
import os
from typing import Literal

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveFloat, PositiveInt

load_dotenv()

LOG_LEVEL = os.getenv("RETARGET_LOG_LEVEL", "INFO")
DTYPE_NAME = os.getenv("RETARGET_DTYPE", "float32")
DATA_DIR = os.getenv("RETARGET_DATA_DIR", "data")
HIDDEN_SIZE = int(os.getenv("RETARGET_HIDDEN_SIZE", "512"))

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: str | None = None) -> None:
    """
    Configure the root logger once for a CLI process

    Args:
        level: Level name; falls back to RETARGET_LOG_LEVEL
    """
    level_name = (level or LOG_LEVEL).upper()
    logging.basicConfig(level=getattr(logging, level_name, logging.INFO), format=LOG_FORMAT)


def default_dtype() -> np.dtype:
    return np.dtype(DTYPE_NAME)


class LossWeights(BaseModel):
    """Weights of the four objective terms; alpha is in degrees."""

    model_config = ConfigDict(frozen=True)

    beta: NonNegativeFloat = 0.001
    alpha: PositiveFloat = 100.0
    lam: NonNegativeFloat = 10.0
    omega: NonNegativeFloat = 0.01


class OptimizerSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    lr: PositiveFloat = 1e-4
    clip_norm: PositiveFloat = 25.0
    balance_threshold: NonNegativeFloat = 0.3
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: PositiveFloat = 1e-8


class ModelSettings(BaseModel):
    """
    Network shape and the FK composition mode.

    gru_variant "reset_before" multiplies the hidden state by the reset gate
    before the candidate transform; "reset_after" applies it to the
    transformed hidden state.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["fk", "rnn", "mlp"] = "fk"
    hidden_size: PositiveInt = HIDDEN_SIZE
    num_layers: PositiveInt = 2
    mlp_width: PositiveInt = 512
    composition: Literal["hierarchical", "world"] = "hierarchical"
    gru_variant: Literal["reset_before", "reset_after"] = "reset_before"
    dtype: Literal["float32", "float64"] = DTYPE_NAME if DTYPE_NAME in ("float32", "float64") else "float32"


class TrainSettings(BaseModel):
    """
    Loop settings. 50k steps is the full-data schedule; the 2k default is the
    synthetic desk-scale run.
    """

    model_config = ConfigDict(frozen=True)

    mode: Literal["auto", "cycle", "adv-cycle"] = "adv-cycle"
    steps: PositiveInt = 2000
    batch_size: PositiveInt = 16
    window: int = Field(60, ge=2)
    seed: int = 0
    checkpoint_every: int = Field(0, ge=0)
    non_saturating: bool = True


if __name__ == "__main__":
    setup_logging()
    print(f"log level: {LOG_LEVEL}, dtype: {DTYPE_NAME}, data dir: {DATA_DIR}, hidden: {HIDDEN_SIZE}")
    print(LossWeights())
    print(OptimizerSettings())
    print(ModelSettings())
    print(TrainSettings())
