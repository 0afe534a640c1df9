from typing import Optional

from backend.config import ModelSettings
from backend.networks.baselines import ConditionalMlpBaseline, ConditionalRnnBaseline
from backend.networks.retarget_model import RetargetModel, SequenceModel

MODEL_KINDS = {
    "fk": RetargetModel,
    "rnn": ConditionalRnnBaseline,
    "mlp": ConditionalMlpBaseline,
}


def build_model(n_joints: int, settings: Optional[ModelSettings] = None, seed: int = 0) -> SequenceModel:
    """Instantiate the network named by settings.kind."""
    settings = settings or ModelSettings()
    return MODEL_KINDS[settings.kind](n_joints, settings, seed=seed)
