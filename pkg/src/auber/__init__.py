"""Layer-wise attention head pruning of a small transformer encoder with a DQN agent."""

from auber.config import DataConfig, RunConfig, TrainerConfig
from auber.dqn import AgentConfig
from auber.transformer import EncoderModel, ModelConfig, init_model

__all__ = [
    "AgentConfig",
    "DataConfig",
    "EncoderModel",
    "ModelConfig",
    "RunConfig",
    "TrainerConfig",
    "init_model",
]
