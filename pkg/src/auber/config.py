"""Run configuration: nested dataclasses with JSON round trip and dotted overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from auber.dqn import AgentConfig
from auber.errors import InputError
from auber.transformer import ModelConfig


@dataclass
class TrainerConfig:
    batch_size: int = 32
    base_lr: float = 1e-3
    base_epochs: int = 15
    interlayer_lr: float = 1e-4
    interlayer_epochs: int = 1
    final_lr: float = 1e-4
    patience: int = 20
    max_epochs: int = 200
    small_part: str = "train"  # which side of the 1:2 mini split is the mini-train set


@dataclass
class DataConfig:
    train_path: Optional[str] = None
    dev_path: Optional[str] = None
    # synthetic task, used when no TSV paths are given
    n_train: int = 300
    n_dev: int = 600
    seq_len: int = 16
    trigger_token: int = 0
    label_noise: float = 0.15
    data_seed: int = 0


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    data: DataConfig = field(default_factory=DataConfig)
    mode: str = "auber"
    state: str = "value"  # value | query | key | l2
    order: str = "forward"  # forward | reverse
    seed: int = 0

    def validate(self) -> None:
        self.model.validate()
        if self.model.num_heads < 2:
            raise InputError("model.num_heads must be >= 2 for pruning")
        for name in ("base_lr", "interlayer_lr", "final_lr"):
            if getattr(self.trainer, name) <= 0:
                raise InputError(f"trainer.{name} must be > 0")
        for name in ("batch_size", "patience", "max_epochs"):
            if getattr(self.trainer, name) < 1:
                raise InputError(f"trainer.{name} must be >= 1")
        if self.order not in ("forward", "reverse"):
            raise InputError(f"order must be 'forward' or 'reverse', got {self.order!r}")
        if self.state not in ("value", "query", "key", "l2"):
            raise InputError(f"unknown state recipe {self.state!r}")
        try:
            self.agent.validate()
        except ValueError as exc:
            raise InputError(f"agent: {exc}") from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        sections = {"model": ModelConfig, "trainer": TrainerConfig, "agent": AgentConfig, "data": DataConfig}
        kwargs: dict[str, Any] = {}
        for key, value in raw.items():
            if key in sections:
                known = {f.name for f in dataclasses.fields(sections[key])}
                unknown = set(value) - known
                if unknown:
                    raise InputError(f"unknown {key} fields: {sorted(unknown)}")
                kwargs[key] = sections[key](**value)
            elif key in {f.name for f in dataclasses.fields(cls)}:
                kwargs[key] = value
            else:
                raise InputError(f"unknown config field {key!r}")
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def override(self, dotted: str, raw_value: str) -> None:
        """Apply ``section.field=value`` (or ``field=value``), casting to the field's type."""
        parts = dotted.split(".")
        target: Any = self
        for p in parts[:-1]:
            if not hasattr(target, p):
                raise InputError(f"unknown config section {p!r}")
            target = getattr(target, p)
        name = parts[-1]
        if not dataclasses.is_dataclass(target) or name not in {f.name for f in dataclasses.fields(target)}:
            raise InputError(f"unknown config field {dotted!r}")
        current = getattr(target, name)
        setattr(target, name, _cast(raw_value, current, dotted))


def _cast(raw: str, current: Any, name: str) -> Any:
    if raw.lower() in ("none", "null"):
        return None
    try:
        if isinstance(current, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
    except ValueError:
        raise InputError(f"cannot parse {raw!r} for {name}") from None
    return raw
