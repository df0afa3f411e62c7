"""Training hyperparameter configuration shared by all tagger backends."""

from __future__ import annotations

from dataclasses import dataclass, field, fields


@dataclass
class TrainConfig:
    """Fine-tuning hyperparameters.

    learning_rate and adam_epsilon are transformer-scale values consumed by
    the external tagger bridge; the built-in baseline tagger uses its own
    step size (see baseline module) but honors batch_size, max_epochs,
    min_delta and dev_fraction.
    """

    learning_rate: float = 3e-5
    adam_epsilon: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 15
    min_delta: float = 0.005
    dev_fraction: float = 0.2

    def __post_init__(self):
        if not 0 < self.dev_fraction < 1:
            raise ValueError(f"dev_fraction must be in (0, 1), got {self.dev_fraction}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})
