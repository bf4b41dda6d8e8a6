"""Training configuration shared by both stages."""
from dataclasses import dataclass


@dataclass(frozen=True)
class TrainConfig:
    in_channels: int
    classes: int = 13
    levels: int = 5
    base: int = 16
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    plateau_factor: float = 0.8
    plateau_patience: int = 5
    batch_roi: int = 4
    batch_nuclei: int = 1
    early_stop_patience: int = 10
    max_epochs: int = 200
    seed: int = 1234
    stop_below: float | None = None  # optional early exit on train loss

    def __post_init__(self):
        positives = {
            "in_channels": self.in_channels,
            "classes": self.classes,
            "levels": self.levels,
            "base": self.base,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay + 1,  # zero decay is legal
            "plateau_factor": self.plateau_factor,
            "plateau_patience": self.plateau_patience,
            "batch_roi": self.batch_roi,
            "batch_nuclei": self.batch_nuclei,
            "early_stop_patience": self.early_stop_patience,
            "max_epochs": self.max_epochs,
        }
        for name, value in positives.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not 0.0 < self.plateau_factor < 1.0:
            raise ValueError("plateau_factor must lie in (0, 1)")
        if self.stop_below is not None and self.stop_below <= 0:
            raise ValueError("stop_below must be positive when set")
