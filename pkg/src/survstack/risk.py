"""Shared risk-prediction container."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class RiskPrediction:
    """Per-subject predicted event probability at a fixed horizon."""

    values: np.ndarray
    horizon: float
    source: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValidationError("risk values must lie in [0, 1]")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)
