"""The denoiser contract shared by all implementations."""

from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np

from ..conditions import DenoiserCondition
from ..diffusion import LogSnrPoint


@runtime_checkable
class Denoiser(Protocol):
    """Anything that predicts the injected noise from a perturbed field.

    ``x_alpha`` may carry arbitrary leading batch dimensions ahead of the
    (channels, height, width) field shape; the prediction has the same shape.
    Implementations are read-only after construction and safe to call
    concurrently.
    """

    def predict_eps(
        self, x_alpha: np.ndarray, point: LogSnrPoint, condition: DenoiserCondition
    ) -> np.ndarray: ...


def predict_eps(
    denoiser: Denoiser,
    x_alpha: np.ndarray,
    point: LogSnrPoint,
    condition: DenoiserCondition,
) -> np.ndarray:
    """Functional form of the denoiser call."""
    return denoiser.predict_eps(x_alpha, point, condition)
