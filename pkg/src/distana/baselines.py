"""Model-free reference predictors."""

from enum import Enum

import numpy as np


class BaselineKind(str, Enum):
    LAST_FRAME = "baseline-t-1"
    ZERO = "baseline-zero"


def baseline_predict(kind: BaselineKind, frame_in: np.ndarray) -> np.ndarray:
    """LAST_FRAME returns its input unchanged; ZERO predicts silence."""
    if BaselineKind(kind) is BaselineKind.LAST_FRAME:
        return frame_in
    return np.zeros_like(frame_in)
