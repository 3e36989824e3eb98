"""
Diffusion-side exceptions
"""

from typing import List, Optional, Sequence

import numpy as np


class ScheduleError(Exception):
    """Schedule parameters violate the noise-schedule invariants"""
    pass


class ScoreModelError(Exception):
    """Invalid score-model construction or evaluation"""
    pass


class TrainingDivergedError(ScoreModelError):
    """Denoising score matching produced a non-finite loss"""

    def __init__(self, message: str, loss_trace: Sequence[float]):
        super().__init__(message)
        self.loss_trace: List[float] = list(loss_trace)


class SamplingError(Exception):
    """Sampling hit a non-finite state"""

    def __init__(self, message: str, step: int, prefix: Optional[List[np.ndarray]] = None):
        super().__init__(message)
        self.step = step
        self.prefix = prefix or []


class GuidanceError(Exception):
    """Guidance direction could not be formed"""

    def __init__(self, message: str, energy: Optional[float] = None):
        super().__init__(message)
        self.energy = energy


class SpectraError(Exception):
    """Invalid spectral request"""
    pass
