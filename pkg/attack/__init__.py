"""
attack: toy depth victims, salient region selection and the end-to-end
adversarial-object pipeline. Import the pipeline from attack.pipeline.
"""

from attack.errors import PipelineError, ReportError, SaliencyError, VictimError
from attack.victim import Scene, VictimModel, adv_loss, compose_scene, make_victim, masked_depth, mrsr

__all__ = [
    "PipelineError",
    "ReportError",
    "SaliencyError",
    "VictimError",
    "Scene",
    "VictimModel",
    "adv_loss",
    "compose_scene",
    "make_victim",
    "masked_depth",
    "mrsr",
]
