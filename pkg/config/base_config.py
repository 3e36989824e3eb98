"""
Base Configuration Classes
Section dataclasses shared by every run configuration
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple

from diffusion.schedule import COSINE_DEFAULT_PARAMS, NoiseSchedule, build_schedule


@dataclass
class ScheduleConfig:
    """Noise schedule (kind, horizon T, DDIM η, kind parameters)"""
    kind: str = "linear_beta"
    T: int = 50
    eta_ddim: float = 0.0
    beta_start: float = 1e-4
    beta_end: float = 0.2
    cosine_offset: float = COSINE_DEFAULT_PARAMS[0]

    @property
    def params(self) -> Tuple[float, float]:
        if self.kind == "cosine":
            return (self.cosine_offset, COSINE_DEFAULT_PARAMS[1])
        return (self.beta_start, self.beta_end)

    def build(self) -> NoiseSchedule:
        return build_schedule(self.kind, self.T, self.eta_ddim, self.params)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class ModelSpec:
    """Score model selection, passed to ScoreModelFactory"""
    kind: str = "templates"
    variance: float = 0.01
    path: str = ""

    def to_factory_spec(self, scene: "SceneSpec") -> Dict[str, Any]:
        spec: Dict[str, Any] = {"kind": self.kind}
        if self.kind == "templates":
            spec.update(
                n_classes=scene.n_classes, height=scene.height, width=scene.width, variance=self.variance
            )
        elif self.kind == "mlp":
            if self.path:
                spec["path"] = self.path
            else:
                spec["shape"] = list(scene.shape)
        elif self.kind == "unit_gaussian":
            spec["shape"] = list(scene.shape)
        return spec

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class VictimSpec:
    """Toy depth victim; planted victims wire the target to one source patch"""
    kind: str = "patch_pool"
    kernel: int = 5
    offset: float = 10.0
    gain: float = 4.0
    planted: bool = True
    planted_gain: float = 8.0
    n_secondary: int = 3
    secondary_ratio: float = 0.05

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class SrsSettings:
    """Salient region selection"""
    iterations: int = 10
    step: float = 0.05
    clamp: Optional[float] = 0.5
    c_side: float = 1.0
    s_min: int = 2
    s_max: int = 0  # 0: half the shorter image side
    start_scale: float = 1e-6
    two_sided: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class GuidanceSettings:
    """Guidance mode and its options"""
    mode: str = "jvpg"
    gamma: float = 0.5
    lam: float = 2.0
    orient_gamma: bool = False
    linearize_at: str = "current"
    norm_match: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class SceneSpec:
    """Procedural toy scene geometry"""
    n_classes: int = 3
    channels: int = 1
    height: int = 16
    width: int = 16
    target_side: int = 4
    noise: float = 0.02

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.channels, self.height, self.width)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
