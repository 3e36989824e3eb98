"""
Victim Models
Toy differentiable monocular-depth victims, mask and scene algebra, the
adversarial loss and the mean relative shift ratio (MRSR).

Depth maps are (H, W) and strictly positive: every victim ends in
    depth = offset + gain·(softplus(pre) − ln 2),   offset > gain·ln 2
so a zero pre-activation gives exactly `offset`.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from attack.errors import VictimError
from diffkernel import ops
from diffkernel.engine import DifferentiableFn, evaluate
from diffkernel.tensor import frozen
from utils.logger import get_logger

logger = get_logger("victim")

VICTIM_KINDS = ("patch_pool", "tiny_conv")
LN2 = math.log(2.0)

Box = Tuple[int, int, int, int]  # (row0, col0, row1, col1), end-exclusive


# =========================================================================
# MASKS AND SCENES
# =========================================================================

def box_mask(height: int, width: int, box: Box) -> np.ndarray:
    """(H,W) {0,1} mask of a box"""
    r0, c0, r1, c1 = box
    if not (0 <= r0 < r1 <= height and 0 <= c0 < c1 <= width):
        raise VictimError(f"box {box} does not fit a {height}x{width} image")
    mask = np.zeros((height, width))
    mask[r0:r1, c0:c1] = 1.0
    return mask


def check_mask(mask: np.ndarray, role: str = "target", shape: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """
    Validate a binary (H,W) mask

    Raises:
        VictimError: Non-binary entries, wrong shape, or an empty target mask
    """
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise VictimError(f"{role} mask must be 2-D, got shape {mask.shape}")
    if shape is not None and mask.shape != tuple(shape):
        raise VictimError(f"{role} mask shape {mask.shape} differs from image {tuple(shape)}")
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise VictimError(f"{role} mask entries must be exactly 0 or 1")
    if role == "target" and not np.any(mask):
        raise VictimError("target mask is empty")
    return mask


def union_masks(*masks: np.ndarray) -> np.ndarray:
    out = np.zeros_like(np.asarray(masks[0], dtype=np.float64))
    for m in masks:
        out = np.maximum(out, m)
    return out


def compose_scene(x, A, mask_a):
    """
    z = x⊙(1−M_A) + A⊙M_A, mask broadcast over channels.

    Works on arrays and traced values alike.
    """
    mask_a = np.asarray(mask_a, dtype=np.float64)
    if tuple(np.shape(x)) != tuple(A.shape if hasattr(A, "shape") else np.shape(A)):
        raise VictimError(f"image shape {np.shape(x)} differs from object shape {np.shape(A)}")
    if mask_a.shape != tuple(np.shape(x))[-2:]:
        raise VictimError(f"mask shape {mask_a.shape} does not match image {np.shape(x)}")
    keep = np.asarray(x, dtype=np.float64) * (1.0 - mask_a)
    return ops.add(keep, ops.mul(A, mask_a))


def extract_object(z: np.ndarray, mask_a: np.ndarray) -> np.ndarray:
    """A = z ⊙ M_A"""
    return np.asarray(z, dtype=np.float64) * np.asarray(mask_a, dtype=np.float64)


@dataclass
class Scene:
    """Original image, target / adversarial masks and the optional composited image"""
    x: np.ndarray
    mask_t: np.ndarray
    mask_a: np.ndarray
    z: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 3:
            raise VictimError(f"scene image must be (C,H,W), got {self.x.shape}")
        hw = self.x.shape[1:]
        self.mask_t = check_mask(self.mask_t, "target", hw)
        self.mask_a = check_mask(self.mask_a, "adversarial", hw)
        if np.any(self.mask_t * self.mask_a):
            raise VictimError("target and adversarial masks overlap")
        if self.z is not None:
            self.z = np.asarray(self.z, dtype=np.float64)
            outside = (self.z - self.x) * (1.0 - self.mask_a)
            if np.max(np.abs(outside)) > 1e-12:
                raise VictimError("composited image alters the background outside M_A")

    @property
    def A(self) -> Optional[np.ndarray]:
        return None if self.z is None else extract_object(self.z, self.mask_a)

    def with_object(self, A: np.ndarray) -> "Scene":
        return Scene(self.x, self.mask_t, self.mask_a, z=np.asarray(compose_scene(self.x, A, self.mask_a)))


# =========================================================================
# VICTIMS
# =========================================================================

@dataclass(frozen=True)
class PlantSpec:
    """
    Target-region depth wired to the mean intensity of one source box.
    Secondary boxes contribute with gain·secondary_ratio each.
    """
    source_box: Box
    target_mask: np.ndarray
    gain: float = 8.0
    secondary_boxes: Tuple[Box, ...] = ()
    secondary_ratio: float = 0.05

    def sources(self) -> List[Tuple[Box, float]]:
        return [(self.source_box, self.gain)] + [(b, self.gain * self.secondary_ratio) for b in self.secondary_boxes]


@dataclass
class VictimModel:
    """Depth victim image (C,H,W) → depth (H,W)"""
    kind: str
    seed: int
    channels: int
    height: int
    width: int
    offset: float
    gain: float
    params: Dict[str, np.ndarray] = field(default_factory=dict)
    plant: Optional[PlantSpec] = None

    def __post_init__(self):
        if self.offset <= self.gain * LN2:
            raise VictimError(f"offset {self.offset} must exceed gain·ln2 = {self.gain * LN2} to keep depth positive")
        if self.plant is not None:
            # per-pixel weights of the planted source means
            weights = np.zeros((self.height, self.width))
            for box, g in self.plant.sources():
                m = box_mask(self.height, self.width, box)
                weights += g * m / (np.sum(m) * self.channels)
            self._source_weights = frozen(np.broadcast_to(weights, self.image_shape).copy())
            self._target = frozen(check_mask(self.plant.target_mask, "target", (self.height, self.width)))

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return (self.channels, self.height, self.width)

    @property
    def planted(self) -> bool:
        return self.plant is not None

    def pre_activation(self, img):
        p = self.params
        if self.kind == "patch_pool":
            pre = ops.add(ops.reshape(ops.conv2d(img, p["kernel"]), (self.height, self.width)), p["bias"])
        else:
            h = ops.tanh(ops.add(ops.conv2d(img, p["kernel1"]), p["bias1"]))
            pre = ops.add(ops.reshape(ops.conv2d(h, p["kernel2"]), (self.height, self.width)), p["bias2"])
        if self.plant is not None:
            source_mean = ops.reduce_sum(ops.mul(img, self._source_weights))
            pre = ops.add(pre, ops.mul(self._target, source_mean))
        return pre

    def depth_expr(self, img):
        """Traceable depth map"""
        return ops.add(self.offset, ops.mul(self.gain, ops.sub(ops.softplus(self.pre_activation(img)), LN2)))

    def as_fn(self) -> DifferentiableFn:
        return DifferentiableFn(self.depth_expr, [self.image_shape], name=f"victim_{self.kind}")

    def depth(self, img: np.ndarray) -> np.ndarray:
        img = np.asarray(img, dtype=np.float64)
        if img.shape != self.image_shape:
            raise VictimError(f"victim expects images of shape {self.image_shape}, got {img.shape}")
        return evaluate(self.as_fn(), img)

    def describe(self) -> Dict:
        info = {
            "kind": self.kind,
            "seed": self.seed,
            "offset": self.offset,
            "gain": self.gain,
            "planted": self.planted,
        }
        if self.plant is not None:
            info["planted_box"] = list(self.plant.source_box)
            info["planted_gain"] = self.plant.gain
        return info


def make_victim(
    kind: str,
    seed: int,
    channels: int = 1,
    height: int = 16,
    width: int = 16,
    kernel: int = 5,
    offset: float = 10.0,
    gain: float = 4.0,
    weight_scale: Optional[float] = None,
    plant: Optional[PlantSpec] = None,
) -> VictimModel:
    """
    Build a seeded toy victim

    Args:
        kind: 'patch_pool' (one k×k pooling convolution) or 'tiny_conv'
            (3×3 convolution, tanh, k×k convolution)
        seed: Weight seed
        channels, height, width: Image geometry
        kernel: Odd receptive-field side of the output convolution
        offset, gain: Output head constants
        weight_scale: Weight std; defaults to 1/(k·sqrt(C)), or 0.01 for planted victims
        plant: Optional planted dependence of the target region on one source box

    Raises:
        VictimError: Unknown kind or invalid geometry
    """
    if kind not in VICTIM_KINDS:
        raise VictimError(f"unknown victim kind '{kind}'. Available: {', '.join(VICTIM_KINDS)}")
    if channels < 1 or height < 2 or width < 2:
        raise VictimError(f"invalid image geometry {channels}x{height}x{width}")
    if kernel < 1 or kernel % 2 == 0 or kernel > min(height, width):
        raise VictimError(f"kernel side must be odd and at most the image side, got {kernel}")

    rng = np.random.default_rng(seed)
    if weight_scale is None:
        weight_scale = 0.01 if plant is not None else 1.0 / (kernel * math.sqrt(channels))

    if kind == "patch_pool":
        params = {
            "kernel": frozen(rng.normal(0.0, weight_scale, (1, channels, kernel, kernel))),
            "bias": frozen(np.zeros(())),
        }
    else:
        hidden = 4
        params = {
            "kernel1": frozen(rng.normal(0.0, 1.0 / (3.0 * math.sqrt(channels)), (hidden, channels, 3, 3))),
            "bias1": frozen(np.zeros((hidden, 1, 1))),
            "kernel2": frozen(rng.normal(0.0, weight_scale, (1, hidden, kernel, kernel))),
            "bias2": frozen(np.zeros(())),
        }

    victim = VictimModel(
        kind=kind, seed=seed, channels=channels, height=height, width=width,
        offset=offset, gain=gain, params=params, plant=plant,
    )
    logger.debug("victim_built", **victim.describe())
    return victim


# =========================================================================
# LOSS AND METRICS
# =========================================================================

def masked_depth_expr(f: VictimModel, img, mask_t):
    return ops.mul(f.depth_expr(img), mask_t)


def masked_depth(f: VictimModel, img: np.ndarray, mask_t: np.ndarray) -> np.ndarray:
    """f(img) ⊙ M_T"""
    mask_t = check_mask(mask_t, "target", (f.height, f.width))
    return f.depth(img) * mask_t


def adv_loss_expr(f: VictimModel, z, mask_t, target):
    """‖f(z)⊙M_T − target‖², traceable in z"""
    return ops.sq_norm(ops.sub(masked_depth_expr(f, z, mask_t), target))


def adv_loss_fn(f: VictimModel, x: np.ndarray, mask_t: np.ndarray, lam: float) -> DifferentiableFn:
    """z ↦ ‖f_{M_T}(z) − λ·f_{M_T}(x)‖²"""
    if lam <= 0.0:
        raise VictimError(f"lambda must be positive, got {lam}")
    target = lam * masked_depth(f, x, mask_t)
    mask_t = np.asarray(mask_t, dtype=np.float64)
    return DifferentiableFn(lambda z: adv_loss_expr(f, z, mask_t, target), [f.image_shape], name="adv_loss")


def adv_loss(f: VictimModel, x: np.ndarray, z: np.ndarray, mask_t: np.ndarray, lam: float) -> float:
    return float(evaluate(adv_loss_fn(f, x, mask_t, lam), z))


def quantize_roundtrip(img: np.ndarray, levels: int = 255) -> np.ndarray:
    """Uniform 8-bit encode/decode of an image in [0,1]"""
    return np.round(np.clip(img, 0.0, 1.0) * levels) / levels


def mrsr_from_depths(depth_x: np.ndarray, depth_z: np.ndarray, mask_t: np.ndarray) -> float:
    """Σ_{M_T}(d_z − d_x) / Σ_{M_T} d_x"""
    mask_t = np.asarray(mask_t, dtype=np.float64)
    denom = float(np.sum(depth_x * mask_t))
    if denom <= 0.0:
        raise VictimError("reference depth over the target mask must be positive")
    return float(np.sum((depth_z - depth_x) * mask_t)) / denom


def mrsr(f: VictimModel, x: np.ndarray, z: np.ndarray, mask_t: np.ndarray, quantize: bool = False) -> float:
    """Mean relative shift ratio ξ_r over the target mask; signed"""
    mask_t = check_mask(mask_t, "target", (f.height, f.width))
    if quantize:
        x, z = quantize_roundtrip(x), quantize_roundtrip(z)
    return mrsr_from_depths(f.depth(x), f.depth(z), mask_t)


def mrsr_abs(f: VictimModel, x: np.ndarray, z: np.ndarray, mask_t: np.ndarray, quantize: bool = False) -> float:
    """Mean-absolute variant: Σ_{M_T}|d_z − d_x| / Σ_{M_T} d_x"""
    mask_t = check_mask(mask_t, "target", (f.height, f.width))
    if quantize:
        x, z = quantize_roundtrip(x), quantize_roundtrip(z)
    dx, dz = f.depth(x), f.depth(z)
    return float(np.sum(np.abs(dz - dx) * mask_t)) / float(np.sum(dx * mask_t))
