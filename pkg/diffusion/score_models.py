"""
Score Models
Analytic Gaussian / Gaussian-mixture scores (exact oracles) and a small MLP
score network trained by denoising score matching.

Every model exposes `score_expr(z, t, c)`, written with diffkernel ops so it
evaluates on arrays and differentiates under jvp / vjp. Step t = 0 denotes
clean data (ᾱ_0 ≡ 1).
"""

import math
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from diffkernel import ops
from diffkernel.engine import DifferentiableFn, evaluate, value_and_grad
from diffkernel.tensor import frozen
from diffusion.errors import ScoreModelError, TrainingDivergedError
from diffusion.schedule import NoiseSchedule
from utils.file_handler import FileHandler
from utils.logger import get_logger
from utils.validator import ConfigValidator, ValidationError

logger = get_logger("score_models")

# Class index standing in for a text condition; None is unconditional
Condition = Optional[int]


class ScoreModel(ABC):
    """s_θ(z_t, t | c) over tensors of a fixed shape"""

    analytic = False

    def __init__(self, shape: Sequence[int], schedule: NoiseSchedule, n_classes: int = 0):
        self.shape = tuple(int(n) for n in shape)
        self.schedule = schedule
        self.n_classes = int(n_classes)

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))

    @abstractmethod
    def score_expr(self, z, t: int, c: Condition = None):
        """Traceable score expression"""
        pass

    def check_step(self, t: int) -> int:
        if not isinstance(t, (int, np.integer)) or not 0 <= t <= self.schedule.T:
            raise ScoreModelError(f"step t={t} out of range 0..{self.schedule.T}")
        return int(t)

    def check_condition(self, c: Condition) -> Condition:
        if c is None:
            return None
        if not isinstance(c, (int, np.integer)) or not 0 <= c < self.n_classes:
            raise ScoreModelError(f"condition label {c!r} is not a valid class (n_classes={self.n_classes})")
        return int(c)

    def as_fn(self, t: int, c: Condition = None) -> DifferentiableFn:
        """z ↦ s(z, t | c) as a DifferentiableFn"""
        t = self.check_step(t)
        c = self.check_condition(c)
        return DifferentiableFn(lambda z: self.score_expr(z, t, c), [self.shape], name=f"{type(self).__name__}@t={t}")

    def score(self, z_t: np.ndarray, t: int, c: Condition = None) -> np.ndarray:
        return evaluate(self.as_fn(t, c), z_t)

    def describe(self) -> Dict:
        return {"kind": type(self).__name__, "shape": list(self.shape), "n_classes": self.n_classes}


# =========================================================================
# ANALYTIC MODELS
# =========================================================================

class GaussianMixtureScore(ScoreModel):
    """
    Exact score of a diagonal Gaussian mixture noised by the schedule.

    Component k at step t has mean sqrt(ᾱ_t)·μ_k and covariance
    S_k(t) = ᾱ_t·Σ_k + (1−ᾱ_t)·I.
    """

    analytic = True

    def __init__(
        self,
        weights: Sequence[float],
        means: np.ndarray,
        variances: Union[float, np.ndarray],
        schedule: NoiseSchedule,
    ):
        weights = np.asarray(weights, dtype=np.float64)
        means = np.asarray(means, dtype=np.float64)
        if weights.ndim != 1 or means.shape[0] != weights.size:
            raise ScoreModelError(f"{weights.size} weights for {means.shape[0]} means")
        if np.any(weights <= 0.0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ScoreModelError("mixture weights must be positive and sum to 1")
        try:
            variances = np.broadcast_to(np.asarray(variances, dtype=np.float64), means.shape)
        except ValueError as e:
            raise ScoreModelError(f"variances do not broadcast to means shape {means.shape}") from e
        if np.any(variances <= 0.0):
            raise ScoreModelError("diagonal variances must be positive")

        super().__init__(means.shape[1:], schedule, n_classes=weights.size)
        self.weights = frozen(weights)
        self.means = frozen(means)
        self.variances = frozen(variances)
        self.log_weights = frozen(np.log(weights))

    @property
    def n_components(self) -> int:
        return self.weights.size

    def marginal(self, t: int) -> Tuple[np.ndarray, np.ndarray]:
        """(S, m): per-component marginal covariance diagonals and means at step t"""
        ab = self.schedule.alpha_bar_at(self.check_step(t))
        return ab * self.variances + (1.0 - ab), math.sqrt(ab) * self.means

    def _components(self, c: Condition) -> List[int]:
        c = self.check_condition(c)
        return list(range(self.n_components)) if c is None else [c]

    def score_expr(self, z, t: int, c: Condition = None):
        comps = self._components(c)
        S, m = self.marginal(t)

        if len(comps) == 1:
            k = comps[0]
            return ops.neg(ops.div(ops.sub(z, m[k]), S[k]))

        # responsibilities by log-sum-exp over unnormalized log-posteriors
        logits, terms = [], []
        for k in comps:
            diff = ops.sub(z, m[k])
            terms.append(ops.neg(ops.div(diff, S[k])))
            log_norm = self.log_weights[k] - 0.5 * float(np.sum(np.log(2.0 * math.pi * S[k])))
            q = ops.reduce_sum(ops.div(ops.mul(diff, diff), S[k]))
            logits.append(ops.reshape(ops.sub(log_norm, ops.mul(0.5, q)), (1,)))

        lse = ops.logsumexp(ops.concat(logits))
        out = None
        for logit, term in zip(logits, terms):
            r = ops.exp(ops.sub(ops.reshape(logit, ()), lse))
            contrib = ops.mul(r, term)
            out = contrib if out is None else ops.add(out, contrib)
        return out

    def marginal_log_density(self, z: np.ndarray, t: int, c: Condition = None) -> float:
        """log p_t(z | c), exact"""
        z = np.asarray(z, dtype=np.float64)
        if z.shape != self.shape:
            raise ScoreModelError(f"point shape {z.shape} differs from model shape {self.shape}")
        S, m = self.marginal(t)
        comps = self._components(c)
        parts = []
        for k in comps:
            lp = -0.5 * float(np.sum((z - m[k]) ** 2 / S[k] + np.log(2.0 * math.pi * S[k])))
            parts.append(lp + (self.log_weights[k] if c is None else 0.0))
        return float(np.logaddexp.reduce(parts))

    def log_density(self, x: np.ndarray, c: Condition = None) -> float:
        """Exact data log-density"""
        return self.marginal_log_density(x, 0, c)

    def sample_data(self, rng: np.random.Generator, n: int, c: Condition = None) -> np.ndarray:
        """n draws from the clean data law, shape (n, *shape)"""
        c = self.check_condition(c)
        if c is None:
            ks = rng.choice(self.n_components, size=n, p=self.weights)
        else:
            ks = np.full(n, c)
        noise = rng.standard_normal((n,) + self.shape)
        return self.means[ks] + np.sqrt(self.variances[ks]) * noise

    def describe(self) -> Dict:
        info = super().describe()
        info.update({"kind": "gaussian_mixture", "components": self.n_components})
        return info


def gaussian_score(mean: np.ndarray, variance: Union[float, np.ndarray], schedule: NoiseSchedule) -> GaussianMixtureScore:
    """Single diagonal Gaussian as a one-component mixture"""
    mean = np.asarray(mean, dtype=np.float64)
    return GaussianMixtureScore([1.0], mean[None], np.broadcast_to(variance, mean.shape)[None], schedule)


def unit_gaussian(shape: Sequence[int], schedule: NoiseSchedule) -> GaussianMixtureScore:
    """Standard normal data: score −z_t at every step"""
    return gaussian_score(np.zeros(tuple(shape)), 1.0, schedule)


class LinearScore(ScoreModel):
    """s(z) = A·z, independent of t and c"""

    def __init__(self, A: np.ndarray, shape: Sequence[int], schedule: NoiseSchedule):
        super().__init__(shape, schedule)
        A = np.asarray(A, dtype=np.float64)
        if A.shape != (self.dim, self.dim):
            raise ScoreModelError(f"matrix shape {A.shape} does not act on dimension {self.dim}")
        self.A = frozen(A)

    def score_expr(self, z, t: int, c: Condition = None):
        return ops.reshape(ops.matmul(self.A, ops.reshape(z, (self.dim,))), self.shape)


# =========================================================================
# TOY SCENE TEMPLATES
# =========================================================================

def scene_templates(n_classes: int = 3, height: int = 16, width: int = 16) -> np.ndarray:
    """
    One grayscale template per class, shape (n_classes, 1, H, W).

    A vertical road gradient (0.2 at the top row to 0.6 at the bottom) plus a
    Gaussian blob of amplitude 0.2 at a class-specific column.
    """
    if n_classes < 1 or height < 4 or width < 4:
        raise ScoreModelError(f"invalid template geometry: n_classes={n_classes}, {height}x{width}")
    rows = np.arange(height, dtype=np.float64)[:, None]
    cols = np.arange(width, dtype=np.float64)[None, :]
    road = 0.2 + 0.4 * rows / (height - 1) + 0.0 * cols

    blob_width = max(height, width) / 8.0
    row_c = 0.35 * (height - 1)
    templates = np.empty((n_classes, 1, height, width))
    for k in range(n_classes):
        col_c = (k + 1) * (width - 1) / (n_classes + 1)
        blob = np.exp(-((rows - row_c) ** 2 + (cols - col_c) ** 2) / (2.0 * blob_width ** 2))
        templates[k, 0] = road + 0.2 * blob
    return templates


def template_mixture(
    schedule: NoiseSchedule,
    n_classes: int = 3,
    height: int = 16,
    width: int = 16,
    variance: float = 0.01,
) -> GaussianMixtureScore:
    """Equal-weight mixture centred on the scene templates"""
    means = scene_templates(n_classes, height, width)
    return GaussianMixtureScore(np.full(n_classes, 1.0 / n_classes), means, variance, schedule)


def anisotropic_mixture(
    schedule: NoiseSchedule,
    dim: int = 16,
    n_components: int = 2,
    separation: float = 8.0,
    var_high: float = 1.0,
    var_low: float = 0.01,
) -> GaussianMixtureScore:
    """
    Well-separated components with strongly anisotropic covariance.

    Means sit at ±separation/2 along the first axis (further components
    along the next axes); the first half of the coordinates have variance
    var_high, the rest var_low.
    """
    if dim < 2 or n_components < 1:
        raise ScoreModelError(f"invalid anisotropic mixture: dim={dim}, components={n_components}")
    means = np.zeros((n_components, dim))
    for k in range(n_components):
        axis = (k // 2) % dim
        means[k, axis] = separation / 2.0 * (1.0 if k % 2 == 0 else -1.0)
    var = np.where(np.arange(dim) < dim // 2, var_high, var_low)
    return GaussianMixtureScore(np.full(n_components, 1.0 / n_components), means, np.tile(var, (n_components, 1)), schedule)


# =========================================================================
# MLP SCORE NETWORK
# =========================================================================

class MlpScore(ScoreModel):
    """
    Fully connected score network over flattened tensors.

    Input features are [z, sin/cos time features, one-hot condition]; hidden
    layers use tanh; the output layer is linear with the data dimension.
    Parameters live in one flat vector θ, laid out layer by layer as W
    (d_in × d_out, row-major) followed by b (d_out).
    """

    def __init__(
        self,
        shape: Sequence[int],
        widths: Sequence[int],
        schedule: NoiseSchedule,
        theta: np.ndarray,
        n_classes: int = 0,
        n_freq: int = 4,
        seed: int = 0,
        loss_trace: Sequence[float] = (),
        training_steps: int = 0,
    ):
        super().__init__(shape, schedule, n_classes=n_classes)
        self.widths = tuple(int(w) for w in widths)
        self.n_freq = int(n_freq)
        self.seed = int(seed)
        self.loss_trace = tuple(float(v) for v in loss_trace)
        self.training_steps = int(training_steps)

        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.param_count,):
            raise ScoreModelError(f"theta has shape {theta.shape}, expected ({self.param_count},)")
        self.theta = frozen(theta)

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    @staticmethod
    def layer_dims(dim: int, widths: Sequence[int], n_classes: int, n_freq: int) -> List[Tuple[int, int]]:
        sizes = [dim + 2 * n_freq + n_classes, *widths, dim]
        return list(zip(sizes[:-1], sizes[1:]))

    @classmethod
    def init(
        cls,
        shape: Sequence[int],
        widths: Sequence[int],
        schedule: NoiseSchedule,
        n_classes: int = 0,
        n_freq: int = 4,
        seed: int = 42,
        scale: float = 1.0,
    ) -> "MlpScore":
        """Random weights N(0, scale²/d_in), zero biases"""
        dim = int(np.prod(shape))
        rng = np.random.default_rng(seed)
        parts = []
        for d_in, d_out in cls.layer_dims(dim, widths, n_classes, n_freq):
            parts.append(rng.normal(0.0, scale / math.sqrt(d_in), d_in * d_out))
            parts.append(np.zeros(d_out))
        return cls(shape, widths, schedule, np.concatenate(parts), n_classes=n_classes, n_freq=n_freq, seed=seed)

    @classmethod
    def zeros(cls, shape, widths, schedule, n_classes: int = 0, n_freq: int = 4) -> "MlpScore":
        dim = int(np.prod(shape))
        count = sum(a * b + b for a, b in cls.layer_dims(dim, widths, n_classes, n_freq))
        return cls(shape, widths, schedule, np.zeros(count), n_classes=n_classes, n_freq=n_freq)

    def with_theta(self, theta: np.ndarray, loss_trace: Sequence[float] = (), training_steps: Optional[int] = None) -> "MlpScore":
        return MlpScore(
            self.shape, self.widths, self.schedule, theta,
            n_classes=self.n_classes, n_freq=self.n_freq, seed=self.seed,
            loss_trace=loss_trace,
            training_steps=self.training_steps if training_steps is None else training_steps,
        )

    @property
    def dims(self) -> List[Tuple[int, int]]:
        return self.layer_dims(self.dim, self.widths, self.n_classes, self.n_freq)

    @property
    def param_count(self) -> int:
        return sum(a * b + b for a, b in self.dims)

    def unpack(self, theta) -> List[Tuple]:
        """Slice θ (array or traced) into per-layer (W, b)"""
        layers, offset = [], 0
        for d_in, d_out in self.dims:
            W = ops.reshape(theta[offset:offset + d_in * d_out], (d_in, d_out))
            offset += d_in * d_out
            b = theta[offset:offset + d_out]
            offset += d_out
            layers.append((W, b))
        return layers

    # ------------------------------------------------------------------
    # evaluation
    # ------------------------------------------------------------------

    def features(self, t: np.ndarray, labels: Optional[np.ndarray]) -> np.ndarray:
        """Constant per-row features: time embedding and one-hot condition"""
        t = np.asarray(t, dtype=np.float64)
        tau = t / self.schedule.T
        cols = []
        for k in range(1, self.n_freq + 1):
            cols.append(np.sin(k * math.pi * tau))
            cols.append(np.cos(k * math.pi * tau))
        onehot = np.zeros((t.size, self.n_classes))
        if labels is not None and self.n_classes:
            labels = np.asarray(labels)
            known = labels >= 0
            onehot[np.arange(t.size)[known], labels[known]] = 1.0
        feats = np.column_stack(cols) if cols else np.zeros((t.size, 0))
        return np.concatenate([feats, onehot], axis=1)

    def forward(self, theta, Z, t: np.ndarray, labels: Optional[np.ndarray] = None):
        """Batched network output for rows Z (B, dim)"""
        feats = self.features(t, labels)
        X = ops.concat([Z, feats], axis=1) if feats.shape[1] else Z
        layers = self.unpack(theta)
        for i, (W, b) in enumerate(layers):
            X = ops.add(ops.matmul(X, W), b)
            if i < len(layers) - 1:
                X = ops.tanh(X)
        return X

    def score_expr(self, z, t: int, c: Condition = None):
        labels = None if c is None else np.array([c])
        out = self.forward(self.theta, ops.reshape(z, (1, self.dim)), np.array([t]), labels)
        return ops.reshape(out, self.shape)

    def describe(self) -> Dict:
        info = super().describe()
        info.update({"kind": "mlp", "widths": list(self.widths), "seed": self.seed, "training_steps": self.training_steps})
        return info

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    def save(self, directory: Union[str, Path]) -> Path:
        """Write one raw tensor per weight plus manifest.yaml"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        names = []
        for i, (W, b) in enumerate(self.unpack(self.theta)):
            for name, arr in ((f"W{i}", W), (f"b{i}", b)):
                FileHandler.write_tensor(directory / name, arr)
                names.append(name)

        manifest = {
            "kind": "mlp",
            "shape": list(self.shape),
            "widths": list(self.widths),
            "n_classes": self.n_classes,
            "n_freq": self.n_freq,
            "seed": self.seed,
            "schedule_id": self.schedule.schedule_id,
            "training_steps": self.training_steps,
            "weights": names,
        }
        ConfigValidator.validate(manifest, "model_manifest")
        FileHandler.save_to_yaml(manifest, directory / "manifest.yaml")
        logger.info("model_saved", directory=str(directory), params=self.param_count)
        return directory / "manifest.yaml"

    @classmethod
    def load(cls, directory: Union[str, Path], schedule: NoiseSchedule) -> "MlpScore":
        """
        Load a model written by save

        Raises:
            ScoreModelError: On a manifest that fails validation or a schedule mismatch
        """
        directory = Path(directory)
        manifest = FileHandler.load_file(directory / "manifest.yaml")
        try:
            ConfigValidator.validate(manifest, "model_manifest")
        except ValidationError as e:
            raise ScoreModelError(f"invalid model manifest in {directory}: {e}") from e
        if manifest["schedule_id"] != schedule.schedule_id:
            raise ScoreModelError(
                f"model trained for schedule {manifest['schedule_id']}, got {schedule.schedule_id}"
            )

        theta = np.concatenate([FileHandler.read_tensor(directory / name).ravel() for name in manifest["weights"]])
        model = cls(
            manifest["shape"], manifest["widths"], schedule, theta,
            n_classes=manifest["n_classes"], n_freq=manifest["n_freq"], seed=manifest["seed"],
            training_steps=manifest.get("training_steps", 0),
        )
        logger.info("model_loaded", directory=str(directory), params=model.param_count)
        return model


# =========================================================================
# DENOISING SCORE MATCHING
# =========================================================================

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def dsm_train(
    init: MlpScore,
    dataset: Union[np.ndarray, Sequence[np.ndarray]],
    sched: NoiseSchedule,
    steps: int,
    lr: float,
    seed: int,
    batch_size: int = 64,
    labels: Optional[Sequence[int]] = None,
    label_dropout: float = 0.1,
) -> MlpScore:
    """
    Train by denoising score matching with Adam

    Each step draws (z0, t, ε), forms z_t by forward noising and regresses
    the network toward −ε/sqrt(1−ᾱ_t) with weight (1−ᾱ_t).

    Args:
        init: Starting model (returned unchanged when steps == 0)
        dataset: Clean samples, each shaped like the model
        sched: Noise schedule used for noising
        steps: Optimizer iterations
        lr: Adam learning rate
        seed: Seeds every random draw
        batch_size: Rows per step
        labels: Optional class label per sample, for conditional models
        label_dropout: Fraction of labelled rows trained unconditionally

    Returns:
        New MlpScore carrying the loss trace

    Raises:
        TrainingDivergedError: Loss or gradient becomes non-finite
    """
    if steps < 0 or lr <= 0.0:
        raise ScoreModelError(f"need steps >= 0 and lr > 0, got steps={steps}, lr={lr}")
    data = np.asarray(dataset, dtype=np.float64)
    if data.shape[0] == 0:
        raise ScoreModelError("dataset is empty")
    if steps == 0:
        return init

    data = data.reshape(data.shape[0], init.dim)
    label_arr = None if labels is None else np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)

    theta = np.array(init.theta)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    trace: List[float] = []

    logger.info("dsm_training_started", steps=steps, lr=lr, seed=seed, samples=data.shape[0], params=theta.size)

    for step in range(1, steps + 1):
        idx = rng.integers(0, data.shape[0], size=batch_size)
        t = rng.integers(1, sched.T + 1, size=batch_size)
        eps = rng.standard_normal((batch_size, init.dim))
        ab = sched.alpha_bar[t - 1][:, None]

        z_t = np.sqrt(ab) * data[idx] + np.sqrt(1.0 - ab) * eps
        target = -eps / np.sqrt(1.0 - ab)
        weight = 1.0 - ab

        batch_labels = None
        if label_arr is not None:
            batch_labels = label_arr[idx].copy()
            batch_labels[rng.random(batch_size) < label_dropout] = -1

        def loss_fn(th):
            r = ops.sub(init.forward(th, z_t, t, batch_labels), target)
            return ops.mul(ops.reduce_sum(ops.mul(ops.mul(r, r), weight)), 1.0 / batch_size)

        loss, g = value_and_grad(DifferentiableFn(loss_fn, [theta.shape], name="dsm_loss"), theta)
        trace.append(loss)

        if not np.isfinite(loss) or not np.all(np.isfinite(g)):
            logger.error("dsm_training_diverged", step=step, loss=loss)
            raise TrainingDivergedError(f"denoising score matching diverged at step {step}", trace)

        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g
        m_hat = m / (1.0 - ADAM_BETA1 ** step)
        v_hat = v / (1.0 - ADAM_BETA2 ** step)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

    logger.info("dsm_training_completed", steps=steps, final_loss=trace[-1])
    return init.with_theta(theta, loss_trace=trace, training_steps=init.training_steps + steps)


# =========================================================================
# FACTORY
# =========================================================================

class ScoreModelFactory:
    """Build score models from flat specs ({'kind': ..., ...})"""

    REGISTRY: Dict[str, Callable[[Dict, NoiseSchedule], ScoreModel]] = {}

    @classmethod
    def register(cls, kind: str):
        """
        Decorator registering a builder for kind.
        Usage: @ScoreModelFactory.register("my_kind")
        """
        def wrap(builder):
            cls.REGISTRY[kind] = builder
            return builder
        return wrap

    @classmethod
    def create(cls, spec: Dict, schedule: NoiseSchedule) -> ScoreModel:
        """
        Create a model from spec

        Raises:
            ScoreModelError: Unknown kind or invalid parameters
        """
        kind = spec.get("kind")
        if kind not in cls.REGISTRY:
            supported = ", ".join(sorted(cls.REGISTRY))
            raise ScoreModelError(f"Unsupported score model: {kind}. Supported kinds: {supported}")
        try:
            model = cls.REGISTRY[kind](spec, schedule)
        except (KeyError, TypeError, ValueError) as e:
            raise ScoreModelError(f"invalid spec for score model '{kind}': {e}") from e
        logger.debug("score_model_created", kind=kind, shape=list(model.shape))
        return model

    @classmethod
    def get_supported_kinds(cls) -> List[str]:
        return sorted(cls.REGISTRY)


@ScoreModelFactory.register("unit_gaussian")
def _build_unit_gaussian(spec: Dict, schedule: NoiseSchedule) -> ScoreModel:
    return unit_gaussian(spec.get("shape", [spec.get("dim", 1)]), schedule)


@ScoreModelFactory.register("gaussian")
def _build_gaussian(spec: Dict, schedule: NoiseSchedule) -> ScoreModel:
    return gaussian_score(np.asarray(spec["mean"], dtype=np.float64), np.asarray(spec["variance"], dtype=np.float64), schedule)


@ScoreModelFactory.register("mixture")
def _build_mixture(spec: Dict, schedule: NoiseSchedule) -> ScoreModel:
    return GaussianMixtureScore(spec["weights"], np.asarray(spec["means"]), np.asarray(spec["variances"]), schedule)


@ScoreModelFactory.register("templates")
def _build_templates(spec: Dict, schedule: NoiseSchedule) -> ScoreModel:
    return template_mixture(
        schedule,
        n_classes=int(spec.get("n_classes", 3)),
        height=int(spec.get("height", 16)),
        width=int(spec.get("width", 16)),
        variance=float(spec.get("variance", 0.01)),
    )


@ScoreModelFactory.register("anisotropic")
def _build_anisotropic(spec: Dict, schedule: NoiseSchedule) -> ScoreModel:
    return anisotropic_mixture(
        schedule,
        dim=int(spec.get("dim", 16)),
        n_components=int(spec.get("n_components", 2)),
        separation=float(spec.get("separation", 8.0)),
        var_high=float(spec.get("var_high", 1.0)),
        var_low=float(spec.get("var_low", 0.01)),
    )


@ScoreModelFactory.register("mlp")
def _build_mlp(spec: Dict, schedule: NoiseSchedule) -> ScoreModel:
    if "path" in spec:
        return MlpScore.load(spec["path"], schedule)
    return MlpScore.init(
        spec["shape"],
        spec.get("widths", [32]),
        schedule,
        n_classes=int(spec.get("n_classes", 0)),
        n_freq=int(spec.get("n_freq", 4)),
        seed=int(spec.get("seed", 42)),
    )
