"""
Attack Pipeline
Salient region selection, guided generation of adversarial objects in the
selected regions, compositing, MRSR evaluation with an unguided control,
guidance-mode comparison and ensemble aggregation.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from attack.errors import PipelineError, SaliencyError, VictimError
from attack.saliency import PatchGrid, SaliencyResult, SrsConfig, partition_patches, random_regions, salient_region_selection
from attack.scenes import ToyScene, make_toy_scene
from attack.victim import VictimModel, check_mask, compose_scene, make_victim, mrsr, mrsr_abs
from config.attack_config import AttackConfig, derive_seed
from diffkernel.errors import DiffKernelError
from diffusion.errors import GuidanceError, SamplingError, ScheduleError, ScoreModelError
from diffusion.guidance import AdversarialEnergy, GuidanceHook
from diffusion.sampler import InpaintTarget, SamplerConfig, sample
from diffusion.schedule import NoiseSchedule
from diffusion.score_models import Condition, ScoreModel, ScoreModelFactory
from utils.file_handler import FileHandler
from utils.logger import get_logger
from utils.performance import PerformanceTracker

logger = get_logger("pipeline")

RUN_FAILURES = (SamplingError, GuidanceError, VictimError, DiffKernelError)


# =========================================================================
# REPORT TYPES
# =========================================================================

@dataclass
class RunOutcome:
    """One generation run (guided or control) for one region count"""
    label: str
    z: np.ndarray
    A: np.ndarray
    depth: np.ndarray
    xi_r: float
    xi_r_abs: float
    log_density: float
    steps: pd.DataFrame


@dataclass
class RegionResult:
    j: int
    mask_a: np.ndarray
    guided: Optional[RunOutcome] = None
    control: Optional[RunOutcome] = None


@dataclass
class AttackReport:
    """Everything an attack produced; files are written by attack.reporting"""
    config: Dict
    seed: int
    mode: str
    selection: str
    multi_region: str
    scene: Dict = field(default_factory=dict)
    x: Optional[np.ndarray] = None
    mask_t: Optional[np.ndarray] = None
    depth_before: Optional[np.ndarray] = None
    grid: Optional[PatchGrid] = None
    saliency: Optional[SaliencyResult] = None
    selected: List[int] = field(default_factory=list)
    regions: List[RegionResult] = field(default_factory=list)
    errors: List[Dict] = field(default_factory=list)
    wall_clock: float = float("nan")

    @property
    def ok(self) -> bool:
        return not self.errors

    def xi_r_by_k(self, control: bool = False) -> Dict[int, float]:
        out = {}
        for r in self.regions:
            run = r.control if control else r.guided
            if run is not None:
                out[r.j] = run.xi_r
        return out

    @property
    def final(self) -> Optional[RunOutcome]:
        for r in reversed(self.regions):
            if r.guided is not None:
                return r.guided
        return None

    def mrsr_frame(self) -> pd.DataFrame:
        rows = []
        for r in self.regions:
            row = {"j": r.j}
            for name, run in (("guided", r.guided), ("control", r.control)):
                row[f"{name}_xi_r"] = run.xi_r if run else float("nan")
                row[f"{name}_xi_r_abs"] = run.xi_r_abs if run else float("nan")
                row[f"{name}_log_density"] = run.log_density if run else float("nan")
            rows.append(row)
        columns = ["j"] + [f"{n}_{m}" for n in ("guided", "control") for m in ("xi_r", "xi_r_abs", "log_density")]
        return pd.DataFrame(rows, columns=columns)

    def energy_frame(self) -> pd.DataFrame:
        frames = []
        for r in self.regions:
            for run in (r.guided, r.control):
                if run is None:
                    continue
                steps = run.steps.copy()
                steps.insert(0, "run", run.label)
                steps.insert(0, "j", r.j)
                frames.append(steps)
        if not frames:
            return pd.DataFrame(columns=["j", "run", "t", "energy", "z_norm", "guidance_norm", "delta_norm", "jdelta_norm"])
        return pd.concat(frames, ignore_index=True)

    def record_error(self, stage: str, error: Exception):
        self.errors.append({"stage": stage, "type": type(error).__name__, "message": str(error)})
        logger.error("attack_stage_failed", stage=stage, error_type=type(error).__name__, error=str(error), seed=self.seed)


# =========================================================================
# SETUP
# =========================================================================

@dataclass
class AttackSetup:
    schedule: NoiseSchedule
    model: ScoreModel
    condition: Condition
    x: np.ndarray
    mask_t: np.ndarray
    victim: VictimModel
    scene: Dict


def srs_config(cfg: AttackConfig) -> SrsConfig:
    s = cfg.srs
    return SrsConfig(
        iterations=s.iterations,
        step=s.step,
        k=cfg.k,
        clamp=s.clamp,
        c_side=s.c_side,
        s_min=s.s_min,
        s_max=s.s_max or None,
        start_scale=s.start_scale,
        two_sided=s.two_sided,
        seed=derive_seed(cfg.seed, "srs"),
    )


def build_model(cfg: AttackConfig, schedule: NoiseSchedule) -> ScoreModel:
    return ScoreModelFactory.create(cfg.model.to_factory_spec(cfg.scene), schedule)


def toy_scene_for(cfg: AttackConfig) -> ToyScene:
    """The toy scene (and its planted victim) an attack with cfg runs on"""
    return make_toy_scene(derive_seed(cfg.seed, "scene"), cfg.scene, cfg.victim)


def image_victim(cfg: AttackConfig, shape: Tuple[int, int, int]) -> VictimModel:
    """Unplanted victim for a scene read from an image file"""
    return make_victim(
        cfg.victim.kind,
        seed=derive_seed(cfg.seed, "victim"),
        channels=shape[0],
        height=shape[1],
        width=shape[2],
        kernel=cfg.victim.kernel,
        offset=cfg.victim.offset,
        gain=cfg.victim.gain,
    )


def attack_victim(cfg: AttackConfig, shape: Tuple[int, int, int]) -> VictimModel:
    """
    The victim an attack with cfg scores against

    Image scenes get the unplanted image victim, toy scenes the planted
    victim of toy_scene_for(cfg).

    Raises:
        VictimError: shape differs from the toy scene geometry
    """
    if cfg.image_path:
        return image_victim(cfg, shape)
    victim = toy_scene_for(cfg).victim
    if tuple(shape) != victim.image_shape:
        raise VictimError(f"images of shape {tuple(shape)} do not match the toy scene {victim.image_shape}")
    return victim


def prepare_attack(cfg: AttackConfig, toy: Optional[ToyScene] = None) -> AttackSetup:
    """
    Schedule, score model, scene and victim for one attack

    A configured image_path/mask_path pair replaces the toy scene; its victim
    is unplanted.

    Raises:
        PipelineError: Model and scene shapes disagree
    """
    schedule = cfg.schedule.build()
    model = build_model(cfg, schedule)

    if cfg.image_path:
        x = FileHandler.read_image(cfg.image_path)
        mask_t = check_mask(FileHandler.read_mask(cfg.mask_path), "target", x.shape[1:])
        victim = image_victim(cfg, x.shape)
        label = cfg.label if cfg.label >= 0 else None
        scene = {"source": "image", "image_path": cfg.image_path, "mask_path": cfg.mask_path}
    else:
        toy = toy or toy_scene_for(cfg)
        x, mask_t, victim = toy.x, toy.mask_t, toy.victim
        label = cfg.label if cfg.label >= 0 else toy.label
        scene = {"source": "toy", **toy.describe()}

    if tuple(model.shape) != tuple(x.shape):
        raise PipelineError(f"score model shape {tuple(model.shape)} differs from the scene {tuple(x.shape)}")
    condition = label if model.n_classes > 0 else None
    return AttackSetup(schedule, model, condition, x, mask_t, victim, scene)


def select_regions(setup: AttackSetup, cfg: AttackConfig) -> Tuple[PatchGrid, Optional[SaliencyResult], List[int]]:
    """(grid, saliency or None, selected indices in order)"""
    scfg = srs_config(cfg)
    if cfg.selection == "srs":
        result = salient_region_selection(setup.x, setup.mask_t, setup.victim, scfg)
        return result.grid, result, list(result.topk)
    grid = partition_patches(setup.x, setup.mask_t, setup.victim, scfg)
    if len(grid) == 0:
        raise SaliencyError("no candidates: every patch overlaps the target mask")
    return grid, None, random_regions(grid, cfg.k, derive_seed(cfg.seed, "random_regions"))


# =========================================================================
# GENERATION
# =========================================================================

def generate_object(
    setup: AttackSetup,
    cfg: AttackConfig,
    background: np.ndarray,
    mask_a: np.ndarray,
    seed: int,
    guided: bool = True,
) -> RunOutcome:
    """
    One inpainting run over M_A with the adversarial energy

    The control run (guided False) samples with γ = 0 on the same noise and
    still records the energy trace.
    """
    g = cfg.guidance
    energy = AdversarialEnergy(setup.victim, setup.x, setup.mask_t, lam=g.lam, mask_a=mask_a, background=background)
    mode, gamma = (g.mode, g.gamma) if guided else ("none", 0.0)
    hook = GuidanceHook(
        mode=mode,
        energy=energy,
        gamma=gamma,
        orient_gamma=g.orient_gamma,
        linearize_at=g.linearize_at,
        norm_match=g.norm_match,
    )
    scfg = SamplerConfig(schedule=setup.schedule, mode=mode, gamma=gamma, seed=seed, mask_reproject=cfg.mask_reproject)
    traj = sample(setup.model, setup.condition, scfg, guidance=hook, inpaint=InpaintTarget(background, mask_a))

    # the printed object lives in pixel range
    A = np.clip(traj.terminal, 0.0, 1.0) * mask_a
    z = np.asarray(compose_scene(background, A, mask_a))
    log_density = setup.model.log_density(z, setup.condition) if setup.model.analytic else float("nan")
    return RunOutcome(
        label="guided" if guided else "control",
        z=z,
        A=A,
        depth=setup.victim.depth(z),
        xi_r=mrsr(setup.victim, setup.x, z, setup.mask_t, quantize=cfg.quantize_roundtrip),
        xi_r_abs=mrsr_abs(setup.victim, setup.x, z, setup.mask_t, quantize=cfg.quantize_roundtrip),
        log_density=float(log_density),
        steps=traj.to_frame(),
    )


def _check_background(x: np.ndarray, z: np.ndarray, mask_a: np.ndarray, tol: float = 1e-9):
    if np.max(np.abs((z - x) * (1.0 - mask_a))) > tol:
        raise PipelineError("adversarial image alters the background outside M_A")


def _generate_regions(setup: AttackSetup, cfg: AttackConfig, grid: PatchGrid, selected: List[int], report: AttackReport):
    joint = cfg.multi_region == "joint"
    union = np.zeros_like(setup.mask_t)
    backgrounds = {"guided": setup.x, "control": setup.x}

    for j, idx in enumerate(selected, start=1):
        region = grid.mask(idx)
        union = np.maximum(union, region)
        result = RegionResult(j=j, mask_a=union.copy())
        for guided in (True, False):
            label = "guided" if guided else "control"
            if joint:
                background, mask_a, seed = setup.x, union, derive_seed(cfg.seed, "sample")
            else:
                background, mask_a, seed = backgrounds[label], region, derive_seed(cfg.seed, "sample", j)
            if background is None:
                continue
            try:
                run = generate_object(setup, cfg, background, mask_a, seed, guided=guided)
                _check_background(setup.x, run.z, union)
            except RUN_FAILURES + (PipelineError,) as e:
                report.record_error(f"region_{j}_{label}", e)
                # a broken sequential chain cannot continue
                backgrounds[label] = None
                continue
            backgrounds[label] = run.z
            setattr(result, label, run)
            logger.info("region_generated", j=j, run=label, xi_r=run.xi_r, mode=cfg.guidance.mode if guided else "none")
        report.regions.append(result)


def _attack_body(
    report: AttackReport,
    cfg: AttackConfig,
    toy: Optional[ToyScene],
    selection: Optional[Tuple[PatchGrid, Optional[SaliencyResult], List[int]]],
) -> int:
    """Fill report in place; returns the number of sampler steps taken"""
    try:
        setup = prepare_attack(cfg, toy)
    except (PipelineError, VictimError, ScoreModelError, ScheduleError, OSError, ValueError) as e:
        report.record_error("setup", e)
        return 0

    report.scene = setup.scene
    report.x = setup.x
    report.mask_t = setup.mask_t
    report.depth_before = setup.victim.depth(setup.x)

    try:
        grid, saliency, selected = selection or select_regions(setup, cfg)
    except (SaliencyError, VictimError) as e:
        report.record_error("selection", e)
        return 0
    report.grid, report.saliency, report.selected = grid, saliency, list(selected)

    _generate_regions(setup, cfg, grid, report.selected, report)
    return 2 * len(report.selected) * setup.schedule.T


def run_attack(
    cfg: AttackConfig,
    toy: Optional[ToyScene] = None,
    tracker: Optional[PerformanceTracker] = None,
    selection: Optional[Tuple[PatchGrid, Optional[SaliencyResult], List[int]]] = None,
) -> AttackReport:
    """
    End-to-end attack on one scene

    SRS (or random selection) picks k regions; for j = 1..k an adversarial
    object is generated over the first j regions (jointly, or region by region
    in sequential mode), composited into the scene and scored by ξ_r next to
    a γ = 0 control. Scene-level failures land in report.errors.

    Args:
        cfg: Validated configuration
        toy: Prebuilt toy scene (default: derived from cfg.seed)
        tracker: Performance tracker (default: log-directory metrics file)
        selection: Precomputed (grid, saliency, selected) to share across runs

    Returns:
        AttackReport
    """
    tracker = tracker or PerformanceTracker()
    report = AttackReport(
        config=cfg.to_dict(),
        seed=cfg.seed,
        mode=cfg.guidance.mode,
        selection=cfg.selection,
        multi_region=cfg.multi_region,
    )
    logger.info("attack_started", seed=cfg.seed, mode=cfg.guidance.mode, k=cfg.k, selection=cfg.selection)

    with tracker.track("run_attack", run_id=f"seed={cfg.seed}", mode=cfg.guidance.mode) as ctx:
        ctx["steps"] = _attack_body(report, cfg, toy, selection)

    report.wall_clock = float(ctx["duration_seconds"])
    logger.info(
        "attack_completed",
        seed=cfg.seed,
        xi_r=report.xi_r_by_k(),
        control_xi_r=report.xi_r_by_k(control=True),
        errors=len(report.errors),
    )
    return report


# =========================================================================
# COMPARISON AND ENSEMBLES
# =========================================================================

@dataclass
class ComparisonReport:
    modes: List[str]
    seeds: List[int]
    frame: pd.DataFrame
    errors: List[Dict] = field(default_factory=list)
    wall_clock: float = float("nan")

    def wide(self, value: str = "xi_r") -> pd.DataFrame:
        """Rows = modes (in request order), columns = seeds"""
        table = self.frame.pivot(index="mode", columns="seed", values=value)
        table = table.reindex(index=self.modes, columns=self.seeds)
        table.columns = [f"seed_{s}" for s in table.columns]
        return table.reset_index()

    def summary(self) -> pd.DataFrame:
        grouped = self.frame.groupby("mode", sort=False)
        out = pd.DataFrame(
            {
                "mean_xi_r": grouped["xi_r"].mean(),
                "mean_log_density": grouped["log_density"].mean(),
                "count": grouped["xi_r"].count(),
            }
        )
        return out.reindex(self.modes).reset_index()


def run_guidance_comparison(
    cfg: AttackConfig,
    modes: Sequence[str],
    seeds: Sequence[int],
    tracker: Optional[PerformanceTracker] = None,
    gammas: Optional[Mapping[str, float]] = None,
) -> ComparisonReport:
    """
    ξ_r and terminal data log-density per guidance mode over shared seeds

    Each seed fixes the scene, the region selection and the sampling noise,
    so modes are compared on paired draws. gammas overrides cfg's γ per
    mode, since the γ that descends the energy differs in sign between
    jvpg and the gradient modes.
    """
    if not modes:
        raise PipelineError("at least one guidance mode is required")
    gammas = dict(gammas or {})
    stray = sorted(set(gammas) - set(modes))
    if stray:
        raise PipelineError(f"gamma given for modes that are not compared: {', '.join(stray)}")
    tracker = tracker or PerformanceTracker()
    modes, seeds = list(modes), [int(s) for s in seeds]
    rows, errors = [], []

    with tracker.track("run_guidance_comparison", run_id=f"seed={cfg.seed}", mode=",".join(modes)) as ctx:
        for seed in seeds:
            base = cfg.with_overrides(seed=seed)
            selection = None
            try:
                setup = prepare_attack(base)
                selection = select_regions(setup, base)
            except (PipelineError, VictimError, SaliencyError, ScoreModelError) as e:
                errors.append({"seed": seed, "mode": "*", "type": type(e).__name__, "message": str(e)})
                logger.error("comparison_seed_failed", seed=seed, error=str(e))
                continue
            for mode in modes:
                run_cfg = base.with_overrides(mode=mode, gamma=gammas.get(mode, base.guidance.gamma))
                report = run_attack(run_cfg, tracker=tracker, selection=selection)
                final = report.final
                rows.append(
                    {
                        "mode": mode,
                        "seed": seed,
                        "xi_r": final.xi_r if final else float("nan"),
                        "xi_r_abs": final.xi_r_abs if final else float("nan"),
                        "log_density": final.log_density if final else float("nan"),
                    }
                )
                errors.extend({"seed": seed, "mode": mode, **e} for e in report.errors)

    frame = pd.DataFrame(rows, columns=["mode", "seed", "xi_r", "xi_r_abs", "log_density"])
    comparison = ComparisonReport(modes=modes, seeds=seeds, frame=frame, errors=errors, wall_clock=float(ctx["duration_seconds"]))
    logger.info("comparison_completed", modes=modes, seeds=len(seeds), errors=len(errors))
    return comparison


def ensemble_seeds(cfg: AttackConfig, n: Optional[int] = None) -> List[int]:
    n = cfg.scenes if n is None else n
    return [derive_seed(cfg.seed, "ensemble", i) for i in range(n)]


def run_ensemble(
    cfg: AttackConfig,
    n_scenes: Optional[int] = None,
    selections: Sequence[str] = ("srs", "random"),
    tracker: Optional[PerformanceTracker] = None,
) -> pd.DataFrame:
    """
    Long table (scene, selection, j, xi_r, control_xi_r, planted_top1) over the toy ensemble

    Each scene is attacked once per selection strategy on the same scene
    seed and sampling noise. scene_seed is the run seed of that scene: the
    echoed config of any row rebuilds the same scene and victim.
    """
    tracker = tracker or PerformanceTracker()
    rows = []
    for i, scene_seed in enumerate(ensemble_seeds(cfg, n_scenes)):
        scene_cfg = cfg.with_overrides(seed=scene_seed)
        toy = toy_scene_for(scene_cfg)
        for sel in selections:
            report = run_attack(scene_cfg.with_overrides(selection=sel), toy=toy, tracker=tracker)
            top1 = None
            if report.grid is not None and report.selected and toy.planted_box is not None:
                top1 = report.grid.boxes[report.selected[0]] == tuple(toy.planted_box)
            for r in report.regions:
                rows.append(
                    {
                        "scene": i,
                        "scene_seed": scene_seed,
                        "selection": sel,
                        "j": r.j,
                        "xi_r": r.guided.xi_r if r.guided else float("nan"),
                        "control_xi_r": r.control.xi_r if r.control else float("nan"),
                        "planted_top1": top1,
                    }
                )
    frame = pd.DataFrame(rows, columns=["scene", "scene_seed", "selection", "j", "xi_r", "control_xi_r", "planted_top1"])
    logger.info("ensemble_completed", scenes=len(set(frame["scene"])), rows=len(frame))
    return frame


def summarize_ensemble(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean ξ_r and control ξ_r per (selection, j)"""
    grouped = frame.groupby(["selection", "j"], sort=True)
    return grouped.agg(mean_xi_r=("xi_r", "mean"), mean_control_xi_r=("control_xi_r", "mean"), count=("xi_r", "count")).reset_index()
