"""
advgen - Command Line Interface
Subcommands: schedule, sample, srs, attack, compare, ensemble, spectrum, eval-mrsr.

Settings come from an optional key-value --config file merged with flags
(flags win); all randomness derives from the single --seed. Exit codes:
0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from attack.errors import PipelineError, ReportError, SaliencyError, VictimError
from attack.pipeline import (
    attack_victim,
    prepare_attack,
    run_attack,
    run_ensemble,
    run_guidance_comparison,
    srs_config,
    summarize_ensemble,
)
from attack.reporting import fmt, write_attack_report, write_comparison_report, write_spectrum_report, write_srs_report
from attack.saliency import salient_region_selection
from attack.victim import mrsr, mrsr_abs
from config.attack_config import AttackConfig, derive_seed, load_config
from diffkernel.errors import DiffKernelError
from diffusion.errors import GuidanceError, SamplingError, ScheduleError, ScoreModelError, SpectraError
from diffusion.guidance import GuidanceHook, QuadraticEnergy
from diffusion.sampler import GUIDANCE_MODE_NAMES, DdimSampler, SamplerConfig, sample
from diffusion.schedule import schedule_to_text
from diffusion.score_models import ScoreModelFactory
from diffusion.spectra import extremal_singular, full_svd, run_injection_study, summarize_injection
from utils.file_handler import FileHandler
from utils.logger import get_logger
from utils.validator import ValidationError

logger = get_logger("cli")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

DOMAIN_ERRORS = (
    ValidationError,
    ScheduleError,
    ScoreModelError,
    SamplingError,
    GuidanceError,
    SpectraError,
    VictimError,
    SaliencyError,
    PipelineError,
    ReportError,
    DiffKernelError,
    OSError,
    ValueError,
)


class UsageError(Exception):
    """Bad flag value detected after parsing"""
    pass


def parse_seeds(text: str) -> List[int]:
    """'0..99' (inclusive range) or '1,4,7'"""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise UsageError(f"empty seed range '{text}'")
            return list(range(lo, hi + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as e:
        raise UsageError(f"invalid seed list '{text}'") from e


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got '{text}'")


# =========================================================================
# PARSER
# =========================================================================

def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="Key-value config file (YAML)")
    p.add_argument("--seed", type=int, help="Run seed; every random stream derives from it")
    p.add_argument("--output-dir", dest="output_dir", help="Report directory")
    p.add_argument("--schedule-kind", dest="schedule_kind", choices=["linear_beta", "cosine"])
    p.add_argument("--T", dest="T", type=int, help="Diffusion steps")
    p.add_argument("--eta-ddim", dest="eta_ddim", type=float)
    p.add_argument("--cosine-offset", dest="cosine_offset", type=float, help="Cosine schedule offset s")
    p.add_argument("--model-kind", dest="model_kind", choices=["templates", "unit_gaussian", "anisotropic", "mlp"])
    p.add_argument("--model-path", dest="model_path", help="Saved MLP score model directory")


def _victim(p: argparse.ArgumentParser):
    p.add_argument("--victim-kind", dest="victim_kind", choices=["patch_pool", "tiny_conv"])
    p.add_argument("--victim-kernel", dest="victim_kernel", type=int)
    p.add_argument("--victim-offset", dest="victim_offset", type=float)
    p.add_argument("--victim-gain", dest="victim_gain", type=float)
    p.add_argument("--planted", type=_bool)


def _srs(p: argparse.ArgumentParser):
    p.add_argument("--image", dest="image_path", help="Scene image (PGM/PPM); default: a toy scene")
    p.add_argument("--mask", dest="mask_path", help="Target mask (PGM)")
    p.add_argument("--k", type=int)
    p.add_argument("--srs-iterations", dest="srs_iterations", type=int)
    p.add_argument("--srs-step", dest="srs_step", type=float)
    p.add_argument("--selection", choices=["srs", "random"])


def _guidance(p: argparse.ArgumentParser):
    p.add_argument("--mode", choices=["none", "energy_dps", "mpgd", "jvpg"])
    p.add_argument("--gamma", type=float)
    p.add_argument("--lam", type=float, help="Depth scale target λ")
    p.add_argument("--orient-gamma", dest="orient_gamma", type=_bool)
    p.add_argument("--linearize-at", dest="linearize_at", choices=["current", "shifted"])
    p.add_argument("--norm-match", dest="norm_match", type=_bool)
    p.add_argument("--mask-reproject", dest="mask_reproject", type=_bool)
    p.add_argument("--quantize-roundtrip", dest="quantize_roundtrip", type=_bool)
    p.add_argument("--multi-region", dest="multi_region", choices=["joint", "sequential"])
    p.add_argument("--label", type=int, help="Class condition (-1: scene label)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advgen", description="Guided-diffusion adversarial-object laboratory")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("schedule", help="Print the noise schedule table")
    _common(p)

    p = sub.add_parser("sample", help="Draw DDIM trajectories")
    _common(p)
    _guidance(p)
    p.add_argument("--n", type=int, default=1, help="Number of trajectories")
    p.add_argument("--target-value", dest="target_value", type=float, default=0.5, help="Quadratic energy target for guided modes")

    p = sub.add_parser("srs", help="Salient region selection")
    _common(p)
    _victim(p)
    _srs(p)

    p = sub.add_parser("attack", help="End-to-end attack on one scene")
    _common(p)
    _victim(p)
    _srs(p)
    _guidance(p)

    p = sub.add_parser("compare", help="Compare guidance modes over shared seeds")
    _common(p)
    _victim(p)
    _srs(p)
    _guidance(p)
    p.add_argument("--modes", default="jvpg,energy_dps,mpgd", help="Comma-separated guidance modes, each optionally mode=γ")
    p.add_argument("--seeds", default="0..9", help="'a..b' or comma list")

    p = sub.add_parser("ensemble", help="SRS vs random selection over the toy ensemble")
    _common(p)
    _victim(p)
    _srs(p)
    _guidance(p)
    p.add_argument("--scenes", type=int)

    p = sub.add_parser("spectrum", help="Score Jacobian spectrum and direction injection")
    _common(p)
    p.add_argument("--label", type=int)
    p.add_argument("--t", dest="t_eval", type=int, help="Step of the linearization (default T//2)")
    p.add_argument("--magnitude", type=float, default=1.0)
    p.add_argument("--seeds", default="0..99", help="Injection seeds, 'a..b' or comma list")
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--full", action="store_true", help="Also assemble the full Jacobian SVD")

    p = sub.add_parser("eval-mrsr", help="Mean relative shift ratio of an adversarial image")
    p.add_argument("--config", help="Config of the attack run (its config.yaml)")
    p.add_argument("--seed", type=int, help="Attack seed; scoring uses that attack's victim")
    _victim(p)
    p.add_argument("--image", dest="image_path", required=True, help="Original image")
    p.add_argument("--adv", dest="adv_path", required=True, help="Adversarial image")
    p.add_argument("--mask", dest="mask_path", required=True, help="Target mask")
    p.add_argument("--quantize-roundtrip", dest="quantize_roundtrip", type=_bool)
    p.add_argument("--absolute", action="store_true", help="Report the mean-absolute variant too")
    return parser


CLI_ONLY = {"command", "config", "n", "target_value", "modes", "seeds", "t_eval", "magnitude", "iters", "tol", "full", "adv_path", "absolute"}
# eval-mrsr takes --image/--mask as files to score, not as the attack scene
EVAL_MRSR_KEYS = ("seed", "victim_kind", "victim_kernel", "victim_offset", "victim_gain", "planted", "quantize_roundtrip")


def config_from_args(args: argparse.Namespace) -> AttackConfig:
    overrides: Dict = {k: v for k, v in vars(args).items() if k not in CLI_ONLY}
    return load_config(args.config, overrides)


# =========================================================================
# COMMANDS
# =========================================================================

def cmd_schedule(args, cfg: AttackConfig) -> int:
    sys.stdout.write(schedule_to_text(cfg.schedule.build()))
    return EXIT_OK


def cmd_sample(args, cfg: AttackConfig) -> int:
    schedule = cfg.schedule.build()
    model = ScoreModelFactory.create(cfg.model.to_factory_spec(cfg.scene), schedule)
    c = (cfg.label if cfg.label >= 0 else 0) if model.n_classes > 0 else None
    g = cfg.guidance
    energy = QuadraticEnergy(np.full(model.shape, args.target_value)) if g.mode != "none" else None
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.n):
        scfg = SamplerConfig(schedule=schedule, mode=g.mode, gamma=g.gamma, seed=derive_seed(cfg.seed, "sample", i))
        hook = GuidanceHook(g.mode, energy, g.gamma, g.orient_gamma, g.linearize_at, g.norm_match)
        traj = sample(model, c, scfg, guidance=hook)
        traj.write(out, prefix=f"sample_{i}")
        if traj.terminal.ndim == 3:
            FileHandler.write_image(out / f"sample_{i}.pgm", traj.terminal)
    FileHandler.save_to_yaml(cfg.to_dict(), out / "config.yaml")
    return EXIT_OK


def cmd_srs(args, cfg: AttackConfig) -> int:
    setup = prepare_attack(cfg)
    result = salient_region_selection(setup.x, setup.mask_t, setup.victim, srs_config(cfg))
    write_srs_report(result, cfg.output_dir)
    sys.stdout.write("topk: " + " ".join(str(i) for i in result.topk) + "\n")
    return EXIT_OK


def cmd_attack(args, cfg: AttackConfig) -> int:
    report = run_attack(cfg)
    write_attack_report(report, cfg.output_dir)
    for j, xi in report.xi_r_by_k().items():
        sys.stdout.write(f"xi_r[j={j}]: {fmt(xi)}\n")
    if report.errors:
        first = report.errors[0]
        sys.stderr.write(f"advgen: error: {first['stage']}: {first['message']}\n")
        return EXIT_FAILURE
    return EXIT_OK


def parse_modes(text: str) -> Tuple[List[str], Dict[str, float]]:
    """'jvpg=-0.5,energy_dps' → (['jvpg', 'energy_dps'], {'jvpg': -0.5})"""
    modes: List[str] = []
    gammas: Dict[str, float] = {}
    for token in (t.strip() for t in text.split(",")):
        if not token:
            continue
        mode, _, gamma = token.partition("=")
        mode = mode.strip()
        if mode not in GUIDANCE_MODE_NAMES or mode in modes:
            raise UsageError(f"invalid --modes '{text}'")
        modes.append(mode)
        if gamma:
            try:
                gammas[mode] = float(gamma)
            except ValueError as e:
                raise UsageError(f"invalid gamma in --modes '{text}'") from e
    if not modes:
        raise UsageError(f"invalid --modes '{text}'")
    return modes, gammas


def cmd_compare(args, cfg: AttackConfig) -> int:
    modes, gammas = parse_modes(args.modes)
    comparison = run_guidance_comparison(cfg, modes, parse_seeds(args.seeds), gammas=gammas)
    write_comparison_report(comparison, cfg.output_dir)
    for row in comparison.summary().itertuples(index=False):
        sys.stdout.write(f"{row.mode}: mean_xi_r={fmt(row.mean_xi_r)} mean_log_density={fmt(row.mean_log_density)}\n")
    return EXIT_FAILURE if comparison.errors else EXIT_OK


def cmd_ensemble(args, cfg: AttackConfig) -> int:
    frame = run_ensemble(cfg)
    summary = summarize_ensemble(frame)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    FileHandler.write_csv(frame, out / "ensemble.csv")
    FileHandler.write_csv(summary, out / "ensemble_summary.csv")
    FileHandler.save_to_yaml(cfg.to_dict(), out / "config.yaml")
    for row in summary.itertuples(index=False):
        sys.stdout.write(f"{row.selection} j={row.j}: mean_xi_r={fmt(row.mean_xi_r)} control={fmt(row.mean_control_xi_r)}\n")
    return EXIT_OK


def cmd_spectrum(args, cfg: AttackConfig) -> int:
    schedule = cfg.schedule.build()
    spec = cfg.model.to_factory_spec(cfg.scene)
    model = ScoreModelFactory.create(spec, schedule)
    c = cfg.label if (model.n_classes > 0 and cfg.label >= 0) else None
    t = max(1, schedule.T // 2) if args.t_eval is None else args.t_eval

    scfg = SamplerConfig(schedule=schedule, seed=derive_seed(cfg.seed, "spectrum"))
    sampler = DdimSampler(model, c, scfg)
    z_t = sampler.run_segment(sampler.start(), t).z

    spectra = {
        "top": extremal_singular(model, z_t, t, c, "top", iters=args.iters, tol=args.tol, seed=cfg.seed),
        "bottom": extremal_singular(model, z_t, t, c, "bottom", iters=args.iters, tol=args.tol, seed=cfg.seed),
    }
    if args.full:
        spectra["full"] = full_svd(model, z_t, t, c)

    injection = summary = None
    if model.analytic:
        injection = run_injection_study(model, c, scfg, parse_seeds(args.seeds), args.magnitude, t_inject=t, iters=args.iters, tol=args.tol)
        summary = summarize_injection(injection)
    write_spectrum_report(spectra, cfg.output_dir, injection, summary)
    sys.stdout.write(f"sigma_max: {fmt(spectra['top'].sigma)}\nsigma_min: {fmt(spectra['bottom'].sigma)}\n")
    return EXIT_OK


def cmd_eval_mrsr(args, cfg: AttackConfig) -> int:
    x = FileHandler.read_image(args.image_path)
    z = FileHandler.read_image(args.adv_path)
    mask_t = FileHandler.read_mask(args.mask_path)
    if x.shape != z.shape:
        raise VictimError(f"image shapes differ: {x.shape} vs {z.shape}")
    victim = attack_victim(cfg, x.shape)
    xi = mrsr(victim, x, z, mask_t, quantize=cfg.quantize_roundtrip)
    sys.stdout.write(fmt(xi) + "\n")
    if args.absolute:
        sys.stdout.write(fmt(mrsr_abs(victim, x, z, mask_t, quantize=cfg.quantize_roundtrip)) + "\n")
    return EXIT_OK


COMMANDS = {
    "schedule": cmd_schedule,
    "sample": cmd_sample,
    "srs": cmd_srs,
    "attack": cmd_attack,
    "compare": cmd_compare,
    "ensemble": cmd_ensemble,
    "spectrum": cmd_spectrum,
    "eval-mrsr": cmd_eval_mrsr,
}


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns the process exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "eval-mrsr":
            cfg = load_config(args.config, {k: getattr(args, k) for k in EVAL_MRSR_KEYS})
        else:
            cfg = config_from_args(args)
        logger.info("command_started", command=args.command, seed=cfg.seed)
        code = COMMANDS[args.command](args, cfg)
    except UsageError as e:
        sys.stderr.write(f"advgen: usage error: {e}\n")
        return EXIT_USAGE
    except DOMAIN_ERRORS as e:
        logger.error("command_failed", command=args.command, error_type=type(e).__name__, error=str(e))
        sys.stderr.write(f"advgen: error: {type(e).__name__}: {e}\n")
        return EXIT_FAILURE
    logger.info("command_completed", command=args.command, exit_code=code)
    return code


if __name__ == "__main__":
    sys.exit(cli_main())
