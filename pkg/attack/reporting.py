"""
Report Writing
Byte-stable report directories for attack, srs, compare and spectrum runs,
and a loader used by the dashboard.
"""

from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from attack.errors import ReportError
from attack.pipeline import AttackReport, ComparisonReport
from attack.saliency import SaliencyResult, saliency_heatmap
from diffusion.spectra import SpectralResult
from utils.file_handler import FileHandler
from utils.logger import get_logger

logger = get_logger("reporting")

PathLike = Union[str, Path]


def fmt(value) -> str:
    """Fixed 17-significant-digit rendering for summary text"""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def _prepare(out_dir: PathLike) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ReportError(f"cannot create report directory {out}: {e}") from e
    return out


def _is_image(arr: Optional[np.ndarray]) -> bool:
    return arr is not None and arr.ndim == 3 and arr.shape[0] in (1, 3)


# =========================================================================
# ATTACK
# =========================================================================

def attack_summary(report: AttackReport) -> str:
    lines = [
        "advgen attack report",
        f"seed: {report.seed}",
        f"mode: {'mpgd-style' if report.mode == 'mpgd' else report.mode}",
        f"selection: {report.selection}",
        f"multi_region: {report.multi_region}",
        f"scene_source: {report.scene.get('source', 'unknown')}",
    ]
    if report.grid is not None:
        lines.append(f"patch_side: {report.grid.side}")
        lines.append(f"candidates: {len(report.grid)}")
        lines.append("selected: " + " ".join(str(i) for i in report.selected))
    guided, control = report.xi_r_by_k(), report.xi_r_by_k(control=True)
    for r in report.regions:
        lines.append(f"xi_r[j={r.j}]: {fmt(guided.get(r.j, float('nan')))}")
        lines.append(f"control_xi_r[j={r.j}]: {fmt(control.get(r.j, float('nan')))}")
    lines.append(f"errors: {len(report.errors)}")
    for e in report.errors:
        lines.append(f"  - {e['stage']}: {e['type']}: {e['message']}")
    return "\n".join(lines) + "\n"


def write_attack_report(report: AttackReport, out_dir: PathLike) -> Path:
    """
    Write summary.txt, config.yaml, regions.csv, mrsr.csv, energy_trace.csv,
    depth_norm.csv, raw tensors and PGM/PPM images

    Raises:
        ReportError: Output directory or a file cannot be written
    """
    out = _prepare(out_dir)
    try:
        FileHandler.write_text(attack_summary(report), out / "summary.txt")
        FileHandler.save_to_yaml(report.config, out / "config.yaml")

        if report.grid is not None:
            if report.saliency is not None:
                rows = report.saliency.to_rows()
            else:
                rows = [
                    {"index": i, "row": b[0], "col": b[1], "score": float("nan"), "objective": float("nan"), "rank": -1}
                    for i, b in enumerate(report.grid.boxes)
                ]
            chosen = {idx: order for order, idx in enumerate(report.selected, start=1)}
            for row in rows:
                row["selected"] = chosen.get(row["index"], 0)
            FileHandler.write_csv(rows, out / "regions.csv", ["index", "row", "col", "score", "objective", "rank", "selected"])
        if report.saliency is not None:
            FileHandler.write_image(out / "heatmap.pgm", saliency_heatmap(report.saliency))

        FileHandler.write_csv(report.mrsr_frame(), out / "mrsr.csv")
        FileHandler.write_csv(report.energy_frame(), out / "energy_trace.csv")

        norms: List[Dict] = []
        if report.x is not None:
            FileHandler.write_tensor(out / "x", report.x)
            FileHandler.write_mask(out / "mask_t.pgm", report.mask_t)
            if _is_image(report.x):
                FileHandler.write_image(out / ("x.ppm" if report.x.shape[0] == 3 else "x.pgm"), report.x)
        if report.depth_before is not None:
            FileHandler.write_tensor(out / "depth_before", report.depth_before)
            lo, hi = FileHandler.write_depth_visual(out / "depth_before.pgm", report.depth_before)
            norms.append({"name": "depth_before", "min": lo, "max": hi})

        for r in report.regions:
            FileHandler.write_mask(out / f"mask_a_{r.j}.pgm", r.mask_a)
            for run in (r.guided, r.control):
                if run is None:
                    continue
                stem = f"{run.label}_{r.j}"
                FileHandler.write_tensor(out / f"z_{stem}", run.z)
                FileHandler.write_tensor(out / f"depth_{stem}", run.depth)
                if _is_image(run.z):
                    FileHandler.write_image(out / (f"z_{stem}.ppm" if run.z.shape[0] == 3 else f"z_{stem}.pgm"), run.z)
                lo, hi = FileHandler.write_depth_visual(out / f"depth_{stem}.pgm", run.depth)
                norms.append({"name": f"depth_{stem}", "min": lo, "max": hi})
        FileHandler.write_csv(norms, out / "depth_norm.csv", ["name", "min", "max"])
    except (OSError, ValueError) as e:
        logger.error("report_write_failed", path=str(out), error=str(e))
        raise ReportError(f"cannot write attack report to {out}: {e}") from e

    logger.info("attack_report_written", path=str(out), regions=len(report.regions), errors=len(report.errors))
    return out


# =========================================================================
# SRS / COMPARE / SPECTRUM
# =========================================================================

def write_srs_report(result: SaliencyResult, out_dir: PathLike) -> Path:
    """patches.csv (index, origin, score), top-k mask PGMs and heatmap.pgm"""
    out = _prepare(out_dir)
    FileHandler.write_csv(result.to_rows(), out / "patches.csv", ["index", "row", "col", "score", "objective", "rank"])
    for rank, idx in enumerate(result.topk, start=1):
        FileHandler.write_mask(out / f"top{rank}_mask.pgm", result.grid.mask(idx))
    FileHandler.write_image(out / "heatmap.pgm", saliency_heatmap(result))
    logger.info("srs_report_written", path=str(out), topk=result.topk)
    return out


def write_comparison_report(comparison: ComparisonReport, out_dir: PathLike) -> Path:
    """compare.csv (modes × seeds ξ_r), compare_log_density.csv, compare_long.csv, compare_summary.csv"""
    out = _prepare(out_dir)
    FileHandler.write_csv(comparison.wide("xi_r"), out / "compare.csv")
    FileHandler.write_csv(comparison.wide("log_density"), out / "compare_log_density.csv")
    FileHandler.write_csv(comparison.frame, out / "compare_long.csv")
    FileHandler.write_csv(comparison.summary(), out / "compare_summary.csv")
    if comparison.errors:
        FileHandler.write_csv(comparison.errors, out / "errors.csv", ["seed", "mode", "stage", "type", "message"])
    logger.info("comparison_report_written", path=str(out), modes=comparison.modes)
    return out


def write_spectrum_report(
    spectra: Dict[str, SpectralResult],
    out_dir: PathLike,
    injection: Optional[pd.DataFrame] = None,
    injection_summary: Optional[pd.DataFrame] = None,
) -> Path:
    """
    singular_values.csv plus direction tensors per result, and the injection tables

    Args:
        spectra: name → SpectralResult (e.g. 'top', 'bottom', 'full')
    """
    out = _prepare(out_dir)
    rows = []
    for name, res in spectra.items():
        for i, s in enumerate(res.singular_values):
            rows.append(
                {"result": name, "index": i, "sigma": float(s), "method": res.method, "converged": bool(res.converged), "iterations": res.iterations}
            )
        FileHandler.write_tensor(out / f"{name}_left", res.left)
        FileHandler.write_tensor(out / f"{name}_right", res.right)
    FileHandler.write_csv(rows, out / "singular_values.csv", ["result", "index", "sigma", "method", "converged", "iterations"])
    if injection is not None:
        FileHandler.write_csv(injection, out / "injection.csv")
    if injection_summary is not None:
        FileHandler.write_csv(injection_summary, out / "injection_summary.csv")
    logger.info("spectrum_report_written", path=str(out), results=list(spectra))
    return out


# =========================================================================
# LOADING
# =========================================================================

REPORT_TABLES = (
    "regions.csv",
    "mrsr.csv",
    "energy_trace.csv",
    "patches.csv",
    "compare.csv",
    "compare_long.csv",
    "compare_summary.csv",
    "singular_values.csv",
    "injection.csv",
    "injection_summary.csv",
    "ensemble.csv",
    "ensemble_summary.csv",
)


def load_report(out_dir: PathLike) -> Dict[str, object]:
    """
    Whatever a report directory holds: tables by file stem, summary text,
    config echo and the heatmap

    Raises:
        ReportError: Directory missing
    """
    out = Path(out_dir)
    if not out.is_dir():
        raise ReportError(f"report directory not found: {out}")
    loaded: Dict[str, object] = {}
    for name in REPORT_TABLES:
        if (out / name).exists():
            loaded[Path(name).stem] = FileHandler.read_csv(out / name)
    if (out / "summary.txt").exists():
        loaded["summary"] = (out / "summary.txt").read_text(encoding="utf-8")
    if (out / "config.yaml").exists():
        loaded["config"] = FileHandler.load_file(out / "config.yaml")
    if (out / "heatmap.pgm").exists():
        loaded["heatmap"] = FileHandler.read_image(out / "heatmap.pgm")[0]
    logger.debug("report_loaded", path=str(out), parts=sorted(loaded))
    return loaded
