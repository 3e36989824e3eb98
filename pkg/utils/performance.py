"""
Performance Tracking Module
Wall-clock and memory of attack, comparison and spectrum runs.
Metrics live in the log directory, never in the byte-stable report files.
"""

import json
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

import psutil

from utils.logger import LoggerSetup, get_logger

logger = get_logger("performance")


@dataclass
class PerformanceMetric:
    """A single tracked operation"""
    timestamp: str
    operation: str
    run_id: str
    mode: str
    duration_seconds: float
    memory_mb: float
    success: bool
    error: Optional[str] = None
    steps: Optional[int] = None


class PerformanceTracker:
    """Track operations into a JSON metrics file holding the latest max_history entries"""

    MAX_HISTORY = 1000

    def __init__(self, metrics_file: Optional[str] = None, max_history: int = MAX_HISTORY):
        if max_history < 1:
            raise ValueError(f"max_history must be positive, got {max_history}")
        self.max_history = max_history
        self.metrics: List[Dict] = []
        self.metrics_file = Path(metrics_file) if metrics_file else LoggerSetup.log_dir() / "performance.json"
        self.metrics_file.parent.mkdir(parents=True, exist_ok=True)
        self._load_existing_metrics()

    def _load_existing_metrics(self):
        if self.metrics_file.exists():
            try:
                with open(self.metrics_file, "r", encoding="utf-8") as f:
                    self.metrics = json.load(f)
                self.metrics = self.metrics[-self.max_history:]
            except (json.JSONDecodeError, IOError):
                # corrupted file: start fresh
                self.metrics = []

    @contextmanager
    def track(self, operation: str, run_id: str, mode: str = "none"):
        """
        Context manager timing one operation

        Usage:
            with tracker.track("run_attack", "seed=7", "jvpg") as ctx:
                ...
                ctx["steps"] = 200

        Yields:
            Dict whose 'steps' entry the caller may set; 'duration_seconds'
            is filled in on exit
        """
        start_time = time.perf_counter()
        start_memory = self._get_memory_usage()
        success = True
        error = None
        context: Dict[str, Any] = {"steps": None, "duration_seconds": None}

        try:
            yield context
        except Exception as e:
            success = False
            error = str(e)
            raise
        finally:
            duration = time.perf_counter() - start_time
            context["duration_seconds"] = duration
            metric = PerformanceMetric(
                timestamp=datetime.now(timezone.utc).isoformat(),
                operation=operation,
                run_id=run_id,
                mode=mode,
                duration_seconds=round(duration, 3),
                memory_mb=round(self._get_memory_usage() - start_memory, 2),
                success=success,
                error=error,
                steps=context.get("steps"),
            )
            self.add_metric(metric)
            LoggerSetup.log_performance(f"{operation}_duration", metric.duration_seconds, run_id=run_id, mode=mode)

    def _get_memory_usage(self) -> float:
        """Resident memory of this process in MB"""
        try:
            return psutil.Process(os.getpid()).memory_info().rss / 1024 / 1024
        except psutil.Error:
            return 0.0

    def add_metric(self, metric: PerformanceMetric):
        self.metrics.append(asdict(metric))
        del self.metrics[:-self.max_history]
        self._save_metrics()

    def _save_metrics(self):
        try:
            with open(self.metrics_file, "w", encoding="utf-8") as f:
                json.dump(self.metrics, f, indent=2, ensure_ascii=False)
        except IOError as e:
            logger.warning("metrics_save_failed", path=str(self.metrics_file), error=str(e))

    def get_summary(self) -> Dict[str, Any]:
        """Aggregate counts, success rate and duration statistics"""
        if not self.metrics:
            return {
                "total_operations": 0,
                "successes": 0,
                "failures": 0,
                "success_rate": 0.0,
                "avg_duration": 0.0,
                "total_memory_mb": 0.0,
            }

        total = len(self.metrics)
        successes = sum(1 for m in self.metrics if m.get("success", False))
        durations = [m.get("duration_seconds", 0) for m in self.metrics]
        memories = [m.get("memory_mb", 0) for m in self.metrics]
        return {
            "total_operations": total,
            "successes": successes,
            "failures": total - successes,
            "success_rate": round(successes / total * 100, 2),
            "avg_duration": round(sum(durations) / total, 3),
            "min_duration": round(min(durations), 3),
            "max_duration": round(max(durations), 3),
            "total_memory_mb": round(sum(memories), 2),
            "avg_memory_mb": round(sum(memories) / total, 2),
        }

    def get_by_mode(self, mode: str) -> List[Dict]:
        return [m for m in self.metrics if m.get("mode") == mode]

    def get_by_operation(self, operation: str) -> List[Dict]:
        return [m for m in self.metrics if m.get("operation") == operation]

    def get_failures(self) -> List[Dict]:
        return [m for m in self.metrics if not m.get("success", False)]

    def get_recent(self, limit: int = 10) -> List[Dict]:
        return sorted(self.metrics, key=lambda x: x.get("timestamp", ""), reverse=True)[:limit]
