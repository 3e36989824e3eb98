"""PerformanceTracker bookkeeping."""

import json

import pytest

from utils.performance import PerformanceTracker


@pytest.fixture
def tracker(tmp_path):
    return PerformanceTracker(str(tmp_path / "perf.json"))


def test_track_records_and_persists(tracker, tmp_path):
    with tracker.track("run_attack", run_id="seed=1", mode="jvpg") as ctx:
        ctx["steps"] = 40
    assert ctx["duration_seconds"] >= 0.0
    saved = json.loads((tmp_path / "perf.json").read_text(encoding="utf-8"))
    assert len(saved) == 1
    assert saved[0]["operation"] == "run_attack"
    assert saved[0]["steps"] == 40
    assert saved[0]["success"] is True


def test_failure_is_recorded_and_reraised(tracker):
    with pytest.raises(RuntimeError):
        with tracker.track("run_attack", run_id="seed=2"):
            raise RuntimeError("sampler diverged")
    failures = tracker.get_failures()
    assert len(failures) == 1
    assert failures[0]["error"] == "sampler diverged"


def test_summary_and_filters(tracker):
    for mode in ("jvpg", "jvpg", "mpgd"):
        with tracker.track("run_attack", run_id="seed=0", mode=mode):
            pass
    summary = tracker.get_summary()
    assert summary["total_operations"] == 3
    assert summary["success_rate"] == 100.0
    assert len(tracker.get_by_mode("jvpg")) == 2
    assert len(tracker.get_recent(2)) == 2


def test_metrics_reload_from_disk(tmp_path):
    path = str(tmp_path / "perf.json")
    with PerformanceTracker(path).track("srs", run_id="seed=0"):
        pass
    assert len(PerformanceTracker(path).get_by_operation("srs")) == 1


def test_corrupted_file_starts_fresh(tmp_path):
    path = tmp_path / "perf.json"
    path.write_text("{not json", encoding="utf-8")
    assert PerformanceTracker(str(path)).get_summary()["total_operations"] == 0


def test_history_is_capped(tmp_path):
    path = tmp_path / "perf.json"
    tracker = PerformanceTracker(str(path), max_history=3)
    for i in range(5):
        with tracker.track("run_attack", run_id=f"seed={i}"):
            pass
    assert [m["run_id"] for m in tracker.metrics] == ["seed=2", "seed=3", "seed=4"]
    assert len(json.loads(path.read_text(encoding="utf-8"))) == 3
    assert len(PerformanceTracker(str(path), max_history=2).metrics) == 2


def test_history_cap_must_be_positive(tmp_path):
    with pytest.raises(ValueError):
        PerformanceTracker(str(tmp_path / "perf.json"), max_history=0)
