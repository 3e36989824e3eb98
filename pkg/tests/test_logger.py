"""Structured logging lands in the log directory, never on stdout."""

import json

from utils.logger import LoggerSetup, get_logger


def _events(name):
    path = LoggerSetup.log_dir() / name
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def test_events_are_json_with_component(capsys):
    get_logger("sampler").info("logger_check_info", step=3)
    event = [e for e in _events("processing.log") if e["event"] == "logger_check_info"][-1]
    assert event["component"] == "sampler"
    assert event["step"] == 3
    assert event["level"] == "info"
    assert "timestamp" in event
    assert capsys.readouterr().out == ""


def test_errors_log_keeps_errors_only():
    log = get_logger("pipeline")
    log.info("logger_check_quiet")
    log.error("logger_check_loud", reason="test")
    errors = [e["event"] for e in _events("errors.log")]
    assert "logger_check_loud" in errors
    assert "logger_check_quiet" not in errors


def test_file_operation_failures_are_errors():
    LoggerSetup.log_file_operation("read_tensor", "z.bin", "failed", count=4)
    assert any(e["event"] == "file_read_tensor_failed" for e in _events("errors.log"))
