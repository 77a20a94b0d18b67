import logging

from config import Config
from modules.logger import LoggingMixin, PerformanceLogger, log_run_stats, setup_logging


class Worker(LoggingMixin):
    pass


def test_validate_accepts_defaults():
    result = Config.validate()
    assert result["valid"]
    assert result["errors"] == []


def test_validate_flags_bad_values(monkeypatch):
    monkeypatch.setattr(Config, "THREADS_RAW", "many")
    monkeypatch.setattr(Config, "CHUNK_ELEMENTS", 10)
    monkeypatch.setattr(Config, "SAMPLE_COUNT", 100)
    result = Config.validate()
    assert not result["valid"]
    assert any("ALUSAFE_THREADS" in e for e in result["errors"])
    assert any("ALUSAFE_CHUNK_ELEMENTS" in e for e in result["errors"])
    assert any("ALUSAFE_SAMPLES" in w for w in result["warnings"])


def test_thread_count_is_at_least_one():
    config = Config()
    config.THREADS = 0
    assert config.thread_count() == 1


def test_setup_logging_writes_rotating_files(tmp_path):
    config = Config()
    config.LOG_TO_FILE = True
    config.LOG_DIR = str(tmp_path / "logs")
    root = setup_logging(config, "ERROR")
    try:
        logging.getLogger("alusafe.test").error("boom")
        for handler in root.handlers:
            handler.flush()
        assert "boom" in (tmp_path / "logs" / "errors.log").read_text()
        assert "boom" in (tmp_path / "logs" / "alusafe.log").read_text()
    finally:
        for handler in list(root.handlers):
            handler.close()
            root.removeHandler(handler)


def test_quiet_loggers():
    config = Config()
    config.QUIET_LOGGERS = ["noisy.lib"]
    setup_logging(config, "DEBUG")
    assert logging.getLogger("noisy.lib").level == logging.WARNING


def test_performance_logger_records_duration_and_counters(caplog):
    caplog.set_level(logging.INFO)
    with PerformanceLogger("closure", logging.getLogger("perf"), width=2) as perf:
        perf.update(size=8)
    assert perf.duration >= 0
    assert "closure completed" in caplog.text
    assert "width=2, size=8" in caplog.text


def test_performance_logger_reports_failures(caplog):
    caplog.set_level(logging.INFO)
    try:
        with PerformanceLogger("search", logging.getLogger("perf")):
            raise ValueError("budget")
    except ValueError:
        pass
    assert "search failed" in caplog.text
    assert "error=ValueError: budget" in caplog.text


def test_mixin_logger_is_named_after_module_and_class():
    assert Worker().logger.name == f"{__name__}.Worker"


def test_run_stats(caplog):
    caplog.set_level(logging.INFO)
    log_run_stats({"closures_run": 3, "errors": ["one"]}, logging.getLogger("stats"))
    assert "closures_run: 3" in caplog.text
    assert "Errors encountered: 1" in caplog.text
    assert "1. one" in caplog.text
