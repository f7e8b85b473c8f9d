import logging

from config import Settings, configure_logging, load_settings


def test_defaults_without_environment(monkeypatch):
    for name in ("KDEMC_LOG_LEVEL", "KDEMC_WORKERS", "KDEMC_OUT_DIR", "KDEMC_QUAD_LIMIT"):
        monkeypatch.delenv(name, raising=False)
    assert load_settings() == Settings()


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("KDEMC_LOG_LEVEL", "debug")
    monkeypatch.setenv("KDEMC_WORKERS", "4")
    monkeypatch.setenv("KDEMC_QUAD_EPSABS", "1e-8")
    settings = load_settings()
    assert settings.log_level == "DEBUG"
    assert settings.workers == 4
    assert settings.quad_epsabs == 1e-8


def test_bad_values_fall_back(monkeypatch):
    monkeypatch.setenv("KDEMC_WORKERS", "many")
    monkeypatch.setenv("KDEMC_QUAD_LIMIT", "3")
    settings = load_settings()
    assert settings.workers == 1
    assert settings.quad_limit == 50


def test_logging_handler_is_not_duplicated():
    configure_logging("WARNING")
    configure_logging("DEBUG")
    root = logging.getLogger()
    assert [h.get_name() for h in root.handlers].count("kdemc") == 1
    assert root.level == logging.DEBUG
