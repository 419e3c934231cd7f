#!/usr/bin/env python3
"""
Tests for environment and run-config loading.
"""

import json
import sys
from pathlib import Path

import pytest

# Add src directory to Python path
src_path = Path(__file__).parent / "src"
sys.path.insert(0, str(src_path))

from config import (  # noqa: E402
    CapsuleConfig,
    Config,
    ConfigValidator,
    RunConfig,
    load_run_config,
)
from errors import ConfigError, FileFormatError  # noqa: E402


@pytest.fixture
def clean_env(monkeypatch):
    """Blank every GRASP_ variable; the validator then fills in defaults and monkeypatch restores them."""
    for var in ConfigValidator.OPTIONAL_VARS:
        monkeypatch.setenv(var, "")
    return monkeypatch


def test_runtime_defaults(clean_env):
    """Unset variables fall back to the documented defaults."""
    config = Config.from_environment()
    assert config.log_level == "INFO"
    assert config.debug_mode is False
    assert config.max_workers == 1
    assert config.float_format == "%.6f"


def test_runtime_from_environment(clean_env):
    clean_env.setenv("GRASP_LOG_LEVEL", "debug")
    clean_env.setenv("GRASP_DEBUG_MODE", "true")
    clean_env.setenv("GRASP_MAX_WORKERS", "4")
    config = Config.from_environment()
    assert config.log_level == "DEBUG"
    assert config.debug_mode is True
    assert config.max_workers == 4


@pytest.mark.parametrize(
    "var, value",
    [
        ("GRASP_LOG_LEVEL", "LOUD"),
        ("GRASP_MAX_WORKERS", "zero"),
        ("GRASP_MAX_WORKERS", "0"),
        ("GRASP_FLOAT_FORMAT", "%d%d"),
    ],
)
def test_runtime_rejects_bad_values(clean_env, var, value):
    clean_env.setenv(var, value)
    with pytest.raises(ConfigError):
        Config.from_environment()


def test_run_config_defaults():
    """Defaults carry the published constants."""
    config = load_run_config(None)
    assert (config.capsule.c_top, config.capsule.c_bot, config.capsule.c_rad) == (0.5, 1.0, 1.0)
    assert config.loss.lambda_miss == 3.0
    assert config.loss.c_pen == 2.0
    assert config.optim.learning_rate == 0.01
    assert config.optim.iterations == 250
    assert config.optim.grad_scale.beta == 0.0
    assert config.perturb.sigma_translation == 50.0
    assert config.perturb.sigma_rotation == 15.0
    assert config.metrics.contact_threshold == 0.4


def test_run_config_json_and_toml_agree(tmp_path):
    json_path = tmp_path / "run.json"
    json_path.write_text(json.dumps({"loss": {"lambda_pen": 1.5}, "optim": {"iterations": 20, "seed": 7}}))
    toml_path = tmp_path / "run.toml"
    toml_path.write_text("[loss]\nlambda_pen = 1.5\n\n[optim]\niterations = 20\nseed = 7\n")

    from_json = load_run_config(json_path)
    from_toml = load_run_config(toml_path)
    assert from_json.snapshot() == from_toml.snapshot()
    assert from_json.optim.iterations == 20
    assert from_json.loss.lambda_pen == 1.5


def test_run_config_template_loads():
    """The shipped template mirrors the defaults."""
    template = Path(__file__).parent / "config" / "run-config-template.json"
    assert load_run_config(template).snapshot() == RunConfig().snapshot()


def test_run_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"optim": {"itterations": 5}}))
    with pytest.raises(ConfigError):
        load_run_config(path)


def test_run_config_rejects_invalid_values(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"loss": {"lambda_miss": 0.5}}))
    with pytest.raises(ConfigError):
        load_run_config(path)


def test_run_config_file_errors(tmp_path):
    with pytest.raises(FileFormatError):
        load_run_config(tmp_path / "missing.json")
    bad = tmp_path / "run.json"
    bad.write_text("{not json")
    with pytest.raises(FileFormatError):
        load_run_config(bad)
    wrong = tmp_path / "run.yaml"
    wrong.write_text("a: 1")
    with pytest.raises(FileFormatError):
        load_run_config(wrong)


def test_capsule_asymmetry():
    with pytest.raises(ValueError):
        CapsuleConfig(c_top=2.0, c_bot=1.0)
    assert CapsuleConfig(c_top=1.0, c_bot=1.0).reach == 1.0


def test_seed_override_reaches_every_stream():
    config = RunConfig().with_overrides(seed=11, n_restart=4)
    assert config.optim.seed == 11
    assert config.perturb.seed == 11
    assert config.optim.n_restart == 4
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(n_restart=0)


def test_keep_best_defaults_off_and_can_be_overridden():
    assert RunConfig().optim.keep_best is False
    assert RunConfig().with_overrides(keep_best=True).optim.keep_best is True
    assert RunConfig().with_overrides().optim.keep_best is False


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
