import json

import pytest

from core.config import (
    LOG_LEVEL_ENV,
    OUTPUT_DIR_ENV,
    SyntheticSpec,
    TrainConfig,
    build,
    default_log_level,
    default_output_dir,
    resolve,
)
from core.errors import ConfigError


def test_defaults():
    config = TrainConfig()
    assert config.batch_size == 32
    assert config.ratio == (7, 1, 2)
    assert config.ablation == "K+R"
    assert config.leaky_slope == 0.2


@pytest.mark.parametrize(
    "field, value",
    [
        ("batch_size", 12),
        ("lr", 0.05),
        ("dropout", 0.5),
        ("leaky_slope", 1.0),
        ("ablation", "KR"),
        ("ratio", (7, 0, 2)),
        ("dim", 0),
        ("lr_decay", 0.0),
    ],
)
def test_out_of_range_values(field, value):
    with pytest.raises(ConfigError, match=field):
        build(TrainConfig, **{field: value})


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        build(TrainConfig, epochs=3)


def test_precedence_defaults_file_flags(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"dim": 16, "lr": 0.001, "seed": 4}), encoding="utf-8")
    config = resolve(TrainConfig, path, dim=8, lr=None)
    assert config.dim == 8
    assert config.lr == 0.001
    assert config.seed == 4
    assert config.hidden1 == 512


def test_bad_json_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{dim: 3", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid JSON"):
        resolve(TrainConfig, path)


def test_config_hash_tracks_values():
    assert TrainConfig().config_hash() == TrainConfig().config_hash()
    assert TrainConfig(dim=8).config_hash() != TrainConfig().config_hash()


def test_synthetic_rates_validated():
    with pytest.raises(ConfigError, match="defect_rate"):
        build(SyntheticSpec, defect_rate=1.5)
    with pytest.raises(ConfigError, match="guess must not exceed"):
        build(SyntheticSpec, guess=0.8, slip=0.5)


def test_environment_defaults(monkeypatch, tmp_path):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
    monkeypatch.setenv(LOG_LEVEL_ENV, "debug")
    assert default_output_dir() == tmp_path
    assert default_log_level() == "DEBUG"
    monkeypatch.delenv(OUTPUT_DIR_ENV)
    assert default_output_dir().name == "runs"
