"""TOML config loading: defaults, unknown-key rejection, range validation."""

from datetime import date

import pytest

from nudgex.config import ApiConfig, load_config
from nudgex.errors import ConfigError


def write_config(tmp_path, text):
    path = tmp_path / "config.toml"
    path.write_text(text, encoding="utf-8")
    return path


def test_defaults_without_file(tmp_path):
    config = load_config(None, data_root=tmp_path / "d")
    assert config.captioner.provider == "stub"
    assert config.judge.theta_avg == 4.0
    assert config.acquisition.horizon_cutoff == date(2024, 12, 31)
    assert config.rag.k == 5


def test_full_file_parses(tmp_path):
    path = write_config(tmp_path, """
[data]
root = "store"

[service]
bind = "0.0.0.0:9001"

[acquisition]
max_cloud_fraction = 0.2
horizon_cutoff = 2023-06-30

[eo]
provider = "fixture"
manifest = "eo/manifest.jsonl"

[judge]
theta_avg = 3.5
theta_min = 2

[rag]
k = 7

[[indices]]
name = "CUSTOM"
expression = "B04 / B03"
valid_range = [0.0, 10.0]
threshold = 1.5
label = "custom ratio"
""")
    config = load_config(path)
    assert config.data_root == tmp_path / "store"
    assert config.service.bind == "0.0.0.0:9001"
    assert config.acquisition.max_cloud_fraction == 0.2
    assert config.acquisition.horizon_cutoff == date(2023, 6, 30)
    assert config.eo.manifest == tmp_path / "eo/manifest.jsonl"
    assert config.judge.theta_avg == 3.5 and config.judge.theta_min == 2
    assert config.rag.k == 7
    assert config.extra_indices[0].name == "CUSTOM"
    assert config.extra_indices[0].valid_range == (0.0, 10.0)


def test_unknown_key_rejected(tmp_path):
    path = write_config(tmp_path, "[judge]\napi_key = \"secret\"\n")
    with pytest.raises(ConfigError, match="api_key"):
        load_config(path)


def test_unknown_section_rejected(tmp_path):
    path = write_config(tmp_path, "[telemetry]\nenabled = true\n")
    with pytest.raises(ConfigError, match="telemetry"):
        load_config(path)


def test_threshold_out_of_range_rejected(tmp_path):
    path = write_config(tmp_path, "[acquisition]\nmax_cloud_fraction = 1.5\n")
    with pytest.raises(ConfigError, match="max_cloud_fraction"):
        load_config(path)
    with pytest.raises(ConfigError, match="theta_avg"):
        load_config(write_config(tmp_path, "[judge]\ntheta_avg = 5.5\n"))


def test_missing_file_is_error(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.toml")


def test_defaults_are_valid():
    ApiConfig()  # must not raise
