"""Strict JSON config parsing: schema, defaults, and the token env override."""

import json

import pytest

from skelwatch.config import (
    AUTH_TOKEN_ENV,
    AppConfig,
    ConfigFileError,
    PathsConfig,
    app_config_from_dict,
    load_app_config,
)
from skelwatch.model import ModelConfig, compact_config, default_config
from skelwatch.streaming import StreamConfig
from skelwatch.training import TrainConfig

ENV = {}  # parsing must not read the real environment unless asked


def parse(raw, env=ENV):
    return app_config_from_dict(raw, env)


GATEWAY_SECTION = {
    "base_url": "http://127.0.0.1:9",
    "account_sid": "AC1",
    "auth_token": "file-token",
    "from_number": "+15550000001",
    "recipients": ["+15550000002"],
}


class TestVersionAndShape:
    def test_minimal_document_gets_defaults(self):
        cfg = parse({"version": 1})
        assert cfg.version == 1
        assert cfg.model == compact_config()
        assert cfg.train == TrainConfig()
        assert cfg.stream == StreamConfig()
        assert cfg.paths == PathsConfig()
        assert cfg.gateway is None
        assert cfg.patient_label == "Patient"
        assert cfg.critical_codes is None

    def test_version_required(self):
        with pytest.raises(ConfigFileError, match="version is required"):
            parse({})

    @pytest.mark.parametrize("version", [0, 2, "1", 1.0, True, None])
    def test_unsupported_versions(self, version):
        with pytest.raises(ConfigFileError, match="version"):
            parse({"version": version})

    def test_root_must_be_object(self):
        with pytest.raises(ConfigFileError, match="object"):
            parse([1, 2])

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigFileError, match="trian"):
            parse({"version": 1, "trian": {}})

    @pytest.mark.parametrize("section", ["model", "train", "stream", "paths"])
    def test_unknown_section_key(self, section):
        with pytest.raises(ConfigFileError, match="zzz"):
            parse({"version": 1, section: {"zzz": 1}})


class TestModelSection:
    def test_preset_default(self):
        cfg = parse({"version": 1, "model": {"preset": "default"}})
        assert cfg.model == default_config()

    def test_preset_with_overrides(self):
        cfg = parse({"version": 1, "model": {"preset": "compact", "dropout_rate": 0.0,
                                             "num_classes": 12}})
        assert cfg.model.dropout_rate == 0.0
        assert cfg.model.stage_specs == compact_config().stage_specs

    def test_unknown_preset(self):
        with pytest.raises(ConfigFileError, match="preset"):
            parse({"version": 1, "model": {"preset": "huge"}})

    def test_preset_and_stages_exclusive(self):
        with pytest.raises(ConfigFileError, match="mutually exclusive"):
            parse({"version": 1, "model": {"preset": "compact", "stages": []}})

    def test_custom_stages(self):
        raw = {
            "version": 1,
            "model": {
                "input_grid": 16,
                "hidden_channels": 4,
                "dropout_rate": 0.0,
                "stages": [
                    {"in_channels": 3, "out_channels": 4, "expansion_ratio": 1,
                     "kernel_size": 3, "stride": 1, "se_reduction": 1},
                    {"in_channels": 4, "out_channels": 6, "expansion_ratio": 2,
                     "kernel_size": 3, "stride": 2, "se_reduction": 4},
                ],
            },
        }
        cfg = parse(raw)
        assert isinstance(cfg.model, ModelConfig)
        assert cfg.model.input_grid == 16
        assert len(cfg.model.stage_specs) == 2
        assert cfg.model.stage_specs[1].stride == 2

    def test_stage_unknown_key(self):
        with pytest.raises(ConfigFileError, match="stages\\[0\\]"):
            parse({"version": 1, "model": {"stages": [{"in_channels": 3, "out_channels": 4,
                                                       "padding": 1}]}})

    def test_invalid_stage_values_wrapped(self):
        raw = {"version": 1, "model": {"stages": [
            {"in_channels": 3, "out_channels": 4, "expansion_ratio": 1, "se_reduction": 5}
        ]}}
        with pytest.raises(ConfigFileError, match="model"):
            parse(raw)

    def test_empty_stages_rejected(self):
        with pytest.raises(ConfigFileError, match="nonempty"):
            parse({"version": 1, "model": {"stages": []}})


class TestSections:
    def test_train_values_applied(self):
        cfg = parse({"version": 1, "train": {"batch_size": 4, "epochs": 7,
                                             "learning_rate": 0.01, "seed": 3}})
        assert (cfg.train.batch_size, cfg.train.epochs) == (4, 7)
        assert cfg.train.learning_rate == 0.01 and cfg.train.seed == 3

    def test_train_invalid_value(self):
        with pytest.raises(ConfigFileError, match="train"):
            parse({"version": 1, "train": {"batch_size": 0}})

    def test_stream_values_applied(self):
        cfg = parse({"version": 1, "stream": {"hop_frames": 10, "cooldown_seconds": 5.0}})
        assert cfg.stream.hop_frames == 10
        assert cfg.stream.cooldown_seconds == 5.0

    def test_stream_invalid_value(self):
        with pytest.raises(ConfigFileError, match="stream"):
            parse({"version": 1, "stream": {"hop_frames": 40}})

    def test_paths_applied_and_validated(self):
        cfg = parse({"version": 1, "paths": {"data_dir": "/tmp/x"}})
        assert cfg.paths.data_dir == "/tmp/x"
        assert cfg.paths.checkpoint == "model.ckpt"
        with pytest.raises(ConfigFileError, match="paths"):
            parse({"version": 1, "paths": {"checkpoint": ""}})

    def test_section_must_be_object(self):
        with pytest.raises(ConfigFileError, match="train"):
            parse({"version": 1, "train": [1]})


class TestGatewaySection:
    def test_file_token_used_when_env_unset(self):
        cfg = parse({"version": 1, "gateway": dict(GATEWAY_SECTION)})
        assert cfg.gateway.auth_token == "file-token"
        assert cfg.gateway.recipients == ("+15550000002",)

    def test_env_token_wins(self):
        cfg = parse({"version": 1, "gateway": dict(GATEWAY_SECTION)},
                    env={AUTH_TOKEN_ENV: "env-token"})
        assert cfg.gateway.auth_token == "env-token"

    def test_env_supplies_missing_token(self):
        section = {k: v for k, v in GATEWAY_SECTION.items() if k != "auth_token"}
        cfg = parse({"version": 1, "gateway": section}, env={AUTH_TOKEN_ENV: "env-token"})
        assert cfg.gateway.auth_token == "env-token"

    def test_missing_token_everywhere(self):
        section = {k: v for k, v in GATEWAY_SECTION.items() if k != "auth_token"}
        with pytest.raises(ConfigFileError, match=AUTH_TOKEN_ENV):
            parse({"version": 1, "gateway": section})

    def test_patient_label_and_critical_codes(self):
        section = dict(GATEWAY_SECTION, patient_label="Ward 3", critical_codes=["A43", "A42"])
        cfg = parse({"version": 1, "gateway": section})
        assert cfg.patient_label == "Ward 3"
        assert cfg.critical_codes == ("A43", "A42")

    def test_unknown_critical_code(self):
        section = dict(GATEWAY_SECTION, critical_codes=["A43", "A999"])
        with pytest.raises(ConfigFileError, match="A999"):
            parse({"version": 1, "gateway": section})

    def test_recipients_must_be_array(self):
        section = dict(GATEWAY_SECTION, recipients="+15550000002")
        with pytest.raises(ConfigFileError, match="recipients"):
            parse({"version": 1, "gateway": section})

    def test_invalid_number_error_hides_token(self):
        section = dict(GATEWAY_SECTION, from_number="not-a-number")
        with pytest.raises(ConfigFileError) as exc_info:
            parse({"version": 1, "gateway": section})
        assert "file-token" not in str(exc_info.value)

    def test_unknown_gateway_key(self):
        section = dict(GATEWAY_SECTION, url="http://x")
        with pytest.raises(ConfigFileError, match="url"):
            parse({"version": 1, "gateway": section})


class TestLoadFile:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "app.json"
        path.write_text(json.dumps({"version": 1, "train": {"epochs": 5}}), encoding="utf-8")
        cfg = load_app_config(path, env=ENV)
        assert isinstance(cfg, AppConfig)
        assert cfg.train.epochs == 5

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigFileError, match="not found"):
            load_app_config(tmp_path / "absent.json", env=ENV)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "app.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigFileError, match="JSON"):
            load_app_config(path, env=ENV)
