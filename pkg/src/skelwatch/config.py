"""Versioned JSON application config binding model, training, streaming, and alerting.

One file drives every command. The schema is strict: unknown keys are
rejected at every level so typos fail loudly instead of silently falling
back to defaults. The gateway auth token may be supplied via the
``SKELWATCH_AUTH_TOKEN`` environment variable instead of the file; the
environment wins when both are set. No other field is overridable from the
environment.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields, replace
from typing import Mapping, Optional

from .alerts import GatewayConfig
from .model import MbConvSpec, ModelConfig, compact_config, default_config
from .skeleton import CLASS_CODES
from .streaming import StreamConfig
from .training import TrainConfig

__all__ = [
    "AUTH_TOKEN_ENV",
    "SUPPORTED_VERSIONS",
    "ConfigFileError",
    "PathsConfig",
    "AppConfig",
    "app_config_from_dict",
    "load_app_config",
]

AUTH_TOKEN_ENV = "SKELWATCH_AUTH_TOKEN"
SUPPORTED_VERSIONS = (1,)


class ConfigFileError(ValueError):
    """The config file cannot be used: bad syntax, schema, or values."""


@dataclass(frozen=True)
class PathsConfig:
    """Filesystem locations the commands read and write."""

    data_dir: str = "data"
    checkpoint: str = "model.ckpt"
    delivery_log: str = "alerts.jsonl"

    def __post_init__(self):
        for name in ("data_dir", "checkpoint", "delivery_log"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value:
                raise ValueError(f"{name} must be a nonempty string, got {value!r}")


@dataclass(frozen=True)
class AppConfig:
    """Everything a command needs, parsed and validated once."""

    version: int
    model: ModelConfig
    train: TrainConfig
    stream: StreamConfig
    paths: PathsConfig
    gateway: Optional[GatewayConfig] = None
    patient_label: str = "Patient"
    critical_codes: Optional[tuple[str, ...]] = None


def _require_mapping(value, where: str) -> Mapping:
    if not isinstance(value, Mapping):
        raise ConfigFileError(f"{where} must be a JSON object, got {type(value).__name__}")
    return value


def _check_keys(raw: Mapping, allowed, where: str) -> None:
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigFileError(
            f"unknown key(s) in {where}: {', '.join(unknown)} "
            f"(allowed: {', '.join(sorted(allowed))})"
        )


_MODEL_SCALARS = ("input_grid", "num_classes", "dropout_rate", "hidden_channels")
_STAGE_KEYS = (
    "in_channels",
    "out_channels",
    "expansion_ratio",
    "kernel_size",
    "stride",
    "se_reduction",
)


def _model_from(raw: Mapping) -> ModelConfig:
    _check_keys(raw, set(_MODEL_SCALARS) | {"preset", "stages"}, "model")
    if "preset" in raw and "stages" in raw:
        raise ConfigFileError("model.preset and model.stages are mutually exclusive")
    overrides = {k: raw[k] for k in _MODEL_SCALARS if k in raw}
    try:
        if "stages" in raw:
            if not isinstance(raw["stages"], list) or not raw["stages"]:
                raise ConfigFileError("model.stages must be a nonempty array")
            specs = []
            for i, st in enumerate(raw["stages"]):
                st = _require_mapping(st, f"model.stages[{i}]")
                _check_keys(st, _STAGE_KEYS, f"model.stages[{i}]")
                specs.append(MbConvSpec(**st))
            return ModelConfig(stage_specs=tuple(specs), **overrides)
        preset = raw.get("preset", "compact")
        if preset == "compact":
            base = compact_config()
        elif preset == "default":
            base = default_config()
        else:
            raise ConfigFileError(
                f"model.preset must be 'compact' or 'default', got {preset!r}"
            )
        return replace(base, **overrides) if overrides else base
    except ConfigFileError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigFileError(f"model: {exc}") from exc


def _dataclass_from(raw: Mapping, cls, where: str):
    _check_keys(raw, {f.name for f in fields(cls)}, where)
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigFileError(f"{where}: {exc}") from exc


_GATEWAY_EXTRAS = ("patient_label", "critical_codes")


def _gateway_from(raw: Mapping, env: Mapping) -> tuple[GatewayConfig, str, Optional[tuple[str, ...]]]:
    gateway_fields = {f.name for f in fields(GatewayConfig)}
    _check_keys(raw, gateway_fields | set(_GATEWAY_EXTRAS), "gateway")
    patient_label = raw.get("patient_label", "Patient")
    if not isinstance(patient_label, str) or not patient_label:
        raise ConfigFileError("gateway.patient_label must be a nonempty string")
    critical_codes = raw.get("critical_codes")
    if critical_codes is not None:
        if not isinstance(critical_codes, list):
            raise ConfigFileError("gateway.critical_codes must be an array of class codes")
        bad = sorted(set(critical_codes) - set(CLASS_CODES))
        if bad:
            raise ConfigFileError(f"gateway.critical_codes has unknown code(s): {', '.join(map(str, bad))}")
        critical_codes = tuple(critical_codes)
    token = env.get(AUTH_TOKEN_ENV) or raw.get("auth_token")
    if not token:
        raise ConfigFileError(
            f"gateway.auth_token is missing: set it in the file or export {AUTH_TOKEN_ENV}"
        )
    kwargs = {k: raw[k] for k in gateway_fields - {"auth_token"} if k in raw}
    if "recipients" in kwargs:
        if not isinstance(kwargs["recipients"], list):
            raise ConfigFileError("gateway.recipients must be an array of E.164 numbers")
        kwargs["recipients"] = tuple(kwargs["recipients"])
    try:
        gateway = GatewayConfig(auth_token=token, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigFileError(f"gateway: {exc}") from exc
    return gateway, patient_label, critical_codes


def app_config_from_dict(raw, env: Optional[Mapping] = None) -> AppConfig:
    """Validate a parsed JSON document into an AppConfig."""
    env = os.environ if env is None else env
    raw = _require_mapping(raw, "config root")
    _check_keys(raw, {"version", "model", "train", "stream", "gateway", "paths"}, "config root")
    if "version" not in raw:
        raise ConfigFileError("config.version is required")
    version = raw["version"]
    if not isinstance(version, int) or isinstance(version, bool) or version not in SUPPORTED_VERSIONS:
        supported = ", ".join(map(str, SUPPORTED_VERSIONS))
        raise ConfigFileError(f"unsupported config version {version!r} (supported: {supported})")
    model = _model_from(_require_mapping(raw.get("model", {}), "model"))
    train = _dataclass_from(_require_mapping(raw.get("train", {}), "train"), TrainConfig, "train")
    stream = _dataclass_from(_require_mapping(raw.get("stream", {}), "stream"), StreamConfig, "stream")
    paths = _dataclass_from(_require_mapping(raw.get("paths", {}), "paths"), PathsConfig, "paths")
    if "gateway" in raw:
        gateway, patient_label, critical_codes = _gateway_from(
            _require_mapping(raw["gateway"], "gateway"), env
        )
    else:
        gateway, patient_label, critical_codes = None, "Patient", None
    return AppConfig(
        version=version,
        model=model,
        train=train,
        stream=stream,
        paths=paths,
        gateway=gateway,
        patient_label=patient_label,
        critical_codes=critical_codes,
    )


def load_app_config(path, env: Optional[Mapping] = None) -> AppConfig:
    """Read and validate the JSON config file at ``path``."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except FileNotFoundError:
        raise ConfigFileError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigFileError(f"config file is not valid JSON: {exc}") from exc
    except OSError as exc:
        raise ConfigFileError(f"config file unreadable: {exc}") from exc
    return app_config_from_dict(raw, env)
