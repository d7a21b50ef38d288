"""Run configuration: JSON file, dotted-key overrides, validation.

A config file is a nested JSON object; every leaf is addressable by a
dotted key (e.g. ``filter.min_quality``), and the CLI exposes one flag per
dotted key so any file value can be overridden on the command line. The
effective config dumps back to the same nested shape, which is what makes
flag round-trip tests possible.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .audio import LoudnessSpec
from .backends.stubs import EnergyVadParams
from .errors import ConfigInvalid
from .filtering import FilterPolicy
from .segmenter import StitchPolicy

STAGES = ("separation", "diarization", "vad", "transcription", "scoring")

EXCHANGE_ENV_VAR = "SPEECHPREP_EXCHANGE"

DEFAULT_TIMEOUT_S = 600.0


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in {"true", "1", "yes", "on"}:
        return True
    if lowered in {"false", "0", "no", "off"}:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_str_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


# dotted key -> (python type for file values, parser for flag strings, default)
SCHEMA: dict[str, tuple[type | tuple[type, ...], Any, Any]] = {
    "input_roots": (list, _parse_str_list, []),
    "output_root": (str, str, ""),
    "parallelism": (int, int, 1),
    "resume": (bool, _parse_bool, False),
    "run_id": (str, str, "run"),
    "exchange_root": ((str, type(None)), str, None),
    "score_stages": (bool, _parse_bool, True),
    "turn_max_gap_s": ((int, float), float, 1.0),
    "backend.separation": (str, str, "stub"),
    "backend.diarization": (str, str, "stub"),
    "backend.vad": (str, str, "stub"),
    "backend.transcription": (str, str, "stub"),
    "backend.scoring": (str, str, "stub"),
    "timeout.separation": ((int, float), float, DEFAULT_TIMEOUT_S),
    "timeout.diarization": ((int, float), float, DEFAULT_TIMEOUT_S),
    "timeout.vad": ((int, float), float, DEFAULT_TIMEOUT_S),
    "timeout.transcription": ((int, float), float, DEFAULT_TIMEOUT_S),
    "timeout.scoring": ((int, float), float, DEFAULT_TIMEOUT_S),
    "loudness.target_dbfs": ((int, float), float, -20.0),
    "loudness.gain_min_db": ((int, float), float, -3.0),
    "loudness.gain_max_db": ((int, float), float, 3.0),
    "stitch.min_s": ((int, float), float, 3.0),
    "stitch.max_s": ((int, float), float, 30.0),
    "stitch.max_gap_s": ((int, float), float, 1.0),
    "vad.frame_ms": (int, int, 30),
    "vad.hop_ms": (int, int, 10),
    "vad.threshold_dbfs": ((int, float), float, -40.0),
    "vad.hangover_ms": (int, int, 300),
    "filter.allowed_languages": (list, _parse_str_list, ["en", "zh", "de", "fr", "ja", "ko"]),
    "filter.min_language_confidence": ((int, float), float, 0.80),
    "filter.min_quality": ((int, float), float, 3.0),
    "filter.iqr_multiplier": ((int, float), float, 1.5),
    "filter.min_segments_for_iqr": (int, int, 4),
}


@dataclass(frozen=True)
class RunConfig:
    """Everything one pipeline run needs, already validated."""

    input_roots: tuple[str, ...]
    output_root: str
    parallelism: int = 1
    resume: bool = False
    run_id: str = "run"
    exchange_root: str | None = None
    score_stages: bool = True
    turn_max_gap_s: float = 1.0
    backends: dict[str, str] = field(
        default_factory=lambda: {stage: "stub" for stage in STAGES}
    )
    timeouts: dict[str, float] = field(
        default_factory=lambda: {stage: DEFAULT_TIMEOUT_S for stage in STAGES}
    )
    loudness: LoudnessSpec = LoudnessSpec()
    stitch: StitchPolicy = StitchPolicy()
    vad: EnergyVadParams = EnergyVadParams()
    filter: FilterPolicy = FilterPolicy()

    def resolve_exchange_root(self) -> Path:
        """Explicit config beats the environment beats the output default."""
        if self.exchange_root:
            return Path(self.exchange_root)
        env = os.environ.get(EXCHANGE_ENV_VAR)
        if env:
            return Path(env)
        return Path(self.output_root) / "exchange"

    def to_flat_dict(self) -> dict[str, Any]:
        return {
            "input_roots": list(self.input_roots),
            "output_root": self.output_root,
            "parallelism": self.parallelism,
            "resume": self.resume,
            "run_id": self.run_id,
            "exchange_root": self.exchange_root,
            "score_stages": self.score_stages,
            "turn_max_gap_s": self.turn_max_gap_s,
            **{f"backend.{s}": self.backends[s] for s in STAGES},
            **{f"timeout.{s}": self.timeouts[s] for s in STAGES},
            "loudness.target_dbfs": self.loudness.target_dbfs,
            "loudness.gain_min_db": self.loudness.gain_clamp_db[0],
            "loudness.gain_max_db": self.loudness.gain_clamp_db[1],
            "stitch.min_s": self.stitch.min_s,
            "stitch.max_s": self.stitch.max_s,
            "stitch.max_gap_s": self.stitch.max_gap_s,
            "vad.frame_ms": self.vad.frame_ms,
            "vad.hop_ms": self.vad.hop_ms,
            "vad.threshold_dbfs": self.vad.threshold_dbfs,
            "vad.hangover_ms": self.vad.hangover_ms,
            "filter.allowed_languages": sorted(self.filter.allowed_languages),
            "filter.min_language_confidence": self.filter.min_language_confidence,
            "filter.min_quality": self.filter.min_quality,
            "filter.iqr_multiplier": self.filter.iqr_multiplier,
            "filter.min_segments_for_iqr": self.filter.min_segments_for_iqr,
        }

    def to_nested_dict(self) -> dict[str, Any]:
        return _nest(self.to_flat_dict())


def _nest(flat: dict[str, Any]) -> dict[str, Any]:
    nested: dict[str, Any] = {}
    for key, value in flat.items():
        node = nested
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = value
    return nested


def _flatten(nested: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in nested.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def _coerce(key: str, value: Any) -> Any:
    expected, _, _ = SCHEMA[key]
    if key == "input_roots" and isinstance(value, list):
        if not all(isinstance(x, str) for x in value):
            raise ConfigInvalid(f"{key} must be a list of strings")
        return value
    if key == "filter.allowed_languages" and isinstance(value, list):
        if not all(isinstance(x, str) for x in value):
            raise ConfigInvalid(f"{key} must be a list of strings")
        return value
    if isinstance(value, bool) and expected is not bool:
        raise ConfigInvalid(f"{key} must be {expected}, got boolean")
    if isinstance(value, int) and isinstance(expected, tuple) and float in expected:
        return float(value)
    if expected is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if isinstance(expected, tuple):
        if isinstance(value, expected):
            return value
    elif isinstance(value, expected):
        return value
    raise ConfigInvalid(f"{key} has the wrong type: expected {expected}, got {value!r}")


def build_config(
    file_values: dict[str, Any] | None = None,
    overrides: dict[str, Any] | None = None,
) -> RunConfig:
    """Merge defaults <- config file <- overrides, validate, construct.

    ``file_values`` is the nested dict from a config file; ``overrides``
    maps dotted keys to already-typed values (the CLI parses flag strings
    with each key's parser before calling this).
    """
    flat = {key: default for key, (_, _, default) in SCHEMA.items()}
    if file_values:
        for key, value in _flatten(file_values).items():
            if key not in SCHEMA:
                raise ConfigInvalid(f"unknown config key {key!r}")
            flat[key] = _coerce(key, value)
    for key, value in (overrides or {}).items():
        if key not in SCHEMA:
            raise ConfigInvalid(f"unknown config key {key!r}")
        flat[key] = _coerce(key, value)

    if not flat["input_roots"]:
        raise ConfigInvalid("input_roots must name at least one directory")
    if not flat["output_root"]:
        raise ConfigInvalid("output_root must be set")
    if flat["parallelism"] < 1:
        raise ConfigInvalid(f"parallelism must be >= 1, got {flat['parallelism']}")
    if flat["turn_max_gap_s"] < 0:
        raise ConfigInvalid(f"turn_max_gap_s must be >= 0, got {flat['turn_max_gap_s']}")
    for stage in STAGES:
        descriptor = flat[f"backend.{stage}"]
        if descriptor != "stub" and not descriptor.startswith(("subprocess:", "tcp:")):
            raise ConfigInvalid(
                f"backend.{stage} must be 'stub', 'subprocess:<command>', "
                f"or 'tcp:<host>:<port>', got {descriptor!r}"
            )
        if flat[f"timeout.{stage}"] <= 0:
            raise ConfigInvalid(f"timeout.{stage} must be > 0")

    def policy(factory, prefix: str, **kwargs):
        try:
            return factory(**kwargs)
        except ValueError as exc:
            raise ConfigInvalid(f"{prefix}: {exc}") from exc

    loudness = policy(
        LoudnessSpec,
        "loudness",
        target_dbfs=flat["loudness.target_dbfs"],
        gain_clamp_db=(flat["loudness.gain_min_db"], flat["loudness.gain_max_db"]),
    )
    stitch = policy(
        StitchPolicy,
        "stitch",
        min_s=flat["stitch.min_s"],
        max_s=flat["stitch.max_s"],
        max_gap_s=flat["stitch.max_gap_s"],
    )
    vad = policy(
        EnergyVadParams,
        "vad",
        frame_ms=flat["vad.frame_ms"],
        hop_ms=flat["vad.hop_ms"],
        threshold_dbfs=flat["vad.threshold_dbfs"],
        hangover_ms=flat["vad.hangover_ms"],
    )
    filter_policy = policy(
        FilterPolicy,
        "filter",
        allowed_languages=frozenset(flat["filter.allowed_languages"]),
        min_language_confidence=flat["filter.min_language_confidence"],
        min_quality=flat["filter.min_quality"],
        iqr_multiplier=flat["filter.iqr_multiplier"],
        min_segments_for_iqr=flat["filter.min_segments_for_iqr"],
    )

    return RunConfig(
        input_roots=tuple(flat["input_roots"]),
        output_root=flat["output_root"],
        parallelism=flat["parallelism"],
        resume=flat["resume"],
        run_id=flat["run_id"],
        exchange_root=flat["exchange_root"],
        score_stages=flat["score_stages"],
        turn_max_gap_s=flat["turn_max_gap_s"],
        backends={stage: flat[f"backend.{stage}"] for stage in STAGES},
        timeouts={stage: flat[f"timeout.{stage}"] for stage in STAGES},
        loudness=loudness,
        stitch=stitch,
        vad=vad,
        filter=filter_policy,
    )


def load_config_file(path: Path) -> dict[str, Any]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigInvalid(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigInvalid(f"config {path} must be a JSON object")
    return data


def dump_config(config: RunConfig) -> str:
    return json.dumps(config.to_nested_dict(), indent=2, sort_keys=True) + "\n"
