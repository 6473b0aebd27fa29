"""Flat key = value configuration files with strict schemas.

One human-readable file mirrors the architecture and training field names
exactly; unknown keys, duplicates and malformed values are reported with
their line number so experiment typos fail fast.
"""

from __future__ import annotations

from pathlib import Path

from .data import GEN_KINDS, INPUT_KINDS, GenSpec
from .deepssm import DeepSsmConfig
from .errors import ConfigError
from .training import REG_KINDS, TrainConfig


def _parse_int(text: str) -> int:
    return int(text, 10)


def _parse_float(text: str) -> float:
    return float(text)


def _parse_choice(*choices):
    def parse(text: str) -> str:
        low = text.lower()
        if low not in choices:
            raise ValueError(f"expected one of {choices}")
        return low
    return parse


def _parse_optional_float(text: str):
    if text.lower() in ("none", ""):
        return None
    return float(text)


MODEL_SCHEMA = {
    "n_in": _parse_int,
    "n_out": _parse_int,
    "d_model": _parse_int,
    "n_x": _parse_int,
    "n_layers": _parse_int,
    "nonlinearity": _parse_choice("mlp", "glu"),
    "mlp_hidden": _parse_int,
    "norm": _parse_choice("layernorm", "none"),
    "n_skip_loss": _parse_int,
}

TRAIN_SCHEMA = {
    "learning_rate": _parse_float,
    "epochs": _parse_int,
    "batch_size": _parse_int,
    "subseq_len": _parse_int,
    "overlap": _parse_float,
    "reg_strength": _parse_float,
    "reg_kind": _parse_choice(*REG_KINDS),
    "n_skip": _parse_int,
    "weight_decay": _parse_float,
    "seed": _parse_int,
}

GEN_SCHEMA = {
    "kind": _parse_choice(*GEN_KINDS),
    "n_sequences": _parse_int,
    "length": _parse_int,
    "n_in": _parse_int,
    "n_out": _parse_int,
    "input": _parse_choice(*INPUT_KINDS),
    "input_scale": _parse_float,
    "multisine_bins": _parse_int,
    "noise_level": _parse_float,
    "teacher_n_x": _parse_int,
    "teacher_d_model": _parse_int,
    "teacher_n_layers": _parse_int,
    "sample_rate": _parse_optional_float,
}


def read_key_values(path, schema: dict) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment. Every key must be
    in the schema and appear at most once."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in schema:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = schema[key](value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    return values


def load_run_config(path) -> tuple[DeepSsmConfig, TrainConfig]:
    """The fit/gradcheck config: architecture plus training fields in one file."""
    schema = {**MODEL_SCHEMA, **TRAIN_SCHEMA}
    values = read_key_values(path, schema)
    model_kwargs = {k: v for k, v in values.items() if k in MODEL_SCHEMA}
    train_kwargs = {k: v for k, v in values.items() if k in TRAIN_SCHEMA}
    try:
        return DeepSsmConfig(**model_kwargs), TrainConfig(**train_kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_gen_config(path) -> GenSpec:
    values = read_key_values(path, GEN_SCHEMA)
    try:
        return GenSpec(**values)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
