"""JSON persistence for models, optimizer state and reduction reports.

Floats are emitted through Python's shortest round-trip repr, so a save
followed by a load reproduces every parameter bit for bit; complex entries
are stored as [re, im] pairs. The model document is versioned with a
``format_version`` field.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .deepssm import DeepSsm, DeepSsmConfig, LayerParams
from .lru import LruParams

MODEL_FORMAT_VERSION = 1


def _real_array(a: np.ndarray):
    return np.asarray(a, dtype=np.float64).tolist()


def _complex_array(a: np.ndarray):
    a = np.asarray(a, dtype=np.complex128)
    stacked = np.stack([a.real, a.imag], axis=-1)
    return stacked.tolist()


def _from_real(obj, shape=None) -> np.ndarray:
    arr = np.asarray(obj, dtype=np.float64)
    if shape is not None and arr.size == 0:
        arr = arr.reshape(shape)
    return arr


def _from_complex(obj, shape) -> np.ndarray:
    arr = np.asarray(obj, dtype=np.float64)
    if arr.size == 0:
        return np.zeros(shape, dtype=np.complex128)
    return arr[..., 0] + 1j * arr[..., 1]


def lru_to_dict(p: LruParams) -> dict:
    return {
        "nu": _real_array(p.nu),
        "phi": _real_array(p.phi),
        "b_tilde": _complex_array(p.b_tilde),
        "c": _complex_array(p.c),
        "d": _real_array(p.d),
        "n_x": p.n_x,
        "n_u": p.n_u,
        "n_y": p.n_y,
    }


def lru_from_dict(obj: dict) -> LruParams:
    n_x, n_u, n_y = obj["n_x"], obj["n_u"], obj["n_y"]
    return LruParams(
        _from_real(obj["nu"], (n_x,)),
        _from_real(obj["phi"], (n_x,)),
        _from_complex(obj["b_tilde"], (n_x, n_u)),
        _from_complex(obj["c"], (n_y, n_x)),
        _from_real(obj["d"], (n_y, n_u)),
    )


def model_to_dict(model: DeepSsm) -> dict:
    layers = []
    for layer in model.layers:
        entry = {
            "lru": lru_to_dict(layer.lru),
            "norm": None,
            "nl_w1": _real_array(layer.nl_w1),
            "nl_b1": _real_array(layer.nl_b1),
            "nl_w2": _real_array(layer.nl_w2),
            "nl_b2": _real_array(layer.nl_b2),
        }
        if layer.norm_gain is not None:
            entry["norm"] = {"gain": _real_array(layer.norm_gain),
                             "bias": _real_array(layer.norm_bias)}
        layers.append(entry)
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "config": model.config.to_dict(),
        "input_proj": {"weight": _real_array(model.w_in), "bias": _real_array(model.b_in)},
        "output_proj": {"weight": _real_array(model.w_out), "bias": _real_array(model.b_out)},
        "layers": layers,
    }


def model_from_dict(obj: dict) -> DeepSsm:
    version = obj.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {version!r}")
    config = DeepSsmConfig(**obj["config"])
    layers = []
    for entry in obj["layers"]:
        norm = entry.get("norm")
        gain = _from_real(norm["gain"]) if norm else None
        bias = _from_real(norm["bias"]) if norm else None
        layers.append(LayerParams(
            lru=lru_from_dict(entry["lru"]),
            norm_gain=gain,
            norm_bias=bias,
            nl_w1=_from_real(entry["nl_w1"]),
            nl_b1=_from_real(entry["nl_b1"]),
            nl_w2=_from_real(entry["nl_w2"]),
            nl_b2=_from_real(entry["nl_b2"]),
        ))
    if len(layers) != config.n_layers:
        raise ValueError("layer count does not match the config")
    return DeepSsm(
        config,
        _from_real(obj["input_proj"]["weight"]),
        _from_real(obj["input_proj"]["bias"]),
        _from_real(obj["output_proj"]["weight"]),
        _from_real(obj["output_proj"]["bias"]),
        layers,
    )


def save_model(model: DeepSsm, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n",
                          encoding="utf-8")


def load_model(path) -> DeepSsm:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def optimizer_state_to_dict(state: dict) -> dict:
    return {
        "step": state["step"],
        "m": {k: _real_array(v) for k, v in state["m"].items()},
        "v": {k: _real_array(v) for k, v in state["v"].items()},
    }


def optimizer_state_from_dict(obj: dict) -> dict:
    return {
        "step": int(obj["step"]),
        "m": {k: _from_real(v) for k, v in obj["m"].items()},
        "v": {k: _from_real(v) for k, v in obj["v"].items()},
    }


def save_optimizer_state(state: dict, path) -> None:
    Path(path).write_text(json.dumps(optimizer_state_to_dict(state)) + "\n",
                          encoding="utf-8")


def load_optimizer_state(path) -> dict:
    return optimizer_state_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def load_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
