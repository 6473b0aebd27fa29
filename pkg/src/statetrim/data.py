"""Datasets: named input/output sequences, CSV on disk, synthetic generators.

On disk a dataset is a directory with one CSV per named sequence, header
``u1..u{n_in},y1..y{n_out}``, UTF-8, '.' decimal. An optional
``metadata.json`` carries the sample rate and channel names; loading works
from bare CSVs alone so externally produced data can be dropped in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

Array = np.ndarray


@dataclass
class SequenceRecord:
    u: Array
    y: Array

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.u.ndim != 2 or self.y.ndim != 2:
            raise ValueError("u and y must be 2-D (T, channels)")
        if self.u.shape[0] != self.y.shape[0]:
            raise ValueError("u and y must have the same length")
        if not (np.isfinite(self.u).all() and np.isfinite(self.y).all()):
            raise ValueError("sequences must not contain missing or non-finite values")


@dataclass
class Dataset:
    sequences: dict[str, SequenceRecord] = field(default_factory=dict)
    sample_rate: float | None = None
    input_names: list[str] | None = None
    output_names: list[str] | None = None

    @property
    def n_in(self) -> int:
        first = next(iter(self.sequences.values()))
        return first.u.shape[1]

    @property
    def n_out(self) -> int:
        first = next(iter(self.sequences.values()))
        return first.y.shape[1]


def _format_row(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def save_dataset(dataset: Dataset, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in sorted(dataset.sequences):
        seq = dataset.sequences[name]
        n_in, n_out = seq.u.shape[1], seq.y.shape[1]
        header = ",".join([f"u{i + 1}" for i in range(n_in)]
                          + [f"y{i + 1}" for i in range(n_out)])
        lines = [header]
        for k in range(seq.u.shape[0]):
            lines.append(_format_row(list(seq.u[k]) + list(seq.y[k])))
        (directory / f"{name}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    meta = {
        "sample_rate": dataset.sample_rate,
        "input_names": dataset.input_names,
        "output_names": dataset.output_names,
    }
    (directory / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n",
                                             encoding="utf-8")


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    files = sorted(directory.glob("*.csv"))
    if not files:
        raise FileNotFoundError(f"no CSV sequences found in {directory}")
    sequences = {}
    for path in files:
        with path.open("r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            columns = header.split(",")
            n_in = sum(1 for c in columns if c.startswith("u"))
            n_out = sum(1 for c in columns if c.startswith("y"))
            if n_in + n_out != len(columns) or n_in == 0 or n_out == 0:
                raise ValueError(f"{path.name}: header must be u1..un,y1..ym, got {header!r}")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        if data.shape[1] != len(columns):
            raise ValueError(f"{path.name}: row width does not match header")
        sequences[path.stem] = SequenceRecord(data[:, :n_in], data[:, n_in:])
    meta_path = directory / "metadata.json"
    sample_rate = input_names = output_names = None
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        sample_rate = meta.get("sample_rate")
        input_names = meta.get("input_names")
        output_names = meta.get("output_names")
    return Dataset(sequences, sample_rate, input_names, output_names)


# ---------------------------------------------------------------------------
# synthetic data


def multisine(length: int, bins: list[int], rng: np.random.Generator,
              rms: float = 1.0) -> Array:
    """Sum of sines at the commanded integer frequency bins, random phases,
    scaled to the requested RMS. The spectrum is exactly zero off the bins."""
    k = np.arange(length)
    signal = np.zeros(length)
    for b in bins:
        phase = rng.uniform(0.0, 2.0 * np.pi)
        signal += np.sin(2.0 * np.pi * b * k / length + phase)
    scale = np.sqrt(np.mean(signal ** 2))
    if scale > 0:
        signal *= rms / scale
    return signal


GEN_KINDS = ("lti", "deepssm")
INPUT_KINDS = ("white", "multisine")


@dataclass
class GenSpec:
    """Recipe for a synthetic dataset with a known teacher."""

    kind: str = "lti"
    n_sequences: int = 2
    length: int = 2048
    n_in: int = 1
    n_out: int = 1
    input: str = "white"
    input_scale: float = 1.0
    multisine_bins: int = 20
    noise_level: float = 0.0
    teacher_n_x: int = 4
    teacher_d_model: int = 8
    teacher_n_layers: int = 2
    sample_rate: float | None = None

    def __post_init__(self):
        if self.kind not in GEN_KINDS:
            raise ValueError(f"kind must be one of {GEN_KINDS}")
        if self.input not in INPUT_KINDS:
            raise ValueError(f"input must be one of {INPUT_KINDS}")
        if self.n_sequences < 1 or self.length < 2:
            raise ValueError("need at least one sequence of length >= 2")
        if self.noise_level < 0:
            raise ValueError("noise_level must be >= 0")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "kind", "n_sequences", "length", "n_in", "n_out", "input",
            "input_scale", "multisine_bins", "noise_level", "teacher_n_x",
            "teacher_d_model", "teacher_n_layers", "sample_rate")}


def _draw_input(spec: GenSpec, rng: np.random.Generator) -> tuple[Array, list[int]]:
    if spec.input == "white":
        return spec.input_scale * rng.standard_normal((spec.length, spec.n_in)), []
    max_bin = max(spec.length // 4, 2)
    bins = sorted(rng.choice(np.arange(1, max_bin), size=min(spec.multisine_bins, max_bin - 1),
                             replace=False).tolist())
    u = np.column_stack([multisine(spec.length, bins, rng, rms=spec.input_scale)
                         for _ in range(spec.n_in)])
    return u, [int(b) for b in bins]


def gen_data(spec: GenSpec, seed: int) -> tuple[Dataset, dict]:
    """Deterministic synthetic dataset plus a description of its teacher.

    The returned info dict contains the serialized teacher (state-space
    JSON for the LTI kind, model JSON for the deep kind), the generator
    settings and, for multisine inputs, the commanded bins per sequence.
    """
    from . import lru as lru_mod
    from . import serialization
    from .deepssm import DeepSsmConfig, forward, init_deep_ssm
    from .linalg import state_space_to_dict

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    info: dict = {"spec": spec.to_dict(), "seed": seed, "bins": {}}
    if spec.kind == "lti":
        teacher = lru_mod.init_lru(rng, spec.teacher_n_x, spec.n_in, spec.n_out)
        simulate = lambda u: lru_mod.simulate_scan(teacher, u)
        info["teacher_kind"] = "lti"
        info["teacher"] = state_space_to_dict(lru_mod.to_state_space(teacher))
    else:
        cfg = DeepSsmConfig(n_in=spec.n_in, n_out=spec.n_out,
                            d_model=spec.teacher_d_model, n_x=spec.teacher_n_x,
                            n_layers=spec.teacher_n_layers, n_skip_loss=0)
        teacher = init_deep_ssm(cfg, rng)
        simulate = lambda u: forward(teacher, u)
        info["teacher_kind"] = "deepssm"
        info["teacher"] = serialization.model_to_dict(teacher)

    sequences = {}
    for i in range(spec.n_sequences):
        u, bins = _draw_input(spec, rng)
        y = simulate(u)
        if spec.noise_level > 0:
            std = y.std(axis=0, keepdims=True)
            y = y + spec.noise_level * std * rng.standard_normal(y.shape)
        name = f"seq{i:03d}"
        sequences[name] = SequenceRecord(u, y)
        if bins:
            info["bins"][name] = bins
    dataset = Dataset(sequences, spec.sample_rate,
                      [f"u{i + 1}" for i in range(spec.n_in)],
                      [f"y{i + 1}" for i in range(spec.n_out)])
    return dataset, info
