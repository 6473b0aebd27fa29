"""Per-channel fit, RMSE and NRMSE, and whole-dataset model evaluation.

Definitions of record (computed per channel over the evaluation window):
``fit = 100 * (1 - ||y - y_hat|| / ||y - mean(y)||)``,
``rmse = sqrt(mean((y - y_hat)^2))`` and ``nrmse = rmse / std(y)`` with the
population standard deviation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .deepssm import DeepSsm, forward
from .errors import LengthMismatch, ZeroVariance

Array = np.ndarray


@dataclass
class Metrics:
    fit: Array
    rmse: Array
    nrmse: Array

    @property
    def average_fit(self) -> float:
        return float(np.mean(self.fit))

    def to_dict(self) -> dict:
        return {
            "fit": [float(v) for v in self.fit],
            "rmse": [float(v) for v in self.rmse],
            "nrmse": [float(v) for v in self.nrmse],
            "average_fit": self.average_fit,
        }


def _as_channels(a: Array) -> Array:
    a = np.asarray(a, dtype=np.float64)
    return a.reshape(-1, 1) if a.ndim == 1 else a


def metrics(y: Array, y_hat: Array) -> Metrics:
    """Per-channel metrics; raises :class:`ZeroVariance` on constant targets."""
    y = _as_channels(y)
    y_hat = _as_channels(y_hat)
    if y.shape != y_hat.shape:
        raise LengthMismatch(f"shape mismatch {y.shape} vs {y_hat.shape}")
    mean = y.mean(axis=0)
    std = y.std(axis=0)
    if np.any(std == 0.0):
        raise ZeroVariance("a target channel is constant; fit and NRMSE are undefined")
    err = y - y_hat
    rmse = np.sqrt(np.mean(err ** 2, axis=0))
    denom = np.sqrt(np.sum((y - mean) ** 2, axis=0))
    fit = 100.0 * (1.0 - np.sqrt(np.sum(err ** 2, axis=0)) / denom)
    nrmse = rmse / std
    return Metrics(fit=fit, rmse=rmse, nrmse=nrmse)


def evaluate_model(model: DeepSsm, dataset: Dataset, n_skip: int | None = None) -> Metrics:
    """Simulate every sequence from zero state, drop the first ``n_skip``
    samples of each (default: the model's configured loss skip) and pool
    the remainder for per-channel metrics."""
    if n_skip is None:
        n_skip = model.config.n_skip_loss
    refs = []
    preds = []
    for name in sorted(dataset.sequences):
        seq = dataset.sequences[name]
        if seq.u.shape[0] <= n_skip:
            raise LengthMismatch(
                f"sequence {name!r} is shorter than the evaluation skip {n_skip}")
        y_hat = forward(model, seq.u)
        refs.append(seq.y[n_skip:])
        preds.append(y_hat[n_skip:])
    return metrics(np.concatenate(refs, axis=0), np.concatenate(preds, axis=0))
