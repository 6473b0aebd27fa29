"""Loss, sparsity regularizers, exact gradients, AdamW and batching.

Gradients are hand-derived reverse-mode adjoints of the exact forward
computation (see :mod:`statetrim.deepssm`); the regularizer gradients use
closed-form Grammians of the diagonal blocks plus first-order eigenvalue
perturbation, with a finite-difference fallback when the spectrum of the
Grammian product is too clustered for the perturbation formula.

Everything is deterministic for a fixed seed under single-threaded
execution; batches are shuffled with a seeded generator re-derived per
epoch and gradient contributions are reduced in a fixed order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
import scipy.linalg

from .data import Dataset
from .deepssm import DeepSsm, backward_batch, forward_batch
from .errors import (
    ClusteredSpectrum,
    LengthMismatch,
    NonFiniteLoss,
    SequenceTooShort,
)
from .lru import LruParams

Array = np.ndarray

REG_KINDS = ("none", "modal_l1", "hankel_nuclear", "hankel_l2")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

SIGMA_FLOOR = 1e-9


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 10
    batch_size: int = 64
    subseq_len: int = 5000
    overlap: float = 0.0
    reg_strength: float = 0.0
    reg_kind: str = "none"
    n_skip: int = 200
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.reg_kind not in REG_KINDS:
            raise ValueError(f"reg_kind must be one of {REG_KINDS}")
        if self.reg_strength < 0:
            raise ValueError("reg_strength must be >= 0")
        if not 0.0 <= self.overlap < 1.0:
            raise ValueError("overlap must be in [0, 1)")
        if self.n_skip >= self.subseq_len:
            raise ValueError("n_skip must be smaller than subseq_len")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "learning_rate", "epochs", "batch_size", "subseq_len", "overlap",
            "reg_strength", "reg_kind", "n_skip", "weight_decay", "seed")}


# ---------------------------------------------------------------------------
# parameter registry


@dataclass(frozen=True)
class ParamLeaf:
    path: str
    array: Array
    weight_decay: bool


def parameter_leaves(model: DeepSsm) -> list[ParamLeaf]:
    """Flat list of learnable arrays in a fixed order.

    Weight decay is not applied to the eigenvalue parameters nor to
    normalization gains and biases.
    """
    leaves = [ParamLeaf("w_in", model.w_in, True), ParamLeaf("b_in", model.b_in, True)]
    for i, layer in enumerate(model.layers):
        p = f"layers.{i}."
        if layer.norm_gain is not None:
            leaves.append(ParamLeaf(p + "norm_gain", layer.norm_gain, False))
            leaves.append(ParamLeaf(p + "norm_bias", layer.norm_bias, False))
        leaves.append(ParamLeaf(p + "lru.nu", layer.lru.nu, False))
        leaves.append(ParamLeaf(p + "lru.phi", layer.lru.phi, False))
        leaves.append(ParamLeaf(p + "lru.b_tilde", layer.lru.b_tilde, True))
        leaves.append(ParamLeaf(p + "lru.c", layer.lru.c, True))
        leaves.append(ParamLeaf(p + "lru.d", layer.lru.d, True))
        leaves.append(ParamLeaf(p + "nl_w1", layer.nl_w1, True))
        leaves.append(ParamLeaf(p + "nl_b1", layer.nl_b1, True))
        leaves.append(ParamLeaf(p + "nl_w2", layer.nl_w2, True))
        leaves.append(ParamLeaf(p + "nl_b2", layer.nl_b2, True))
    leaves.append(ParamLeaf("w_out", model.w_out, True))
    leaves.append(ParamLeaf("b_out", model.b_out, True))
    return leaves


def real_view(a: Array) -> Array:
    """Float64 view of a parameter or gradient array; complex arrays expose
    interleaved [re, im] slots so optimizers treat each real scalar alike."""
    if np.iscomplexobj(a):
        return a.view(np.float64)
    return a


def gradient_norm(grads: dict[str, Array]) -> float:
    total = 0.0
    for g in grads.values():
        v = real_view(g)
        total += float(np.dot(v.ravel(), v.ravel()))
    return float(np.sqrt(total))


def zero_gradients(model: DeepSsm) -> dict[str, Array]:
    return {leaf.path: np.zeros_like(leaf.array) for leaf in parameter_leaves(model)}


# ---------------------------------------------------------------------------
# fitting loss


def mse_loss(y: Array, y_hat: Array, n_skip: int) -> float:
    """Mean squared error over time steps after the first ``n_skip`` samples.

    Accepts (T, c) pairs or batched (B, T, c) pairs; the mean runs over all
    retained samples and channels.
    """
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.ndim == 1:
        y = y.reshape(-1, 1)
    if y_hat.ndim == 1:
        y_hat = y_hat.reshape(-1, 1)
    if y.shape != y_hat.shape:
        raise LengthMismatch(f"shape mismatch {y.shape} vs {y_hat.shape}")
    if y.shape[-2] <= n_skip:
        raise LengthMismatch("sequences must be longer than n_skip")
    err = y[..., n_skip:, :] - y_hat[..., n_skip:, :]
    return float(np.mean(err * err))


# ---------------------------------------------------------------------------
# regularizers


def reg_modal_l1(model: DeepSsm) -> float:
    """Sum of eigenvalue moduli over all layers; smooth in nu, free of phi."""
    return float(sum(np.exp(-np.exp(layer.lru.nu)).sum() for layer in model.layers))


def _modal_l1_grads(model: DeepSsm) -> dict[str, Array]:
    grads = {}
    for i, layer in enumerate(model.layers):
        nu = layer.lru.nu
        grads[f"layers.{i}.lru.nu"] = -np.exp(nu) * np.exp(-np.exp(nu))
    return grads


def _lru_gram_matrices(p: LruParams) -> dict[str, Array]:
    lam = p.eigenvalues()
    b_eff = p.effective_b()
    mp = 1.0 - lam[:, None] * np.conj(lam)[None, :]
    mq = 1.0 - np.conj(lam)[:, None] * lam[None, :]
    pg = (b_eff @ b_eff.conj().T) / mp
    qg = (p.c.conj().T @ p.c) / mq
    return {"lam": lam, "b_eff": b_eff, "mp": mp, "mq": mq, "p": pg, "q": qg}


def lru_hankel_sigma(p: LruParams) -> Array:
    """Hankel singular values of one block, non-increasing (closed-form
    Grammians, tiny negative eigenvalues clamped)."""
    if p.n_x == 0:
        return np.zeros(0)
    mats = _lru_gram_matrices(p)
    mu = np.linalg.eigvals(mats["p"] @ mats["q"]).real
    sigma = np.sqrt(np.clip(mu, 0.0, None))
    sigma.sort()
    return sigma[::-1]


def reg_hankel_nuclear(model: DeepSsm) -> float:
    """Sum of Hankel singular values of every block (nuclear norm of the
    block's Hankel operator); promotes sparsity in the sigma spectrum."""
    return float(sum(lru_hankel_sigma(layer.lru).sum() for layer in model.layers))


def reg_hankel_l2(model: DeepSsm) -> float:
    """Sum of squared Hankel singular values via trace(P Q); needs no
    eigenvalue differentiation."""
    total = 0.0
    for layer in model.layers:
        mats = _lru_gram_matrices(layer.lru)
        total += float(np.sum(mats["p"] * mats["q"].T).real)
    return total


def _gram_product_gradient(p: LruParams, mats: dict[str, Array],
                           omega: Array) -> dict[str, Array]:
    """Gradients of Re trace(Omega d(P Q)) w.r.t. the block parameters.

    P and Q only enter through their closed elementwise forms, so the chain
    rule reduces to dense matrix algebra: contributions through the
    numerators B B^H and C^H C, through the eigenvalues in the denominators,
    and through the gamma normalization of B.
    """
    lam, b_eff = mats["lam"], mats["b_eff"]
    mp, mq, pg, qg = mats["mp"], mats["mq"], mats["p"], mats["q"]
    e = qg @ omega
    f = omega @ pg
    etil = e.T / mp
    ftil = f.T / mq

    c_bar = p.c @ (ftil.T + np.conj(ftil))
    b_bar = (etil.T + np.conj(etil)) @ b_eff
    gamma = p.gamma()
    b_tilde_bar = gamma[:, None] * b_bar
    gamma_bar = np.einsum("nm,nm->n", b_bar, np.conj(p.b_tilde)).real

    hp = etil * pg
    hq = ftil * qg
    k = hp @ np.conj(lam) + np.conj(hp.T @ lam) + np.conj(hq @ lam) + hq.T @ np.conj(lam)

    exp_nu = np.exp(p.nu)
    mod2 = np.exp(-2.0 * exp_nu)
    nu_bar = -exp_nu * (k * lam).real + gamma_bar * exp_nu * mod2 / gamma
    phi_bar = -np.exp(p.phi) * (k * lam).imag
    return {"nu": nu_bar, "phi": phi_bar, "b_tilde": b_tilde_bar, "c": c_bar}


def hankel_sv_gradients(p: LruParams, sigma_floor: float = SIGMA_FLOOR) -> dict[str, Array]:
    """Exact gradient of the sum of Hankel singular values of one block.

    Uses first-order perturbation of the eigenvalues of P Q,
    ``d mu_j = (w_j^H d(PQ) v_j) / (w_j^H v_j)`` with
    ``d sigma_j = d mu_j / (2 sigma_j)``. Values below ``sigma_floor`` get a
    zero gradient (they are already maximally reduced and the square root is
    not differentiable at zero). Raises :class:`ClusteredSpectrum` when the
    participating eigenvalues are not well separated or the left/right
    eigenvector pairing is ill-conditioned.
    """
    if p.n_x == 0:
        return {"nu": np.zeros(0), "phi": np.zeros(0),
                "b_tilde": np.zeros_like(p.b_tilde), "c": np.zeros_like(p.c)}
    mats = _lru_gram_matrices(p)
    m = mats["p"] @ mats["q"]
    mu, vl, vr = scipy.linalg.eig(m, left=True, right=True)
    mu_real = mu.real
    sigma = np.sqrt(np.clip(mu_real, 0.0, None))
    active = sigma > sigma_floor
    if not np.any(active):
        zero = _gram_product_gradient(p, mats, np.zeros_like(m))
        return zero
    scale = max(float(np.max(np.abs(mu))), 1.0)
    for j in np.flatnonzero(active):
        others = np.abs(mu - mu[j])
        others[j] = np.inf
        if float(others.min()) < 1e-10 * scale:
            raise ClusteredSpectrum(
                "eigenvalues of P Q are not simple within 1e-10 separation")
    denom = np.einsum("ij,ij->j", np.conj(vl), vr)
    if np.any(np.abs(denom[active]) < 1e-8):
        raise ClusteredSpectrum("left/right eigenvector pairing is ill-conditioned")
    weights = np.zeros(mu.size, dtype=np.complex128)
    weights[active] = 1.0 / (2.0 * sigma[active] * denom[active])
    omega = (vr * weights[None, :]) @ vl.conj().T
    return _gram_product_gradient(p, mats, omega)


def _lru_fd_hankel_grads(p: LruParams, eps: float = 1e-6) -> dict[str, Array]:
    """Central-difference gradient of the sigma sum; desk-scale fallback."""
    work = p.copy()

    def value() -> float:
        return float(lru_hankel_sigma(work).sum())

    grads = {}
    for name in ("nu", "phi", "b_tilde", "c"):
        arr = getattr(work, name)
        view = real_view(arr)
        out = np.zeros_like(view)
        flat_v = view.reshape(-1)
        flat_o = out.reshape(-1)
        for idx in range(flat_v.size):
            orig = flat_v[idx]
            flat_v[idx] = orig + eps
            hi = value()
            flat_v[idx] = orig - eps
            lo = value()
            flat_v[idx] = orig
            flat_o[idx] = (hi - lo) / (2.0 * eps)
        grads[name] = out.view(np.complex128) if np.iscomplexobj(arr) else out
    return grads


def reg_value(model: DeepSsm, kind: str) -> float:
    if kind == "none":
        return 0.0
    if kind == "modal_l1":
        return reg_modal_l1(model)
    if kind == "hankel_nuclear":
        return reg_hankel_nuclear(model)
    if kind == "hankel_l2":
        return reg_hankel_l2(model)
    raise ValueError(f"unknown reg_kind {kind!r}")


def reg_gradients(model: DeepSsm, kind: str) -> dict[str, Array]:
    """Gradient of the chosen regularizer; only recurrent-block leaves appear."""
    if kind == "none":
        return {}
    if kind == "modal_l1":
        return _modal_l1_grads(model)
    grads: dict[str, Array] = {}
    for i, layer in enumerate(model.layers):
        if kind == "hankel_nuclear":
            try:
                g = hankel_sv_gradients(layer.lru)
            except ClusteredSpectrum:
                g = _lru_fd_hankel_grads(layer.lru)
        else:  # hankel_l2
            mats = _lru_gram_matrices(layer.lru)
            g = _gram_product_gradient(layer.lru, mats,
                                       np.eye(layer.lru.n_x, dtype=np.complex128))
        for name, val in g.items():
            grads[f"layers.{i}.lru.{name}"] = val
    return grads


# ---------------------------------------------------------------------------
# total loss and gradients


def _normalize_batch(batch) -> tuple[Array, Array]:
    u, y = batch
    u = np.asarray(u, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if u.ndim == 2:
        u = u[None]
    if y.ndim == 2:
        y = y[None]
    if u.shape[:2] != y.shape[:2]:
        raise LengthMismatch("input and target batches must align in batch and time")
    return u, y


def total_loss(model: DeepSsm, batch, cfg: TrainConfig) -> float:
    loss, _, _ = _loss_terms(model, batch, cfg)
    return loss


def _loss_terms(model: DeepSsm, batch, cfg: TrainConfig,
                cache_out: list | None = None) -> tuple[float, float, float]:
    u, y = _normalize_batch(batch)
    want_cache = cache_out is not None
    y_hat, cache = forward_batch(model, u, want_cache=want_cache)
    if want_cache:
        cache_out.append((y, y_hat, cache))
    mse = mse_loss(y, y_hat, cfg.n_skip)
    reg = reg_value(model, cfg.reg_kind)
    loss = mse + cfg.reg_strength * reg
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss is not finite: {loss}")
    return loss, mse, reg


def loss_and_gradients(model: DeepSsm, batch, cfg: TrainConfig
                       ) -> tuple[float, float, float, dict[str, Array]]:
    holder: list = []
    loss, mse, reg = _loss_terms(model, batch, cfg, cache_out=holder)
    y, y_hat, cache = holder[0]
    n_skip = cfg.n_skip
    count = y.shape[0] * (y.shape[1] - n_skip) * y.shape[2]
    dout = np.zeros_like(y_hat)
    dout[:, n_skip:, :] = 2.0 * (y_hat[:, n_skip:, :] - y[:, n_skip:, :]) / count
    grads = backward_batch(model, cache, dout)
    if cfg.reg_strength > 0.0 and cfg.reg_kind != "none":
        for path, g in reg_gradients(model, cfg.reg_kind).items():
            grads[path] = grads[path] + cfg.reg_strength * g
    for path, g in grads.items():
        if not np.all(np.isfinite(real_view(g))):
            raise NonFiniteLoss(f"gradient for {path} is not finite")
    return loss, mse, reg, grads


def gradients(model: DeepSsm, batch, cfg: TrainConfig) -> dict[str, Array]:
    return loss_and_gradients(model, batch, cfg)[3]


def finite_difference_check(model: DeepSsm, batch, cfg: TrainConfig,
                            eps: float = 1e-5) -> dict[str, float]:
    """Compare analytic gradients with central finite differences.

    Perturbs every real scalar slot (real and imaginary parts separately)
    of every parameter leaf and reports the worst relative error per leaf,
    with ``rel_err = |a - n| / max(|a|, |n|, 1)``.
    """
    analytic = gradients(model, batch, cfg)
    worst: dict[str, float] = {}
    for leaf in parameter_leaves(model):
        view = real_view(leaf.array).reshape(-1)
        a = real_view(analytic[leaf.path]).reshape(-1)
        err = 0.0
        for idx in range(view.size):
            orig = view[idx]
            view[idx] = orig + eps
            hi = total_loss(model, batch, cfg)
            view[idx] = orig - eps
            lo = total_loss(model, batch, cfg)
            view[idx] = orig
            numeric = (hi - lo) / (2.0 * eps)
            denom = max(abs(a[idx]), abs(numeric), 1.0)
            err = max(err, abs(a[idx] - numeric) / denom)
        worst[leaf.path] = err
    return worst


# ---------------------------------------------------------------------------
# optimizer


def adamw_init(model: DeepSsm) -> dict:
    state = {"step": 0, "m": {}, "v": {}}
    for leaf in parameter_leaves(model):
        shape = real_view(leaf.array).shape
        state["m"][leaf.path] = np.zeros(shape)
        state["v"][leaf.path] = np.zeros(shape)
    return state


def adamw_step(model: DeepSsm, grads: dict[str, Array], state: dict,
               cfg: TrainConfig) -> None:
    """Decoupled-weight-decay Adam update, in place.

    Complex parameters are updated through their float views, i.e. real and
    imaginary parts are independent optimizer slots.
    """
    state["step"] += 1
    t = state["step"]
    bc1 = 1.0 - ADAM_BETA1 ** t
    bc2 = 1.0 - ADAM_BETA2 ** t
    lr = cfg.learning_rate
    for leaf in parameter_leaves(model):
        g = real_view(grads[leaf.path])
        m = state["m"][leaf.path]
        v = state["v"][leaf.path]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
        p = real_view(leaf.array)
        if leaf.weight_decay and cfg.weight_decay > 0.0:
            p *= 1.0 - lr * cfg.weight_decay
        p -= lr * update


# ---------------------------------------------------------------------------
# batching protocol


def subsequence_starts(length: int, n: int, overlap: float) -> list[int]:
    """Window start offsets: stride floor(n * (1 - overlap)), at least 1."""
    if length < n:
        raise SequenceTooShort(f"sequence of length {length} is shorter than {n}")
    stride = max(1, int(n * (1.0 - overlap)))
    return list(range(0, length - n + 1, stride))


def make_subsequences(dataset: Dataset, n: int, overlap: float, batch_size: int,
                      seed: int) -> Iterator[tuple[Array, Array]]:
    """Seeded shuffled stream of (u, y) windows of length n, in batches.

    Windows are enumerated deterministically over sequences sorted by name,
    shuffled once with the given seed, then grouped; the final partial batch
    is kept.
    """
    windows = []
    for name in sorted(dataset.sequences):
        seq = dataset.sequences[name]
        for start in subsequence_starts(seq.u.shape[0], n, overlap):
            windows.append((name, start))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(windows))
    for lo in range(0, len(windows), batch_size):
        chunk = [windows[i] for i in order[lo:lo + batch_size]]
        u = np.stack([dataset.sequences[name].u[s:s + n] for name, s in chunk])
        y = np.stack([dataset.sequences[name].y[s:s + n] for name, s in chunk])
        yield u, y


# ---------------------------------------------------------------------------
# training loop


def train(model: DeepSsm, dataset: Dataset, cfg: TrainConfig,
          *, max_steps: int | None = None,
          log_fn: Callable[[dict], None] | None = None) -> tuple[list[dict], dict]:
    """Optimize the model in place; returns (history, optimizer_state).

    One history record per step: step, epoch, loss, mse, reg, grad_norm and
    wall_ms. ``max_steps`` caps the total number of updates regardless of
    epochs.
    """
    state = adamw_init(model)
    history: list[dict] = []
    step = 0
    for epoch in range(cfg.epochs):
        epoch_seed = int(np.random.SeedSequence([cfg.seed, epoch]).generate_state(1)[0])
        for batch in make_subsequences(dataset, cfg.subseq_len, cfg.overlap,
                                       cfg.batch_size, epoch_seed):
            t0 = time.perf_counter()
            loss, mse, reg, grads = loss_and_gradients(model, batch, cfg)
            adamw_step(model, grads, state, cfg)
            step += 1
            record = {
                "step": step,
                "epoch": epoch,
                "loss": loss,
                "mse": mse,
                "reg": reg,
                "grad_norm": gradient_norm(grads),
                "wall_ms": (time.perf_counter() - t0) * 1e3,
            }
            history.append(record)
            if log_fn is not None:
                log_fn(record)
            if max_steps is not None and step >= max_steps:
                return history, state
    return history, state
