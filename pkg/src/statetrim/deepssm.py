"""Deep recurrent architecture: projections, normalization, recurrent blocks,
static nonlinearities and skip connections.

Each layer computes ``s = u + f(LRU(Norm(u)))`` over a whole sequence; the
input and output projections map between the external channel counts and the
internal width. The forward pass is causal sample by sample because
normalization and nonlinearities act per time step and the recurrence only
looks backwards.

The module also implements the exact reverse-mode pass used for training.
Complex parameter gradients follow the convention
``grad(z) = dL/dRe(z) + i dL/dIm(z)``, so the float view of a complex
gradient array lines up entry by entry with the float view of the parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .lru import LruParams, init_lru, scan_time_major

Array = np.ndarray

_LN_EPS = 1e-5
_NONLINEARITIES = ("mlp", "glu")
_NORMS = ("layernorm", "none")


@dataclass
class DeepSsmConfig:
    n_in: int = 1
    n_out: int = 1
    d_model: int = 8
    n_x: int = 12
    n_layers: int = 2
    nonlinearity: str = "mlp"
    mlp_hidden: int = 32
    norm: str = "layernorm"
    n_skip_loss: int = 200

    def __post_init__(self):
        for name in ("n_in", "n_out", "d_model", "n_x", "n_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.nonlinearity not in _NONLINEARITIES:
            raise ValueError(f"nonlinearity must be one of {_NONLINEARITIES}")
        if self.nonlinearity == "mlp" and self.mlp_hidden < 1:
            raise ValueError("mlp_hidden must be >= 1")
        if self.norm not in _NORMS:
            raise ValueError(f"norm must be one of {_NORMS}")
        if self.n_skip_loss < 0:
            raise ValueError("n_skip_loss must be >= 0")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "n_in", "n_out", "d_model", "n_x", "n_layers",
            "nonlinearity", "mlp_hidden", "norm", "n_skip_loss")}


@dataclass
class LayerParams:
    """One repeated layer: optional norm, recurrent block, static nonlinearity."""

    lru: LruParams
    norm_gain: Array | None
    norm_bias: Array | None
    nl_w1: Array
    nl_b1: Array
    nl_w2: Array
    nl_b2: Array


@dataclass
class DeepSsm:
    config: DeepSsmConfig
    w_in: Array
    b_in: Array
    w_out: Array
    b_out: Array
    layers: list[LayerParams] = field(default_factory=list)


def init_deep_ssm(config: DeepSsmConfig, seed_or_rng) -> DeepSsm:
    """Randomly initialized model; projections and nonlinearities use
    1/sqrt(fan_in) Gaussian weights with zero biases."""
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) \
        else np.random.default_rng(seed_or_rng)
    d = config.d_model

    def dense(n_out: int, n_in: int) -> Array:
        return rng.standard_normal((n_out, n_in)) / np.sqrt(n_in)

    layers = []
    for _ in range(config.n_layers):
        lru = init_lru(rng, config.n_x, d, d)
        if config.norm == "layernorm":
            gain, bias = np.ones(d), np.zeros(d)
        else:
            gain = bias = None
        if config.nonlinearity == "mlp":
            h = config.mlp_hidden
            layer = LayerParams(lru, gain, bias,
                                dense(h, d), np.zeros(h), dense(d, h), np.zeros(d))
        else:
            layer = LayerParams(lru, gain, bias,
                                dense(d, d), np.zeros(d), dense(d, d), np.zeros(d))
        layers.append(layer)
    return DeepSsm(config, dense(d, config.n_in), np.zeros(d),
                   dense(config.n_out, d), np.zeros(config.n_out), layers)


def _gauss_cdf(x: Array) -> Array:
    return 0.5 * (1.0 + erf(x / np.sqrt(2.0)))


def gelu(x: Array) -> Array:
    """Exact Gaussian error linear unit 0.5 x (1 + erf(x / sqrt(2)))."""
    return x * _gauss_cdf(x)


def _gelu_grad(x: Array, cdf: Array | None = None) -> Array:
    if cdf is None:
        cdf = _gauss_cdf(x)
    return cdf + x * np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def _sigmoid(x: Array) -> Array:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def layer_norm(v: Array, gain: Array, bias: Array) -> Array:
    """Normalize over the last (feature) axis with population variance."""
    mean = v.mean(axis=-1, keepdims=True)
    var = v.var(axis=-1, keepdims=True)
    return (v - mean) / np.sqrt(var + _LN_EPS) * gain + bias


def mlp_gelu(v: Array, w1: Array, b1: Array, w2: Array, b2: Array) -> Array:
    """One-hidden-layer perceptron with exact-erf GELU activation."""
    return gelu(v @ w1.T + b1) @ w2.T + b2


def glu(v: Array, w1: Array, b1: Array, w2: Array, b2: Array) -> Array:
    """Gated linear unit (W1 v + b1) * sigmoid(W2 v + b2)."""
    return (v @ w1.T + b1) * _sigmoid(v @ w2.T + b2)


# ---------------------------------------------------------------------------
# forward with caches


def _flat(a: Array) -> Array:
    return a.reshape(-1, a.shape[-1])


def _unflat(a: Array, like: Array) -> Array:
    return a.reshape(like.shape[:-1] + (a.shape[-1],))


def _lru_forward(p: LruParams, u: Array, want_cache: bool):
    # u is time-major (T, B, n_u); so are x and y
    lam = p.eigenvalues()
    b_eff = p.effective_b()
    u2 = _flat(u)
    x = scan_time_major(lam, _unflat(u2 @ b_eff.T, u))
    y = _unflat((_flat(x) @ p.c.T).real + u2 @ p.d.T, u)
    cache = {"u": u, "x": x, "lam": lam, "b_eff": b_eff} if want_cache else None
    return y, cache


def _nl_forward(layer: LayerParams, kind: str, v: Array, want_cache: bool):
    v2 = _flat(v)
    if kind == "mlp":
        pre = v2 @ layer.nl_w1.T + layer.nl_b1
        cdf = _gauss_cdf(pre)
        act = pre * cdf
        out = _unflat(act @ layer.nl_w2.T + layer.nl_b2, v)
        cache = {"v": v, "pre": pre, "act": act, "cdf": cdf} if want_cache else None
    else:
        a1 = v2 @ layer.nl_w1.T + layer.nl_b1
        a2 = v2 @ layer.nl_w2.T + layer.nl_b2
        sig = _sigmoid(a2)
        out = _unflat(a1 * sig, v)
        cache = {"v": v, "a1": a1, "sig": sig} if want_cache else None
    return out, cache


def _norm_forward(layer: LayerParams, v: Array, want_cache: bool):
    if layer.norm_gain is None:
        return v, None
    mean = v.mean(axis=-1, keepdims=True)
    var = v.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (v - mean) * inv
    out = xhat * layer.norm_gain + layer.norm_bias
    cache = {"xhat": xhat, "inv": inv} if want_cache else None
    return out, cache


def layer_forward(layer: LayerParams, kind: str, u_seq: Array) -> Array:
    """Norm -> recurrent block -> nonlinearity, with the skip from the input."""
    normed, _ = _norm_forward(layer, u_seq, False)
    y, _ = _lru_forward(layer.lru, normed, False)
    z, _ = _nl_forward(layer, kind, y, False)
    return u_seq + z


def forward_batch(model: DeepSsm, u: Array, want_cache: bool = False):
    """Evaluate a batch (B, T, n_in) -> (B, T, n_out), optionally caching
    every intermediate needed by :func:`backward_batch`."""
    u = np.asarray(u, dtype=np.float64)
    u_tm = np.ascontiguousarray(np.moveaxis(u, 0, 1))  # (T, B, n_in)
    h = _unflat(_flat(u_tm) @ model.w_in.T + model.b_in, u_tm)
    caches = []
    kind = model.config.nonlinearity
    for layer in model.layers:
        a = h
        normed, norm_cache = _norm_forward(layer, a, want_cache)
        y, lru_cache = _lru_forward(layer.lru, normed, want_cache)
        z, nl_cache = _nl_forward(layer, kind, y, want_cache)
        h = a + z
        if want_cache:
            caches.append({"a": a, "norm": norm_cache, "lru": lru_cache, "nl": nl_cache})
    out = _unflat(_flat(h) @ model.w_out.T + model.b_out, h)
    cache = {"u": u_tm, "h_last": h, "layers": caches} if want_cache else None
    return np.ascontiguousarray(np.moveaxis(out, 0, 1)), cache


def forward(model: DeepSsm, u_seq: Array) -> Array:
    """Single-sequence forward (T, n_in) -> (T, n_out)."""
    u_seq = np.asarray(u_seq, dtype=np.float64)
    if u_seq.ndim != 2 or u_seq.shape[1] != model.config.n_in:
        raise ValueError(f"u_seq must be (T, {model.config.n_in})")
    out, _ = forward_batch(model, u_seq[None])
    return out[0]


# ---------------------------------------------------------------------------
# reverse-mode pass


def _lru_backward(p: LruParams, cache: dict, dy: Array):
    """Adjoint of the recurrent block.

    The state cotangent obeys the reversed recurrence
    ``xbar_k = C^H gbar_k + conj(lam) xbar_{k+1}``, which is again a linear
    recurrence and reuses the scan. Holomorphic chain rules carry the
    cotangent onto lam and the couplings; the gamma normalization adds a
    second, real path into nu.
    """
    u, x, lam, b_eff = cache["u"], cache["x"], cache["lam"], cache["b_eff"]
    u2, dy2 = _flat(u), _flat(dy)
    dyc = dy2.astype(np.complex128)
    grads = {}
    grads["d"] = dy2.T @ u2
    du2 = dy2 @ p.d

    xbar_drive = _unflat(dyc @ np.conj(p.c), dy)
    xbar = scan_time_major(np.conj(lam), xbar_drive[::-1])[::-1]
    xbar2 = _flat(np.ascontiguousarray(xbar))
    x2 = _flat(x)

    grads["c"] = dyc.T @ np.conj(x2)

    lam_bar = np.einsum("tbn,tbn->n", np.conj(x[:-1]), xbar[1:])

    b_bar = xbar2.T @ u2
    du = _unflat(du2 + (xbar2 @ np.conj(b_eff)).real, dy)

    gamma = p.gamma()
    grads["b_tilde"] = gamma[:, None] * b_bar
    gamma_bar = np.einsum("nm,nm->n", b_bar, np.conj(p.b_tilde)).real

    exp_nu = np.exp(p.nu)
    mod2 = np.exp(-2.0 * exp_nu)  # |lam|^2
    nu_from_lam = -exp_nu * (np.conj(lam) * lam_bar).real
    nu_from_gamma = gamma_bar * exp_nu * mod2 / gamma
    grads["nu"] = nu_from_lam + nu_from_gamma
    grads["phi"] = np.exp(p.phi) * (np.conj(lam) * lam_bar).imag
    return du, grads


def _nl_backward(layer: LayerParams, kind: str, cache: dict, dz: Array):
    grads = {}
    dz2 = _flat(dz)
    v2 = _flat(cache["v"])
    if kind == "mlp":
        pre, act = cache["pre"], cache["act"]
        grads["nl_w2"] = dz2.T @ act
        grads["nl_b2"] = dz2.sum(axis=0)
        dpre = (dz2 @ layer.nl_w2) * _gelu_grad(pre, cache["cdf"])
        grads["nl_w1"] = dpre.T @ v2
        grads["nl_b1"] = dpre.sum(axis=0)
        dv = _unflat(dpre @ layer.nl_w1, dz)
    else:
        a1, sig = cache["a1"], cache["sig"]
        da1 = dz2 * sig
        da2 = da1 * a1 * (1.0 - sig)
        grads["nl_w1"] = da1.T @ v2
        grads["nl_b1"] = da1.sum(axis=0)
        grads["nl_w2"] = da2.T @ v2
        grads["nl_b2"] = da2.sum(axis=0)
        dv = _unflat(da1 @ layer.nl_w1 + da2 @ layer.nl_w2, dz)
    return dv, grads


def _norm_backward(layer: LayerParams, cache: dict | None, dn: Array):
    if layer.norm_gain is None:
        return dn, {}
    xhat, inv = cache["xhat"], cache["inv"]
    grads = {
        "norm_gain": (dn * xhat).sum(axis=tuple(range(dn.ndim - 1))),
        "norm_bias": dn.sum(axis=tuple(range(dn.ndim - 1))),
    }
    dxhat = dn * layer.norm_gain
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dv = inv * (dxhat - m1 - xhat * m2)
    return dv, grads


def backward_batch(model: DeepSsm, cache: dict, dout: Array) -> dict[str, Array]:
    """Gradients of a scalar loss given d loss / d output; keys are leaf paths."""
    grads: dict[str, Array] = {}
    dout_tm = np.ascontiguousarray(np.moveaxis(np.asarray(dout), 0, 1))
    dout2 = _flat(dout_tm)
    grads["w_out"] = dout2.T @ _flat(cache["h_last"])
    grads["b_out"] = dout2.sum(axis=0)
    ds = _unflat(dout2 @ model.w_out, dout_tm)
    kind = model.config.nonlinearity
    for idx in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[idx]
        lc = cache["layers"][idx]
        dz = ds
        dy, nl_grads = _nl_backward(layer, kind, lc["nl"], dz)
        dn, lru_grads = _lru_backward(layer.lru, lc["lru"], dy)
        da, norm_grads = _norm_backward(layer, lc["norm"], dn)
        prefix = f"layers.{idx}."
        for k, v in nl_grads.items():
            grads[prefix + k] = v
        for k, v in norm_grads.items():
            grads[prefix + k] = v
        for k, v in lru_grads.items():
            grads[prefix + "lru." + k] = v
        ds = ds + da  # skip connection joins the two paths
    ds2 = _flat(ds)
    grads["w_in"] = ds2.T @ _flat(cache["u"])
    grads["b_in"] = ds2.sum(axis=0)
    return grads
