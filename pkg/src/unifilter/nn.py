"""Minimal transformer building blocks with hand-derived gradients.

There is no autodiff here.  The architecture is fixed (pre-LN blocks, causal
multi-head attention, GELU MLP), so every op ships a forward that returns a
cache and a backward that consumes it.  All math is plain numpy on (seq, dim)
matrices; parameters live in a flat dict of named float arrays, which keeps
the optimizer, the checkpoint format and the finite-difference harness
trivially generic.

Gradient correctness is enforced by grad_check, a central-difference probe
over every parameter entry.  Anything new added here must pass it before use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .common import NumericError

Params = dict[str, np.ndarray]

LN_EPS = 1e-6
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# --- elementwise and linear ----------------------------------------------------


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def linear_backward(dy, x, w):
    """Returns (dx, dw, db) for y = x @ w + b with x of shape (n, d_in)."""
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact erf-based GELU."""
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_backward(dy, x):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return dy * (cdf + x * pdf)


def softmax_rows(s: np.ndarray) -> np.ndarray:
    """Row-wise softmax, numerically stable for large magnitudes."""
    shifted = s - s.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def layer_norm(x, gamma, beta):
    """Normalizes each row to zero mean / unit variance, then applies affine."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * gamma + beta, (xhat, inv, gamma)


def layer_norm_backward(dy, cache):
    xhat, inv, gamma = cache
    d = xhat.shape[-1]
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    # standard LN backward: remove the mean and the xhat-projected component
    dx = inv / d * (d * dxhat - dxhat.sum(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
    return dx, dgamma, dbeta


# --- attention ------------------------------------------------------------------


def causal_self_attention(x: np.ndarray, p: Params, n_heads: int):
    """Multi-head causal self-attention on a single (n, d) sequence.

    p holds wq,bq,wk,bk,wv,bv,wo,bo.  Position i attends to positions <= i.
    Returns (out, cache).
    """
    n, d = x.shape
    dh = d // n_heads
    q = linear(x, p["wq"], p["bq"])
    k = linear(x, p["wk"], p["bk"])
    v = linear(x, p["wv"], p["bv"])
    # (heads, n, dh)
    qh = q.reshape(n, n_heads, dh).transpose(1, 0, 2)
    kh = k.reshape(n, n_heads, dh).transpose(1, 0, 2)
    vh = v.reshape(n, n_heads, dh).transpose(1, 0, 2)
    scale = 1.0 / math.sqrt(dh)
    scores = (qh @ kh.transpose(0, 2, 1)) * scale
    mask = np.triu(np.ones((n, n), dtype=bool), k=1)
    scores[:, mask] = -np.inf
    attn = softmax_rows(scores)
    outh = attn @ vh  # (heads, n, dh)
    concat = outh.transpose(1, 0, 2).reshape(n, d)
    out = linear(concat, p["wo"], p["bo"])
    cache = (x, p, n_heads, qh, kh, vh, attn, concat, scale)
    return out, cache


def causal_self_attention_backward(dy, cache):
    """Returns (dx, grads) matching the parameter names used in the forward."""
    x, p, n_heads, qh, kh, vh, attn, concat, scale = cache
    n, d = x.shape
    dh = d // n_heads

    dconcat, dwo, dbo = linear_backward(dy, concat, p["wo"])
    doh = dconcat.reshape(n, n_heads, dh).transpose(1, 0, 2)

    dattn = doh @ vh.transpose(0, 2, 1)
    dvh = attn.transpose(0, 2, 1) @ doh
    # softmax backward; masked cells have attn == 0 so they contribute nothing
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dqh = (dscores @ kh) * scale
    dkh = (dscores.transpose(0, 2, 1) @ qh) * scale

    dq = dqh.transpose(1, 0, 2).reshape(n, d)
    dk = dkh.transpose(1, 0, 2).reshape(n, d)
    dv = dvh.transpose(1, 0, 2).reshape(n, d)

    dx_q, dwq, dbq = linear_backward(dq, x, p["wq"])
    dx_k, dwk, dbk = linear_backward(dk, x, p["wk"])
    dx_v, dwv, dbv = linear_backward(dv, x, p["wv"])
    dx = dx_q + dx_k + dx_v
    grads = {"wq": dwq, "bq": dbq, "wk": dwk, "bk": dbk,
             "wv": dwv, "bv": dbv, "wo": dwo, "bo": dbo}
    return dx, grads


# --- transformer block ------------------------------------------------------------


def transformer_block(x: np.ndarray, p: Params, n_heads: int):
    """Pre-LN block: x + Attn(LN(x)), then x + MLP(LN(x)) with GELU."""
    h1, ln1_cache = layer_norm(x, p["ln1_g"], p["ln1_b"])
    a, attn_cache = causal_self_attention(h1, p, n_heads)
    x1 = x + a
    h2, ln2_cache = layer_norm(x1, p["ln2_g"], p["ln2_b"])
    m1 = linear(h2, p["w1"], p["b1"])
    g = gelu(m1)
    m2 = linear(g, p["w2"], p["b2"])
    out = x1 + m2
    cache = (ln1_cache, attn_cache, ln2_cache, h2, m1, g, p)
    return out, cache


def transformer_block_backward(dy, cache):
    ln1_cache, attn_cache, ln2_cache, h2, m1, g, p = cache
    grads: Params = {}

    dg, dw2, db2 = linear_backward(dy, g, p["w2"])
    dm1 = gelu_backward(dg, m1)
    dh2, dw1, db1 = linear_backward(dm1, h2, p["w1"])
    dx1, dln2_g, dln2_b = layer_norm_backward(dh2, ln2_cache)
    dx1 = dx1 + dy  # residual

    da = dx1
    dh1, attn_grads = causal_self_attention_backward(da, attn_cache)
    dx, dln1_g, dln1_b = layer_norm_backward(dh1, ln1_cache)
    dx = dx + dx1  # residual

    grads.update(attn_grads)
    grads.update({"w1": dw1, "b1": db1, "w2": dw2, "b2": db2,
                  "ln1_g": dln1_g, "ln1_b": dln1_b, "ln2_g": dln2_g, "ln2_b": dln2_b})
    return dx, grads


# --- optimizer --------------------------------------------------------------------


@dataclass
class AdamConfig:
    peak_lr: float = 3e-5
    warmup_frac: float = 0.03
    beta1: float = 0.9
    beta2: float = 0.98
    weight_decay: float = 0.01
    total_steps: int = 1
    eps: float = 1e-8


@dataclass
class AdamState:
    cfg: AdamConfig
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)
    step: int = 0


def lr_at(step: int, cfg: AdamConfig) -> float:
    """Linear warmup to peak, then cosine decay to exactly 0 at total_steps."""
    warmup = int(round(cfg.warmup_frac * cfg.total_steps))
    if warmup > 0 and step < warmup:
        return cfg.peak_lr * step / warmup
    span = max(1, cfg.total_steps - warmup)
    progress = (step - warmup) / span
    return cfg.peak_lr * 0.5 * (1.0 + math.cos(math.pi * min(1.0, progress)))


def adam_init(params: Params, cfg: AdamConfig) -> AdamState:
    state = AdamState(cfg=cfg)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p)
        state.v[name] = np.zeros_like(p)
    return state


def adam_step(params: Params, grads: Params, state: AdamState) -> float:
    """One decoupled-weight-decay Adam update, in place.  Returns the lr used."""
    cfg = state.cfg
    if state.step >= cfg.total_steps:
        raise NumericError(f"optimizer stepped past total_steps={cfg.total_steps}")
    lr = lr_at(state.step, cfg)
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r} at step {t}")
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        if cfg.weight_decay:
            update = update + cfg.weight_decay * p
        p -= lr * update
    return lr


# --- gradient checking ---------------------------------------------------------------


def grad_check(f, params: Params, eps: float = 1e-5, param_names=None):
    """Central-difference check of analytic gradients.

    f(params) must return (loss, grads) with grads keyed like params.  Every
    entry of every checked parameter is perturbed by +/- eps.  Returns the
    worst relative error, |analytic - numeric| / max(|analytic|, |numeric|,
    1e-6).  Use float64 parameters; float32 cannot pass a 1e-4 gate.
    """
    loss0, grads = f(params)
    if not np.isfinite(loss0):
        raise NumericError("loss is not finite at the probe point")
    names = list(params) if param_names is None else list(param_names)
    worst = 0.0
    for name in names:
        p = params[name]
        g = np.asarray(grads[name], dtype=np.float64)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp, _ = f(params)
            flat[i] = orig - eps
            lm, _ = f(params)
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * eps)
            analytic = gflat[i]
            denom = max(abs(analytic), abs(numeric), 1e-6)
            err = abs(analytic - numeric) / denom
            if err > worst:
                worst = err
    return worst


# --- named-tensor checkpoints ----------------------------------------------------------

TENSOR_FORMAT = "unifilter-tensors-v1"


def save_tensors(path, tensors: Params, meta: dict | None = None) -> None:
    """JSON checkpoint of named arrays; floats keep full repr precision."""
    from .common import write_json_file

    obj = {
        "format": TENSOR_FORMAT,
        "meta": meta or {},
        "tensors": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in tensors.items()
        },
    }
    write_json_file(path, obj)


def load_tensors(path):
    """Returns (tensors, meta).  Refuses files with an unknown format header."""
    from .common import DataError, read_json_file

    obj = read_json_file(path)
    if obj.get("format") != TENSOR_FORMAT:
        raise DataError(f"{path}: unknown checkpoint format {obj.get('format')!r}")
    tensors = {
        name: np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
        for name, spec in obj["tensors"].items()
    }
    return tensors, obj.get("meta", {})
