"""Gradient checks per operation, optimizer recurrence, checkpoint format."""

import numpy as np
import pytest
from scipy.special import erf

from unifilter.common import NumericError
from unifilter.nn import (
    LN_EPS,
    AdamConfig,
    adam_init,
    adam_step,
    causal_self_attention,
    causal_self_attention_backward,
    gelu,
    gelu_backward,
    grad_check,
    layer_norm,
    layer_norm_backward,
    linear,
    linear_backward,
    load_tensors,
    lr_at,
    save_tensors,
    softmax_rows,
    transformer_block,
    transformer_block_backward,
)

GRAD_TOL = 1e-4


def _rng(seed):
    return np.random.default_rng(seed)


def test_gelu_matches_erf_formula():
    x = np.linspace(-4, 4, 41)
    expected = 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))
    assert np.allclose(gelu(x), expected, atol=1e-12)


def test_gelu_gradient():
    rng = _rng(0)
    x0 = rng.normal(size=(3, 5))

    def f(params):
        y = gelu(params["x"])
        loss = float((y ** 2).sum())
        dx = gelu_backward(2.0 * y, params["x"])
        return loss, {"x": dx}

    assert grad_check(f, {"x": x0}) < GRAD_TOL


def test_linear_gradients():
    rng = _rng(1)
    x0 = rng.normal(size=(4, 3))
    params = {"w": rng.normal(size=(3, 2)), "b": rng.normal(size=(2,)), "x": x0}

    def f(p):
        y = linear(p["x"], p["w"], p["b"])
        loss = float((y ** 2).sum())
        dx, dw, db = linear_backward(2.0 * y, p["x"], p["w"])
        return loss, {"w": dw, "b": db, "x": dx}

    assert grad_check(f, params) < GRAD_TOL


def test_layer_norm_output_is_standardized():
    rng = _rng(2)
    x = rng.normal(3.0, 10.0, size=(6, 16))
    y, _ = layer_norm(x, np.ones(16), np.zeros(16))
    assert np.abs(y.mean(axis=1)).max() < 1e-9
    # biased variance; eps keeps it just under 1
    assert np.abs(y.var(axis=1) - 1.0).max() < 1e-5


def test_layer_norm_gradients():
    rng = _rng(3)
    params = {"x": rng.normal(size=(4, 8)), "g": rng.normal(size=(8,)),
              "b": rng.normal(size=(8,))}

    def f(p):
        y, cache = layer_norm(p["x"], p["g"], p["b"])
        loss = float((y ** 3).sum())
        dx, dg, db = layer_norm_backward(3.0 * y ** 2, cache)
        return loss, {"x": dx, "g": dg, "b": db}

    assert grad_check(f, params) < GRAD_TOL


def test_softmax_rows_sum_to_one_and_handle_large_logits():
    rng = _rng(4)
    x = rng.normal(size=(5, 7)) * 500.0
    p = softmax_rows(x)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert np.isfinite(p).all()


def _attn_params(rng, d):
    p = {}
    for name in ("wq", "wk", "wv", "wo"):
        p[name] = rng.normal(0.0, 0.2, size=(d, d))
    for name in ("bq", "bk", "bv", "bo"):
        p[name] = rng.normal(0.0, 0.2, size=(d,))
    return p


def test_attention_is_causal():
    rng = _rng(5)
    d, n = 8, 6
    p = _attn_params(rng, d)
    x = rng.normal(size=(n, d))
    y1, _ = causal_self_attention(x, p, n_heads=2)
    x2 = x.copy()
    x2[4:] += 100.0  # only future positions move
    y2, _ = causal_self_attention(x2, p, n_heads=2)
    assert np.array_equal(y1[:4], y2[:4])


def test_attention_gradients():
    rng = _rng(6)
    d, n = 8, 5
    params = _attn_params(rng, d)
    params["x"] = rng.normal(size=(n, d))

    def f(p):
        attn_p = {k: v for k, v in p.items() if k != "x"}
        y, cache = causal_self_attention(p["x"], attn_p, n_heads=2)
        loss = float((y ** 2).sum())
        dx, grads = causal_self_attention_backward(2.0 * y, cache)
        grads["x"] = dx
        return loss, grads

    assert grad_check(f, params) < GRAD_TOL


def _block_params(rng, d):
    p = _attn_params(rng, d)
    p.update({
        "ln1_g": np.ones(d) + 0.1 * rng.normal(size=d), "ln1_b": rng.normal(size=d) * 0.1,
        "ln2_g": np.ones(d) + 0.1 * rng.normal(size=d), "ln2_b": rng.normal(size=d) * 0.1,
        "w1": rng.normal(0.0, 0.2, size=(d, 4 * d)), "b1": rng.normal(size=(4 * d,)) * 0.1,
        "w2": rng.normal(0.0, 0.2, size=(4 * d, d)), "b2": rng.normal(size=(d,)) * 0.1,
    })
    return p


def test_transformer_block_gradients():
    rng = _rng(7)
    d, n = 8, 4
    params = _block_params(rng, d)
    params["x"] = rng.normal(size=(n, d))

    def f(p):
        block_p = {k: v for k, v in p.items() if k != "x"}
        y, cache = transformer_block(p["x"], block_p, n_heads=2)
        loss = float((y ** 2).sum())
        dx, grads = transformer_block_backward(2.0 * y, cache)
        grads["x"] = dx
        return loss, grads

    assert grad_check(f, params) < GRAD_TOL


def test_grad_check_detects_a_corrupted_gradient():
    rng = _rng(8)
    params = {"w": rng.normal(size=(3, 3))}

    def f(p):
        loss = float((p["w"] ** 2).sum())
        dw = 2.0 * p["w"]
        dw[1, 1] += 0.05  # deliberate analytic error
        return loss, {"w": dw}

    assert grad_check(f, params) > GRAD_TOL


def test_lr_schedule_endpoints():
    cfg = AdamConfig(peak_lr=1e-3, warmup_frac=0.1, total_steps=200)
    warmup = int(round(0.1 * 200))
    assert lr_at(warmup, cfg) == pytest.approx(1e-3)
    assert lr_at(200, cfg) == 0.0
    assert lr_at(0, cfg) < lr_at(warmup // 2, cfg) < lr_at(warmup, cfg)
    # cosine section decreases monotonically
    lrs = [lr_at(s, cfg) for s in range(warmup, 201)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))


def test_adam_matches_hand_stepped_recurrence():
    rng = _rng(9)
    p0 = rng.normal(size=(4,))
    cfg = AdamConfig(peak_lr=0.01, warmup_frac=0.0, beta1=0.9, beta2=0.98,
                     weight_decay=0.01, total_steps=5)
    params = {"p": p0.copy()}
    state = adam_init(params, cfg)
    grads_per_step = [rng.normal(size=(4,)) for _ in range(5)]
    for g in grads_per_step:
        adam_step(params, {"p": g.copy()}, state)

    # independent reimplementation of the update rule
    p, m, v = p0.copy(), np.zeros(4), np.zeros(4)
    for step, g in enumerate(grads_per_step, start=1):
        lr = lr_at(step - 1, cfg)
        m = 0.9 * m + 0.1 * g
        v = 0.98 * v + 0.02 * g * g
        mhat = m / (1.0 - 0.9 ** step)
        vhat = v / (1.0 - 0.98 ** step)
        p -= lr * (mhat / (np.sqrt(vhat) + cfg.eps) + cfg.weight_decay * p)
    assert np.allclose(params["p"], p, atol=1e-12)


def test_adam_weight_decay_is_decoupled():
    # zero gradient still shrinks the weight, and by exactly lr*wd*p
    cfg = AdamConfig(peak_lr=0.1, warmup_frac=0.0, weight_decay=0.5, total_steps=1)
    params = {"p": np.array([2.0])}
    state = adam_init(params, cfg)
    adam_step(params, {"p": np.zeros(1)}, state)
    assert params["p"][0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)


def test_adam_rejects_nonfinite_gradient_by_name():
    cfg = AdamConfig(total_steps=2)
    params = {"fine": np.ones(2), "broken": np.ones(2)}
    state = adam_init(params, cfg)
    bad = {"fine": np.zeros(2), "broken": np.array([1.0, np.inf])}
    with pytest.raises(NumericError, match="broken"):
        adam_step(params, bad, state)


def test_adam_refuses_steps_past_schedule_end():
    cfg = AdamConfig(total_steps=1)
    params = {"p": np.ones(1)}
    state = adam_init(params, cfg)
    adam_step(params, {"p": np.zeros(1)}, state)
    with pytest.raises(NumericError):
        adam_step(params, {"p": np.zeros(1)}, state)


def test_tensor_roundtrip_is_exact(tmp_path):
    rng = _rng(10)
    tensors = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(7,))}
    path = tmp_path / "ckpt.json"
    save_tensors(path, tensors, meta={"note": "test"})
    back, meta = load_tensors(path)
    assert meta["note"] == "test"
    for name in tensors:
        assert np.array_equal(back[name], tensors[name])  # bitwise via repr


def test_tensor_loader_refuses_unknown_format(tmp_path):
    path = tmp_path / "other.json"
    path.write_text('{"format": "something-else", "tensors": {}}')
    with pytest.raises(Exception):
        load_tensors(path)
