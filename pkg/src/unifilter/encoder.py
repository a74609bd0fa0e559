"""Image side of the model: frozen patch embedding, pooling, projection.

Pixels are cut into non-overlapping P x P patches and mapped to d_v-dim
vectors by a linear layer whose weights are derived from the encoder seed and
never trained (the stand-in for a frozen pretrained vision tower).  The patch
grid is then reduced to t x t cells by 2-D adaptive average pooling and each
pooled vector runs through a trainable 2-layer GELU MLP into the model width.
Every image therefore contributes exactly t*t tokens regardless of its size.

Pooling cell (i, j) averages grid rows [floor(i*H/t), ceil((i+1)*H/t)) and the
analogous column span, so cells tile the grid, overlap at fractional
boundaries, and reduce to plain block averaging whenever t divides H and W.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .common import DataError, child_rng
from .nn import gelu, gelu_backward, linear, linear_backward
from .records import ImagePayload


@dataclass
class EncoderConfig:
    patch_size: int = 4
    d_v: int = 8       # patch vector width
    t: int = 4         # pooled grid side; t*t tokens per image
    d: int = 64        # projector output width, must match the model width
    seed: int = 0

    def tokens_per_image(self) -> int:
        return self.t * self.t


@dataclass
class PatchGrid:
    h: int
    w: int
    vecs: np.ndarray  # (h, w, d_v)


# frozen patch-embedding weights are pure functions of (seed, patch, d_v, channels)
_embed_cache: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


def patch_embed_weights(cfg: EncoderConfig, channels: int):
    key = (cfg.seed, cfg.patch_size, cfg.d_v, channels)
    if key not in _embed_cache:
        rng = child_rng(cfg.seed, "patch_embed", channels)
        d_in = channels * cfg.patch_size * cfg.patch_size
        w = rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_in, cfg.d_v))
        b = rng.normal(0.0, 0.5, size=(cfg.d_v,))
        _embed_cache[key] = (w, b)
    return _embed_cache[key]


def patchify_embed(payload: ImagePayload, cfg: EncoderConfig) -> PatchGrid:
    """Pixels -> frozen patch vectors; precomputed grids pass through.

    Raises DataError when image dims are not divisible by the patch size, or
    when a precomputed grid's vector width disagrees with cfg.d_v.
    """
    if payload.patches is not None:
        h, w, dv = payload.patches.shape
        if dv != cfg.d_v:
            raise DataError(f"precomputed patch grid has dim {dv}, encoder expects {cfg.d_v}")
        return PatchGrid(h=h, w=w, vecs=payload.patches)

    pix = payload.pixels
    c, hh, ww = pix.shape
    p = cfg.patch_size
    if hh % p or ww % p:
        raise DataError(f"image {hh}x{ww} not divisible by patch size {p}")
    gh, gw = hh // p, ww // p
    w_emb, b_emb = patch_embed_weights(cfg, c)
    # (gh, gw, c*p*p) with channel-major patch flattening
    blocks = pix.reshape(c, gh, p, gw, p).transpose(1, 3, 0, 2, 4).reshape(gh, gw, c * p * p)
    vecs = blocks @ w_emb + b_emb
    return PatchGrid(h=gh, w=gw, vecs=vecs)


def adaptive_avg_pool_2d(grid: PatchGrid, t: int) -> np.ndarray:
    """Pool an (h, w, d_v) grid down to (t, t, d_v) with adaptive cells."""
    h, w = grid.h, grid.w
    if h < t or w < t:
        raise DataError(f"grid {h}x{w} smaller than pooled side {t}")
    out = np.empty((t, t, grid.vecs.shape[2]), dtype=grid.vecs.dtype)
    for i in range(t):
        r0 = (i * h) // t
        r1 = -((-(i + 1) * h) // t)  # ceil((i+1)*h / t)
        for j in range(t):
            c0 = (j * w) // t
            c1 = -((-(j + 1) * w) // t)
            out[i, j] = grid.vecs[r0:r1, c0:c1].mean(axis=(0, 1))
    return out


def init_projector(cfg: EncoderConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Trainable d_v -> d -> d MLP parameters (prefix-free names)."""
    return {
        "proj_w1": rng.normal(0.0, 0.02, size=(cfg.d_v, cfg.d)),
        "proj_b1": np.zeros(cfg.d),
        "proj_w2": rng.normal(0.0, 0.02, size=(cfg.d, cfg.d)),
        "proj_b2": np.zeros(cfg.d),
    }


def project(pooled: np.ndarray, params) -> tuple[np.ndarray, tuple]:
    """Pooled (t, t, d_v) -> (t*t, d) image tokens in row-major cell order."""
    t2 = pooled.shape[0] * pooled.shape[1]
    x = pooled.reshape(t2, -1)
    h1 = linear(x, params["proj_w1"], params["proj_b1"])
    g = gelu(h1)
    out = linear(g, params["proj_w2"], params["proj_b2"])
    return out, (x, h1, g, params)


def project_backward(dy, cache):
    """Gradients for the projector MLP; the pooled input is a frozen constant."""
    x, h1, g, params = cache
    dg, dw2, db2 = linear_backward(dy, g, params["proj_w2"])
    dh1 = gelu_backward(dg, h1)
    _, dw1, db1 = linear_backward(dh1, x, params["proj_w1"])
    return {"proj_w1": dw1, "proj_b1": db1, "proj_w2": dw2, "proj_b2": db2}


def image_tokens(payload: ImagePayload, cfg: EncoderConfig, proj_params):
    """Full image pipeline: patchify -> pool -> project.  Returns (tokens, cache)."""
    grid = patchify_embed(payload, cfg)
    pooled = adaptive_avg_pool_2d(grid, cfg.t)
    return project(pooled, proj_params)
