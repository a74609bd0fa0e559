"""Unified quality regressor over captions and interleaved documents.

One model scores both modalities.  A record is assembled into a single
embedding sequence: image payloads run through the frozen patch encoder,
adaptive pooling and the trainable projector (t*t tokens each); text runs
through the token embedding table.  Captions are image tokens first, then
caption tokens; interleaved documents keep their original item order.  A
causal transformer reads the sequence and a d x 1 head on the last position
emits one raw quality score (no language-model head anywhere).  Training
minimizes MSE against the 0..3 level labels and keeps the epoch checkpoint
with the best validation accuracy.

Over-length policy: image tokens are never dropped.  Text is truncated from
the right until the sequence fits max_seq_len; a record whose image tokens
alone exceed max_seq_len is rejected with a DataError.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .common import DataError, NumericError, child_rng
from .encoder import EncoderConfig, adaptive_avg_pool_2d, patchify_embed, project, project_backward
from .nn import (AdamConfig, Params, adam_init, adam_step, layer_norm, layer_norm_backward,
                 save_tensors, load_tensors, transformer_block, transformer_block_backward)
from .packing import Vocab, build_vocab, tokenize
from .records import CaptionSample, InterleavedDoc, LabeledSample

CHECKPOINT_KIND = "quality-model"


@dataclass
class ModelConfig:
    d: int = 64
    n_layers: int = 2
    n_heads: int = 4
    max_seq_len: int = 4096
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def __post_init__(self):
        if isinstance(self.encoder, dict):
            self.encoder = EncoderConfig(**self.encoder)
        if self.d % self.n_heads:
            raise DataError(f"d={self.d} not divisible by n_heads={self.n_heads}")
        if self.encoder.d != self.d:
            raise DataError(f"projector width {self.encoder.d} != model width {self.d}")


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 16
    peak_lr: float = 3e-5
    warmup_frac: float = 0.03
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    vocab_min_count: int = 1


def init_params(cfg: ModelConfig, vocab_size: int, rng: np.random.Generator) -> Params:
    """Fresh trainable parameters.  The frozen patch embedding is not among them."""
    d = cfg.d
    p: Params = {
        "tok_emb": rng.normal(0.0, 0.02, size=(vocab_size, d)),
        "pos_emb": rng.normal(0.0, 0.02, size=(cfg.max_seq_len, d)),
    }
    for i in range(cfg.n_layers):
        pre = f"blocks.{i}."
        for name in ("wq", "wk", "wv", "wo"):
            p[pre + name] = rng.normal(0.0, 0.02, size=(d, d))
        for name in ("bq", "bk", "bv", "bo"):
            p[pre + name] = np.zeros(d)
        p[pre + "ln1_g"] = np.ones(d)
        p[pre + "ln1_b"] = np.zeros(d)
        p[pre + "ln2_g"] = np.ones(d)
        p[pre + "ln2_b"] = np.zeros(d)
        p[pre + "w1"] = rng.normal(0.0, 0.02, size=(d, 4 * d))
        p[pre + "b1"] = np.zeros(4 * d)
        p[pre + "w2"] = rng.normal(0.0, 0.02, size=(4 * d, d))
        p[pre + "b2"] = np.zeros(d)
    p["ln_f_g"] = np.ones(d)
    p["ln_f_b"] = np.zeros(d)
    p["head_w"] = rng.normal(0.0, 0.02, size=(d, 1))
    p["head_b"] = np.zeros(1)
    # trainable projector on top of the frozen encoder
    p["proj_w1"] = rng.normal(0.0, 0.02, size=(cfg.encoder.d_v, d))
    p["proj_b1"] = np.zeros(d)
    p["proj_w2"] = rng.normal(0.0, 0.02, size=(d, d))
    p["proj_b2"] = np.zeros(d)
    return p


def _subparams(params: Params, prefix: str) -> Params:
    n = len(prefix)
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix)}


# --- assembly -------------------------------------------------------------------


@dataclass
class AssembledSequence:
    """Embedding matrix plus the provenance needed for the backward pass."""
    emb: np.ndarray                    # (n, d)
    segments: list[tuple]              # ("image", ref) / ("text", token_id) per position
    text_positions: list[int]
    text_ids: list[int]
    image_blocks: list[tuple]          # (start position, projector cache)

    def __len__(self):
        return self.emb.shape[0]


def _pooled_vectors(payload, enc_cfg: EncoderConfig, key=None, pooled_cache=None):
    if pooled_cache is not None and key is not None and key in pooled_cache:
        return pooled_cache[key]
    grid = patchify_embed(payload, enc_cfg)
    pooled = adaptive_avg_pool_2d(grid, enc_cfg.t)
    if pooled_cache is not None and key is not None:
        pooled_cache[key] = pooled
    return pooled


def assemble_caption(sample: CaptionSample, cfg: ModelConfig, vocab: Vocab, params: Params,
                     pooled_cache=None) -> AssembledSequence:
    """Image tokens first, caption tokens after, truncated to max_seq_len."""
    if not sample.text.strip():
        raise DataError(f"caption {sample.id!r} has empty text")
    t2 = cfg.encoder.tokens_per_image()
    if t2 > cfg.max_seq_len:
        raise DataError(f"record {sample.id!r}: {t2} image tokens exceed max_seq_len {cfg.max_seq_len}")
    pooled = _pooled_vectors(sample.image, cfg.encoder, f"{sample.id}#0", pooled_cache)
    img_emb, proj_cache = project(pooled, params)
    ids = tokenize(sample.text, vocab)[: cfg.max_seq_len - t2]
    emb = np.concatenate([img_emb, params["tok_emb"][ids]]) if ids else img_emb
    segments = [("image", f"{sample.id}#0")] * t2 + [("text", tid) for tid in ids]
    return AssembledSequence(
        emb=emb,
        segments=segments,
        text_positions=list(range(t2, t2 + len(ids))),
        text_ids=list(ids),
        image_blocks=[(0, proj_cache)],
    )


def assemble_interleaved(doc: InterleavedDoc, cfg: ModelConfig, vocab: Vocab, params: Params,
                         pooled_cache=None) -> AssembledSequence:
    """Original item order, one projector run per image, no separator tokens."""
    t2 = cfg.encoder.tokens_per_image()
    n_images = len(doc.images())
    if n_images * t2 > cfg.max_seq_len:
        raise DataError(
            f"record {doc.id!r}: {n_images * t2} image tokens exceed max_seq_len {cfg.max_seq_len}")

    # per-item token id lists; text gets truncated from the right, doc-wide
    parts: list[tuple] = []
    total_text = 0
    img_idx = 0
    for item in doc.items:
        if item.kind == "text":
            ids = tokenize(item.text, vocab)
            parts.append(("text", ids))
            total_text += len(ids)
        else:
            parts.append(("image", item.image, f"{doc.id}#{img_idx}"))
            img_idx += 1
    budget = cfg.max_seq_len - n_images * t2
    drop = total_text - budget
    if drop > 0:
        for i in range(len(parts) - 1, -1, -1):
            if drop <= 0:
                break
            if parts[i][0] != "text":
                continue
            ids = parts[i][1]
            cut = min(drop, len(ids))
            parts[i] = ("text", ids[: len(ids) - cut])
            drop -= cut

    chunks, segments, text_positions, text_ids, image_blocks = [], [], [], [], []
    pos = 0
    for part in parts:
        if part[0] == "text":
            ids = part[1]
            if not ids:
                continue
            chunks.append(params["tok_emb"][ids])
            segments.extend(("text", tid) for tid in ids)
            text_positions.extend(range(pos, pos + len(ids)))
            text_ids.extend(ids)
            pos += len(ids)
        else:
            _, payload, key = part
            pooled = _pooled_vectors(payload, cfg.encoder, key, pooled_cache)
            img_emb, proj_cache = project(pooled, params)
            chunks.append(img_emb)
            segments.extend([("image", key)] * t2)
            image_blocks.append((pos, proj_cache))
            pos += t2
    emb = np.concatenate(chunks) if chunks else np.zeros((0, cfg.d))
    return AssembledSequence(emb=emb, segments=segments, text_positions=text_positions,
                             text_ids=text_ids, image_blocks=image_blocks)


def assemble(record, cfg: ModelConfig, vocab: Vocab, params: Params, pooled_cache=None):
    if isinstance(record, LabeledSample):
        record = record.record
    if isinstance(record, CaptionSample):
        return assemble_caption(record, cfg, vocab, params, pooled_cache)
    if isinstance(record, InterleavedDoc):
        return assemble_interleaved(record, cfg, vocab, params, pooled_cache)
    raise DataError(f"cannot assemble record of type {type(record).__name__}")


# --- forward / backward ----------------------------------------------------------


def forward_score(asm: AssembledSequence, cfg: ModelConfig, params: Params,
                  keep_cache: bool = False):
    """Raw scalar score from the last position.  Returns (score, cache)."""
    n = len(asm)
    if n == 0:
        raise DataError("cannot score an empty sequence")
    x = asm.emb + params["pos_emb"][:n]
    block_caches = []
    for i in range(cfg.n_layers):
        bp = _subparams(params, f"blocks.{i}.")
        x, cache = transformer_block(x, bp, cfg.n_heads)
        block_caches.append(cache)
    h, ln_cache = layer_norm(x, params["ln_f_g"], params["ln_f_b"])
    score = float(h[-1] @ params["head_w"][:, 0] + params["head_b"][0])
    cache = (asm, h, ln_cache, block_caches) if keep_cache else None
    return score, cache


def backward_score(dscore: float, cfg: ModelConfig, params: Params, cache, grads: Params):
    """Accumulate d(score * dscore)/d(params) into grads, in place."""
    asm, h, ln_cache, block_caches = cache
    n = len(asm)
    dh = np.zeros_like(h)
    dh[-1] = dscore * params["head_w"][:, 0]
    grads["head_w"][:, 0] += dscore * h[-1]
    grads["head_b"][0] += dscore
    dx, dg, db = layer_norm_backward(dh, ln_cache)
    grads["ln_f_g"] += dg
    grads["ln_f_b"] += db
    for i in range(cfg.n_layers - 1, -1, -1):
        dx, bgrads = transformer_block_backward(dx, block_caches[i])
        pre = f"blocks.{i}."
        for name, g in bgrads.items():
            grads[pre + name] += g
    grads["pos_emb"][:n] += dx
    if asm.text_positions:
        np.add.at(grads["tok_emb"], asm.text_ids, dx[asm.text_positions])
    t2 = cfg.encoder.tokens_per_image()
    for start, proj_cache in asm.image_blocks:
        pg = project_backward(dx[start:start + t2], proj_cache)
        for name, g in pg.items():
            grads[name] += g


def mse_loss(pred: float, target: float):
    """Squared error and d/dpred."""
    diff = pred - target
    return diff * diff, 2.0 * diff


def zero_grads(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


# --- model bundle ------------------------------------------------------------------


@dataclass
class QualityModel:
    config: ModelConfig
    vocab: Vocab
    params: Params

    def score_record(self, record, pooled_cache=None) -> float:
        asm = assemble(record, self.config, self.vocab, self.params, pooled_cache)
        score, _ = forward_score(asm, self.config, self.params)
        return score


def save_model(path, model: QualityModel, extra_meta: dict | None = None) -> None:
    meta = {
        "kind": CHECKPOINT_KIND,
        "config": asdict(model.config),
        "vocab_words": model.vocab.words,
    }
    if extra_meta:
        meta.update(extra_meta)
    save_tensors(path, model.params, meta)


def load_model(path) -> QualityModel:
    params, meta = load_tensors(path)
    if meta.get("kind") != CHECKPOINT_KIND:
        raise DataError(f"{path}: not a quality-model checkpoint")
    cfg = ModelConfig(**{k: v for k, v in meta["config"].items()})
    return QualityModel(config=cfg, vocab=Vocab(words=list(meta["vocab_words"])), params=params)


# --- training ----------------------------------------------------------------------


def _record_texts(sample: LabeledSample):
    rec = sample.record
    if isinstance(rec, CaptionSample):
        yield rec.text
    else:
        yield from rec.texts()


def validation_accuracy(model: QualityModel, samples: list[LabeledSample], pooled_cache=None):
    """Quantized accuracy and macro F1 on labeled samples."""
    from .metrics import evaluate, quantize_score

    pairs = []
    for s in samples:
        pred = quantize_score(model.score_record(s, pooled_cache))
        pairs.append((s.label, pred))
    report = evaluate(pairs)
    return report.accuracy, report.macro_f1


def train(train_samples: list[LabeledSample], val_samples: list[LabeledSample],
          cfg: ModelConfig, tcfg: TrainConfig, seed: int):
    """Train the unified regressor; returns (QualityModel, history).

    The returned model holds the parameters of the epoch with the highest
    validation accuracy (earliest epoch wins ties).  history has one entry
    per epoch: train_loss, val_accuracy, val_macro_f1, lr_end.
    """
    if not train_samples or not val_samples:
        raise DataError("need non-empty train and validation splits")

    vocab = build_vocab(
        (t for s in train_samples for t in _record_texts(s)), tcfg.vocab_min_count)
    rng = child_rng(seed, "train-init")
    params = init_params(cfg, len(vocab), rng)

    n = len(train_samples)
    steps_per_epoch = math.ceil(n / tcfg.batch_size)
    acfg = AdamConfig(peak_lr=tcfg.peak_lr, warmup_frac=tcfg.warmup_frac,
                      beta1=tcfg.beta1, beta2=tcfg.beta2, weight_decay=tcfg.weight_decay,
                      total_steps=tcfg.epochs * steps_per_epoch, eps=tcfg.eps)
    state = adam_init(params, acfg)

    pooled_cache: dict = {}
    model = QualityModel(config=cfg, vocab=vocab, params=params)
    best_params = None
    best_acc = -1.0
    history = []

    for epoch in range(tcfg.epochs):
        order = child_rng(seed, "shuffle", epoch).permutation(n)
        epoch_loss = 0.0
        lr = 0.0
        for b0 in range(0, n, tcfg.batch_size):
            batch = [train_samples[i] for i in order[b0:b0 + tcfg.batch_size]]
            grads = zero_grads(params)
            batch_loss = 0.0
            for s in batch:
                asm = assemble(s, cfg, vocab, params, pooled_cache)
                pred, cache = forward_score(asm, cfg, params, keep_cache=True)
                loss, dpred = mse_loss(pred, float(s.label))
                batch_loss += loss
                backward_score(dpred / len(batch), cfg, params, cache, grads)
            batch_loss /= len(batch)
            if not np.isfinite(batch_loss):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch} step {b0 // tcfg.batch_size}")
            lr = adam_step(params, grads, state)
            epoch_loss += batch_loss
        val_acc, val_f1 = validation_accuracy(model, val_samples, pooled_cache)
        history.append({
            "epoch": epoch,
            "train_loss": epoch_loss / steps_per_epoch,
            "val_accuracy": val_acc,
            "val_macro_f1": val_f1,
            "lr_end": lr,
        })
        if val_acc > best_acc:
            best_acc = val_acc
            best_params = {k: v.copy() for k, v in params.items()}

    model.params = best_params
    return model, history
