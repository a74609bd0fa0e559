"""Corpus scoring, top-fraction selection, DFN-style baseline, stats, bench.

The production path after training: score every record with the quality
model, keep the top fraction by score, or run the similarity-threshold
baseline that drops images instead of documents.  Everything here is exact
two-pass work at desk scale; a streaming quantile sketch is a documented
extension point, not an implementation.
"""

from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .common import DataError, child_rng
from .encoder import EncoderConfig, patchify_embed
from .packing import tokenize_words
from .records import (
    CaptionSample,
    ImagePayload,
    InterleavedDoc,
    LabeledSample,
    ScoredRecord,
)


@dataclass
class FilterConfig:
    fraction: float = 0.30
    dfn_threshold: float = 0.15
    batch_size: int = 16
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise DataError(f"fraction must be in (0, 1], got {self.fraction}")
        if self.batch_size < 1:
            raise DataError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.workers < 1:
            raise DataError(f"workers must be >= 1, got {self.workers}")


def _unwrap(record):
    return record.record if isinstance(record, LabeledSample) else record


def _modality(record) -> str:
    return "interleaved" if isinstance(record, InterleavedDoc) else "caption"


def score_corpus(records: list, model, cfg: FilterConfig | None = None,
                 ) -> tuple[list[ScoredRecord], list[dict]]:
    """Score records in corpus order.

    Returns (scored, rejects).  Records the model cannot assemble (over
    length, empty text) become reject entries instead of aborting the run.
    Each sample is forwarded on its own inside a batch, so scores are
    bitwise independent of batch size and worker count.
    """
    cfg = cfg or FilterConfig()

    def score_batch(batch: list[tuple[int, object]]):
        out = []
        for pos, rec in batch:
            raw = _unwrap(rec)
            try:
                score = model.score_record(raw)
            except DataError as exc:
                out.append((pos, None, {"id": raw.id, "error": str(exc)}))
            else:
                out.append((pos, ScoredRecord(id=raw.id, score=score,
                                              modality=_modality(raw)), None))
        return out

    batches = [list(enumerate(records))[i:i + cfg.batch_size]
               for i in range(0, len(records), cfg.batch_size)]
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            batch_results = list(pool.map(score_batch, batches))
    else:
        batch_results = [score_batch(b) for b in batches]

    scored: list[ScoredRecord] = []
    rejects: list[dict] = []
    for batch in batch_results:
        for _, rec, rej in batch:
            if rej is not None:
                rejects.append(rej)
            else:
                scored.append(rec)
    return scored, rejects


def _retain_count(n: int, fraction: float) -> int:
    """ceil(fraction * n) with guard against float fuzz on integral products."""
    raw = fraction * n
    nearest = round(raw)
    m = nearest if abs(raw - nearest) < 1e-9 else math.ceil(raw)
    return max(1, min(n, m)) if n > 0 else 0


def _ranked_ids(scores: list[ScoredRecord]) -> list[str]:
    return [s.id for s in sorted(scores, key=lambda s: (-s.score, s.id))]


def select_top_fraction(scores: list[ScoredRecord], records: list,
                        fraction: float) -> list:
    """Keep exactly ceil(fraction * N) records, ties broken by ascending id.

    Output preserves the original corpus order.  Every record must have
    exactly one score and vice versa.
    """
    if not 0.0 < fraction <= 1.0:
        raise DataError(f"fraction must be in (0, 1], got {fraction}")
    by_id: dict[str, float] = {}
    for s in scores:
        if s.id in by_id:
            raise DataError(f"duplicate score for id {s.id!r}")
        by_id[s.id] = s.score
    record_ids = [_unwrap(r).id for r in records]
    missing = [rid for rid in record_ids if rid not in by_id]
    if missing:
        raise DataError(f"no score for record id {missing[0]!r}")
    extra = set(by_id) - set(record_ids)
    if extra:
        raise DataError(f"score for unknown record id {sorted(extra)[0]!r}")

    m = _retain_count(len(records), fraction)
    keep = set(_ranked_ids(scores)[:m])
    return [r for r in records if _unwrap(r).id in keep]


def threshold_for_fraction(scores: list[ScoredRecord], fraction: float) -> float:
    """Score of the ceil(fraction * N)-th largest element.

    Thresholding at this value plus the stable-by-id tie policy reproduces
    select_top_fraction exactly.
    """
    if not scores:
        raise DataError("cannot compute a threshold over zero scores")
    if not 0.0 < fraction <= 1.0:
        raise DataError(f"fraction must be in (0, 1], got {fraction}")
    m = _retain_count(len(scores), fraction)
    ordered = sorted((s.score for s in scores), reverse=True)
    return ordered[m - 1]


# ---------------------------------------------------------------------------
# DFN-style baseline: image-paragraph similarity thresholding


def hashed_text_embedding(text: str, dim: int = 64):
    """L2-normalized signed hashed bag-of-tokens; None if the text has no
    tokens.  A deterministic toy stand-in for a real text encoder."""
    vec = np.zeros(dim)
    for tok in tokenize_words(text.lower()):
        h = hashlib.sha256(tok.encode("utf-8")).digest()
        idx = int.from_bytes(h[:8], "big") % dim
        sign = 1.0 if h[8] % 2 == 0 else -1.0
        vec[idx] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return None
    return vec / norm


_DFN_PROJ_CACHE: dict[tuple[int, int], np.ndarray] = {}


def dfn_image_embedding(payload: ImagePayload, dim: int = 64,
                        enc_cfg: EncoderConfig | None = None):
    """Mean patch vector pushed through a fixed random projection into the
    text embedding space, L2 normalized; None for a degenerate zero vector."""
    enc_cfg = enc_cfg or EncoderConfig()
    grid = patchify_embed(payload, enc_cfg)
    mean_vec = grid.vecs.reshape(-1, grid.vecs.shape[2]).mean(axis=0)
    key = (mean_vec.shape[0], dim)
    if key not in _DFN_PROJ_CACHE:
        rng = child_rng(0, "dfn-image-proj", *key)
        _DFN_PROJ_CACHE[key] = rng.normal(0.0, 1.0, size=key)
    vec = mean_vec @ _DFN_PROJ_CACHE[key]
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return None
    return vec / norm


def dfn_filter_doc(doc: InterleavedDoc, text_embed_fn, image_embed_fn,
                   threshold: float):
    """Keep an image iff its max cosine similarity against the same
    document's paragraphs reaches the threshold; text items are never
    removed.  Returns the filtered doc, or None when no image survives.

    Each contiguous text item counts as one paragraph.  An image (or a doc)
    without a usable embedding scores -1, so only threshold <= -1 keeps it.
    """
    paragraphs = [p for p in (text_embed_fn(item.text) for item in doc.items
                              if item.kind == "text") if p is not None]
    kept_items = []
    for item in doc.items:
        if item.kind == "text":
            kept_items.append(item)
            continue
        emb = image_embed_fn(item.image)
        if emb is None or not paragraphs:
            max_sim = -1.0
        else:
            max_sim = max(float(np.dot(emb, p)) for p in paragraphs)
        if max_sim >= threshold:
            kept_items.append(item)
    if not any(item.kind == "image" for item in kept_items):
        return None
    return InterleavedDoc(id=doc.id, items=kept_items)


def dfn_filter_corpus(docs: list[InterleavedDoc], threshold: float = 0.15,
                      text_embed_fn=None, image_embed_fn=None,
                      ) -> tuple[list[InterleavedDoc], list[dict]]:
    """Apply dfn_filter_doc across a corpus.  Docs that lose every image are
    returned as reject entries (they cannot serve interleaved pretraining)."""
    text_embed_fn = text_embed_fn or hashed_text_embedding
    image_embed_fn = image_embed_fn or dfn_image_embedding
    kept: list[InterleavedDoc] = []
    rejects: list[dict] = []
    for doc in docs:
        filtered = dfn_filter_doc(doc, text_embed_fn, image_embed_fn, threshold)
        if filtered is None:
            rejects.append({"id": doc.id, "error": "no image met the similarity threshold"})
        else:
            kept.append(filtered)
    return kept, rejects


# ---------------------------------------------------------------------------
# Corpus statistics and throughput benchmarking


@dataclass
class CorpusStats:
    n_records: int
    avg_images_per_doc: float
    avg_text_len: float       # words per record
    avg_doc_len: float        # words + image token equivalents per record
    retained_fraction: float

    def __post_init__(self):
        if not 0.0 <= self.retained_fraction <= 1.0:
            raise DataError(f"retained_fraction must be in [0, 1], got {self.retained_fraction}")

    def to_obj(self) -> dict:
        return {
            "n_records": self.n_records,
            "avg_images_per_doc": self.avg_images_per_doc,
            "avg_text_len": self.avg_text_len,
            "avg_doc_len": self.avg_doc_len,
            "retained_fraction": self.retained_fraction,
        }


def _record_counts(record) -> tuple[int, int]:
    """(n_images, n_words) for a caption sample or interleaved doc."""
    raw = _unwrap(record)
    if isinstance(raw, CaptionSample):
        return 1, len(raw.text.split())
    if isinstance(raw, InterleavedDoc):
        return len(raw.images()), sum(len(t.split()) for t in raw.texts())
    raise DataError(f"cannot compute stats for {type(raw).__name__}")


def corpus_stats(records: list, image_token_equiv: int = 144,
                 retained_fraction: float = 1.0) -> CorpusStats:
    """Per-record averages; doc length counts each image as
    image_token_equiv tokens.  retained_fraction is supplied by the caller
    (this function cannot know what the corpus was filtered from)."""
    if not records:
        raise DataError("cannot compute stats over an empty corpus")
    counts = [_record_counts(r) for r in records]
    n = len(counts)
    total_images = sum(c[0] for c in counts)
    total_words = sum(c[1] for c in counts)
    return CorpusStats(
        n_records=n,
        avg_images_per_doc=total_images / n,
        avg_text_len=total_words / n,
        avg_doc_len=(total_words + image_token_equiv * total_images) / n,
        retained_fraction=retained_fraction,
    )


def format_stats(stats: CorpusStats) -> str:
    """One fixed-width row: image count, text length, combined length, fraction."""
    header = f"{'Records':>8}  {'Avg. #Img.':>10}  {'Avg. Text Len.':>14}  {'Avg. Doc Len.':>13}  {'Retained':>8}"
    row = (f"{stats.n_records:>8d}  {stats.avg_images_per_doc:>10.2f}  "
           f"{stats.avg_text_len:>14.1f}  {stats.avg_doc_len:>13.1f}  "
           f"{stats.retained_fraction:>7.1%}")
    return header + "\n" + row


def _bench_corpus(size: int, seed: int) -> list[CaptionSample]:
    rng = child_rng(seed, "bench-corpus", size)
    samples = []
    for i in range(size):
        pixels = rng.uniform(0.0, 1.0, size=(1, 16, 16))
        samples.append(CaptionSample(
            id=f"bench-{i:05d}",
            image=ImagePayload(pixels=pixels),
            text=f"benchmark sample {i} shows a fox resting by the kettle",
        ))
    return samples


def throughput_bench(model, sizes: list[int], batch_sizes: list[int],
                     seed: int = 0, repeats: int = 3) -> dict:
    """Wall-clock samples/s for each (corpus size, batch size) pair.

    Times the scoring path on synthetic caption corpora and reports the
    median over repeats.  Absolute numbers are hardware-specific; the report
    exists for relative comparisons on one machine.
    """
    if repeats < 1:
        raise DataError(f"repeats must be >= 1, got {repeats}")
    rows = []
    for size in sorted(sizes):
        corpus = _bench_corpus(size, seed)
        for batch_size in batch_sizes:
            cfg = FilterConfig(batch_size=batch_size)
            times = []
            for _ in range(repeats):
                start = time.perf_counter()
                scored, rejects = score_corpus(corpus, model, cfg)
                times.append(time.perf_counter() - start)
                if rejects:
                    raise DataError(f"bench corpus produced {len(rejects)} rejects")
                if len(scored) != size:
                    raise DataError(f"bench scored {len(scored)} of {size} records")
            median_t = float(np.median(times))
            rows.append({
                "corpus_size": size,
                "batch_size": batch_size,
                "wall_time_s": median_t,
                "samples_per_s": size / median_t,
                "repeats": repeats,
            })
    return {
        "precision": "float64",
        "model_config": asdict(model.config),
        "rows": rows,
    }
