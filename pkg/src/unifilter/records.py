"""Record types and JSONL serialization for multimodal corpora.

Four record kinds travel through the pipeline:

  caption      {"id", "image": <payload>, "text"}
  interleaved  {"id", "items": [{"kind": "text", "text"} | {"kind": "image", "image": <payload>}]}
  labeled      {"kind", "record", "label", "level_name", "provenance"}
  scored       {"id", "score", "modality"}

An image payload is either raw pixels (channels x height x width, row-major)
or a precomputed patch grid (h x w cells of d_v-dim vectors), exactly one of
the two:

  {"pixels": {"shape": [c,h,w], "data": [...]}}
  {"patch_grid": {"h": H, "w": W, "dim": D, "data": [...]}}

Floats are written with repr precision, so write -> read -> write is byte
stable.  Readers validate each line and either raise (strict=True) or skip the
line while recording (line_no, message).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .common import SchemaError, dump_json_line

LEVEL_NAMES = {0: "easy_negative", 1: "medium_negative", 2: "hard_negative", 3: "positive"}
LEVEL_IDS = {name: lid for lid, name in LEVEL_NAMES.items()}


# --- payloads ----------------------------------------------------------------


class ImagePayload:
    """Raw pixels or a precomputed patch grid; exactly one is set."""

    def __init__(self, pixels: np.ndarray | None = None, patches: np.ndarray | None = None):
        if (pixels is None) == (patches is None):
            raise SchemaError("image payload needs exactly one of pixels / patch_grid")
        if pixels is not None:
            pixels = np.asarray(pixels, dtype=np.float64)
            if pixels.ndim != 3:
                raise SchemaError(f"pixels must be channels x height x width, got shape {pixels.shape}")
            if not np.isfinite(pixels).all():
                raise SchemaError("pixels contain non-finite values")
        if patches is not None:
            patches = np.asarray(patches, dtype=np.float64)
            if patches.ndim != 3:
                raise SchemaError(f"patch_grid must be h x w x dim, got shape {patches.shape}")
            if not np.isfinite(patches).all():
                raise SchemaError("patch_grid contains non-finite values")
        self.pixels = pixels
        self.patches = patches

    @property
    def kind(self) -> str:
        return "pixels" if self.pixels is not None else "patch_grid"

    def __eq__(self, other):
        if not isinstance(other, ImagePayload):
            return NotImplemented
        if self.kind != other.kind:
            return False
        a = self.pixels if self.kind == "pixels" else self.patches
        b = other.pixels if other.kind == "pixels" else other.patches
        return a.shape == b.shape and np.array_equal(a, b)

    def __repr__(self):
        arr = self.pixels if self.pixels is not None else self.patches
        return f"ImagePayload({self.kind}, shape={arr.shape})"

    def to_obj(self) -> dict:
        if self.pixels is not None:
            return {"pixels": {"shape": list(self.pixels.shape), "data": self.pixels.ravel().tolist()}}
        h, w, d = self.patches.shape
        return {"patch_grid": {"h": h, "w": w, "dim": d, "data": self.patches.ravel().tolist()}}

    @staticmethod
    def from_obj(obj, line_no: int | None = None) -> "ImagePayload":
        if not isinstance(obj, dict):
            raise SchemaError("image payload must be an object", line_no)
        has_px = "pixels" in obj
        has_pg = "patch_grid" in obj
        if has_px == has_pg:
            raise SchemaError("image payload needs exactly one of pixels / patch_grid", line_no)
        try:
            if has_px:
                spec = obj["pixels"]
                shape = tuple(spec["shape"])
                data = np.asarray(spec["data"], dtype=np.float64)
                if len(shape) != 3 or data.size != int(np.prod(shape)):
                    raise SchemaError(f"pixels declared shape {shape} does not match {data.size} values", line_no)
                return ImagePayload(pixels=data.reshape(shape))
            spec = obj["patch_grid"]
            h, w, d = int(spec["h"]), int(spec["w"]), int(spec["dim"])
            data = np.asarray(spec["data"], dtype=np.float64)
            if data.size != h * w * d:
                raise SchemaError(f"patch_grid declared {h}x{w}x{d} does not match {data.size} values", line_no)
            return ImagePayload(patches=data.reshape(h, w, d))
        except SchemaError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad image payload: {exc}", line_no) from exc


# --- records -----------------------------------------------------------------


@dataclass
class CaptionSample:
    id: str
    image: ImagePayload
    text: str

    def validate(self, line_no: int | None = None):
        if not self.id:
            raise SchemaError("caption record has empty id", line_no)
        if not self.text.strip():
            raise SchemaError(f"caption {self.id!r} has empty text", line_no)

    def to_obj(self) -> dict:
        return {"id": self.id, "image": self.image.to_obj(), "text": self.text}


@dataclass
class DocItem:
    kind: str  # "text" | "image"
    text: str | None = None
    image: ImagePayload | None = None


@dataclass
class InterleavedDoc:
    id: str
    items: list[DocItem] = field(default_factory=list)

    def validate(self, line_no: int | None = None):
        if not self.id:
            raise SchemaError("interleaved record has empty id", line_no)
        n_img = sum(1 for it in self.items if it.kind == "image")
        n_txt = sum(1 for it in self.items if it.kind == "text")
        if n_img < 1 or n_txt < 1:
            raise SchemaError(
                f"doc {self.id!r} needs at least one image and one text item "
                f"(got {n_img} images, {n_txt} texts)",
                line_no,
            )
        for it in self.items:
            if it.kind == "text" and not (it.text or "").strip():
                raise SchemaError(f"doc {self.id!r} has an empty text item", line_no)

    def images(self) -> list[ImagePayload]:
        return [it.image for it in self.items if it.kind == "image"]

    def texts(self) -> list[str]:
        return [it.text for it in self.items if it.kind == "text"]

    def to_obj(self) -> dict:
        items = []
        for it in self.items:
            if it.kind == "text":
                items.append({"kind": "text", "text": it.text})
            else:
                items.append({"kind": "image", "image": it.image.to_obj()})
        return {"id": self.id, "items": items}


@dataclass
class LabeledSample:
    record: CaptionSample | InterleavedDoc
    label: int
    level_name: str
    provenance: str = "synthetic"

    @property
    def modality(self) -> str:
        return "caption" if isinstance(self.record, CaptionSample) else "interleaved"

    def validate(self, line_no: int | None = None):
        if self.label not in LEVEL_NAMES:
            raise SchemaError(f"label out of range: {self.label}", line_no)
        if LEVEL_NAMES[self.label] != self.level_name:
            raise SchemaError(
                f"label {self.label} does not match level_name {self.level_name!r}", line_no
            )
        self.record.validate(line_no)

    def to_obj(self) -> dict:
        return {
            "kind": self.modality,
            "record": self.record.to_obj(),
            "label": self.label,
            "level_name": self.level_name,
            "provenance": self.provenance,
        }


@dataclass
class ScoredRecord:
    id: str
    score: float
    modality: str

    def validate(self, line_no: int | None = None):
        if not self.id:
            raise SchemaError("scored record has empty id", line_no)
        if self.modality not in ("caption", "interleaved"):
            raise SchemaError(f"bad modality {self.modality!r}", line_no)
        if not np.isfinite(self.score):
            raise SchemaError(f"score for {self.id!r} is not finite", line_no)

    def to_obj(self) -> dict:
        return {"id": self.id, "score": float(self.score), "modality": self.modality}


# --- decoding ----------------------------------------------------------------


def _decode_caption(obj, line_no=None) -> CaptionSample:
    try:
        rec = CaptionSample(
            id=str(obj["id"]),
            image=ImagePayload.from_obj(obj["image"], line_no),
            text=str(obj["text"]),
        )
    except KeyError as exc:
        raise SchemaError(f"caption record missing key {exc}", line_no) from exc
    rec.validate(line_no)
    return rec


def _decode_interleaved(obj, line_no=None) -> InterleavedDoc:
    try:
        items = []
        for it in obj["items"]:
            kind = it.get("kind")
            if kind == "text":
                items.append(DocItem(kind="text", text=str(it["text"])))
            elif kind == "image":
                items.append(DocItem(kind="image", image=ImagePayload.from_obj(it["image"], line_no)))
            else:
                raise SchemaError(f"bad item kind {kind!r}", line_no)
        rec = InterleavedDoc(id=str(obj["id"]), items=items)
    except SchemaError:
        raise
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"interleaved record malformed: {exc}", line_no) from exc
    rec.validate(line_no)
    return rec


def _decode_labeled(obj, line_no=None) -> LabeledSample:
    try:
        kind = obj["kind"]
        label = obj["label"]
        if not isinstance(label, int) or label not in LEVEL_NAMES:
            raise SchemaError(f"label out of range: {label!r}", line_no)
        if kind == "caption":
            inner = _decode_caption(obj["record"], line_no)
        elif kind == "interleaved":
            inner = _decode_interleaved(obj["record"], line_no)
        else:
            raise SchemaError(f"bad record kind {kind!r}", line_no)
        rec = LabeledSample(
            record=inner,
            label=label,
            level_name=str(obj["level_name"]),
            provenance=str(obj.get("provenance", "synthetic")),
        )
    except SchemaError:
        raise
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"labeled record malformed: {exc}", line_no) from exc
    rec.validate(line_no)
    return rec


def _decode_scored(obj, line_no=None) -> ScoredRecord:
    try:
        rec = ScoredRecord(id=str(obj["id"]), score=float(obj["score"]), modality=str(obj["modality"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"scored record malformed: {exc}", line_no) from exc
    rec.validate(line_no)
    return rec


_DECODERS = {
    "caption": _decode_caption,
    "interleaved": _decode_interleaved,
    "labeled": _decode_labeled,
    "scored": _decode_scored,
}


def decode_record(obj, kind: str, line_no: int | None = None):
    if kind not in _DECODERS:
        raise ValueError(f"unknown record kind {kind!r}")
    return _DECODERS[kind](obj, line_no)


def sniff_kind(obj) -> str:
    """Guess the record kind of one decoded JSON object."""
    if "items" in obj:
        return "interleaved"
    if "record" in obj and "label" in obj:
        return "labeled"
    if "score" in obj:
        return "scored"
    return "caption"


# --- streams -----------------------------------------------------------------


def read_records(path, kind: str, strict: bool = False, errors: list | None = None):
    """Yield records from a JSONL file in file order.

    kind is one of caption / interleaved / labeled / scored, or "auto" to
    sniff each line.  Malformed lines raise SchemaError in strict mode;
    otherwise they are skipped and (line_no, message) is appended to errors
    when a list is supplied.
    """
    import json as _json

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = _json.loads(line)
            except _json.JSONDecodeError as exc:
                err = SchemaError(f"invalid JSON: {exc.msg}", line_no)
                if strict:
                    raise err from exc
                if errors is not None:
                    errors.append((line_no, str(err)))
                continue
            try:
                k = sniff_kind(obj) if kind == "auto" else kind
                yield decode_record(obj, k, line_no)
            except SchemaError as err:
                if strict:
                    raise
                if errors is not None:
                    errors.append((line_no, str(err)))


def write_records(path, records) -> int:
    """Write records (anything with .to_obj()) as JSONL; returns the count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dump_json_line(rec.to_obj()))
            fh.write("\n")
            n += 1
    return n
