"""Record schema round-trips and malformed-line policy."""

import numpy as np
import pytest

from unifilter.common import SchemaError
from unifilter.records import (
    CaptionSample,
    DocItem,
    ImagePayload,
    InterleavedDoc,
    LabeledSample,
    ScoredRecord,
    decode_record,
    read_records,
    sniff_kind,
    write_records,
)


def _pixels(seed=0, shape=(1, 8, 8)):
    return ImagePayload(pixels=np.random.default_rng(seed).uniform(size=shape))


def _doc(doc_id="doc-0"):
    return InterleavedDoc(id=doc_id, items=[
        DocItem(kind="text", text="first paragraph"),
        DocItem(kind="image", image=_pixels(1)),
        DocItem(kind="text", text="second paragraph"),
    ])


def test_image_payload_requires_exactly_one_form():
    with pytest.raises(SchemaError):
        ImagePayload()
    with pytest.raises(SchemaError):
        ImagePayload(pixels=np.zeros((1, 4, 4)), patches=np.zeros((2, 2, 3)))


def test_image_payload_rejects_bad_shapes_and_nonfinite():
    with pytest.raises(SchemaError):
        ImagePayload(pixels=np.zeros((4, 4)))  # needs channel axis
    bad = np.zeros((1, 4, 4))
    bad[0, 0, 0] = np.nan
    with pytest.raises(SchemaError):
        ImagePayload(pixels=bad)


def test_caption_roundtrip(tmp_path):
    sample = CaptionSample(id="cap-1", image=_pixels(), text="a fox by the kettle")
    path = tmp_path / "caps.jsonl"
    assert write_records(path, [sample]) == 1
    back = list(read_records(path, "caption"))
    assert len(back) == 1
    assert back[0].id == sample.id
    assert back[0].text == sample.text
    assert back[0].image == sample.image


def test_interleaved_roundtrip_preserves_item_order(tmp_path):
    doc = _doc()
    path = tmp_path / "docs.jsonl"
    write_records(path, [doc])
    back = next(read_records(path, "interleaved"))
    assert [it.kind for it in back.items] == ["text", "image", "text"]
    assert back.texts() == ["first paragraph", "second paragraph"]
    assert back.images()[0] == doc.items[1].image


def test_interleaved_requires_both_modalities():
    with pytest.raises(SchemaError):
        InterleavedDoc(id="d", items=[DocItem(kind="text", text="only text")]).validate()
    with pytest.raises(SchemaError):
        InterleavedDoc(id="d", items=[DocItem(kind="image", image=_pixels())]).validate()


def test_labeled_and_scored_roundtrip(tmp_path):
    labeled = LabeledSample(record=_doc("doc-5"), label=2, level_name="hard_negative")
    scored = ScoredRecord(id="doc-5", score=1.75, modality="interleaved")
    path_l, path_s = tmp_path / "l.jsonl", tmp_path / "s.jsonl"
    write_records(path_l, [labeled])
    write_records(path_s, [scored])
    back_l = next(read_records(path_l, "labeled"))
    back_s = next(read_records(path_s, "scored"))
    assert back_l.label == 2 and back_l.modality == "interleaved"
    assert back_s.score == 1.75


def test_label_level_name_consistency():
    with pytest.raises(SchemaError):
        LabeledSample(record=_doc(), label=3, level_name="easy_negative").validate()


def test_sniff_kind():
    assert sniff_kind({"id": "x", "items": []}) == "interleaved"
    assert sniff_kind({"record": {}, "label": 1}) == "labeled"
    assert sniff_kind({"id": "x", "score": 0.5}) == "scored"
    assert sniff_kind({"id": "x", "text": "t", "image": {}}) == "caption"


def test_auto_kind_reads_mixed_file(tmp_path):
    path = tmp_path / "mixed.jsonl"
    write_records(path, [
        CaptionSample(id="c", image=_pixels(), text="words"),
        _doc(),
        ScoredRecord(id="c", score=0.1, modality="caption"),
    ])
    kinds = [type(r).__name__ for r in read_records(path, "auto")]
    assert kinds == ["CaptionSample", "InterleavedDoc", "ScoredRecord"]


def test_malformed_lines_skipped_with_line_numbers(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = CaptionSample(id="ok", image=_pixels(), text="fine")
    with open(path, "w") as fh:
        fh.write("{not json\n")
        import json

        fh.write(json.dumps(good.to_obj()) + "\n")
        fh.write('{"id": "no-text", "image": {"pixels": {"shape": [1,1,1], "data": [0.0]}}}\n')
    errors = []
    records = list(read_records(path, "caption", errors=errors))
    assert [r.id for r in records] == ["ok"]
    assert [ln for ln, _ in errors] == [1, 3]
    assert all(msg.startswith(f"line {ln}:") for ln, msg in errors)


def test_strict_mode_raises_on_first_bad_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": 42}\n')
    with pytest.raises(SchemaError):
        list(read_records(path, "caption", strict=True))


def test_pixels_shape_must_match_data_length():
    obj = {"id": "x", "text": "t",
           "image": {"pixels": {"shape": [1, 2, 2], "data": [0.0, 0.0, 0.0]}}}
    with pytest.raises(SchemaError):
        decode_record(obj, "caption")


def test_patch_grid_roundtrip(tmp_path):
    patches = np.arange(24, dtype=float).reshape(2, 3, 4)
    sample = CaptionSample(id="p", image=ImagePayload(patches=patches), text="t")
    path = tmp_path / "p.jsonl"
    write_records(path, [sample])
    back = next(read_records(path, "caption"))
    assert back.image.kind == "patch_grid"
    assert np.array_equal(back.image.patches, patches)
