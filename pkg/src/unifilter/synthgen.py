"""Semi-synthetic labeled data: real images, generated text at four quality levels.

Levels are 0 easy_negative, 1 medium_negative, 2 hard_negative, 3 positive.
build_prompt renders the full generation prompt for either modality with the
level's quality-requirement text substituted; responses are JSON objects
({topic, positive_caption, negative_caption} for captions, {image_tags,
document} for interleaved, images referenced as <img>description</img> tags).

Generators are pluggable.  The mock generator needs no network: it derives K
pseudo-keywords per image from patch statistics (quadrant mean intensities
hashed into per-slot word banks) and writes template text whose keyword
overlap with the image encodes the level exactly:

  positive        all K keywords present
  hard_negative   exactly one keyword swapped for a near neighbor
  medium_negative all but one keyword swapped
  easy_negative   keywords from a different image, none shared

Writing quality also degrades with the level, as the generation requirements
demand (easy text is disfluent, medium readable with slips, positive clean
and detail-enriched), so a trained model has both surface-fluency and
image-text-overlap signal to work with.  keyword_overlap_label inverts the
overlap construction and is the independent check that generated labels are
recoverable from the text alone.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .common import DataError, child_rng, child_seed
from .packing import tokenize_words
from .records import (CaptionSample, DocItem, ImagePayload, InterleavedDoc, LabeledSample,
                      LEVEL_NAMES, LEVEL_IDS)

EASY, MEDIUM, HARD, POSITIVE = 0, 1, 2, 3

# --- prompt templates --------------------------------------------------------------

CAPTION_LEVEL_REQUIREMENTS = {
    EASY: "a negative image caption which is completely unrelated to this image.",
    MEDIUM: "a negative image caption which has remarkable errors in describing the image.",
    HARD: ("a hard negative image caption which has subtle difference with the positive "
           "caption. The negative caption contains only one property error in describing "
           "the image."),
    POSITIVE: "a high-quality, comprehensive, detail-enriched caption for this image.",
}

INTERLEAVED_LEVEL_REQUIREMENTS = {
    EASY: ("This document should involve many errors in writing and the document itself "
           "is not fluent in reading. The images and the text in the document should be "
           "completely not related. The images are inserted in inappropriate and "
           "arbitrary places in the document. This document should be knowledge limited "
           "and has no educational value to be used as textbooks in primary school or "
           "grade school teaching."),
    MEDIUM: ("This document is readable but still contains several writing errors. The "
             "images and document text are under the same topic and the text contents "
             "are still not aligned well to the images. The document is knowledge sparse "
             "and has very limited educational value to be used as textbooks in primary "
             "school or grade school teaching."),
    HARD: ("This document should involve several errors in writing. The images and the "
           "text in the document are partially related. However, the images cannot help "
           "the understanding of the text and cannot provide any additional information. "
           "The images are inserted in reasonable places in the document. This document "
           "should contain several factual or commonsense knowledge errors which makes "
           "it inappropriate for educational purposes."),
    POSITIVE: ("This document is a high-quality, comprehensive, detail-enriched document. "
               "The images are inserted in the appropriate places in the document to "
               "provide additional information to the statement or provide the "
               "background information."),
}

CAPTION_PROMPT_TEMPLATE = """You are a helpful assistant to help users write two opposite image captions for the given image in JSON format. The JSON object must contain the following keys:
- "topic": a string, a topic word of this image
- "positive_caption": a string, a high-quality, comprehensive, detail-enriched caption for this image.
- "negative_caption": a string, {requirement}

Please adhere to the following guidelines:
- Both captions should be at least {num_words} words long.
- Both captions should be in English.
- Please avoid using complex or advanced words in the captions. Ensure that the language is suitable for a high school level audience or lower.

Your output must always be a JSON object only, do not explain yourself or output anything else. Be creative!"""

INTERLEAVED_PROMPT_TEMPLATE = """You are an assistant to help users to write a document given several images. These images are extracted from a paper, report, or article in which these images are inserted.

<guideline>
Please firstly generate a xml tag for each image in order for future generation. For each image, please generate a xml tag like "<img>image description</img>". You need to replace the image description with your generated short description of this image which is less than 5 words.

For the second task, {requirement}

Please adhere to the following guidelines when writing this document:
- The paragraphs in the document should be in varied length.
- The document should contain at least 500 words.
- You NEED to use xml tag as the placeholder to indicate the place where an image is inserted into.
- You NEED to ensure that all given images are used and considered.
- You MUST NOT use the image xml tag within your sentences. You should add them between sentences and paragraphs.
- You MUST use each image for ONLY ONCE in the document.

Your output must always be a JSON object only. The JSON object must contain the keys of "image_tags" and "document".

</guideline>

Now, it is your turn. Please strictly follow the above guidelines in <guideline> xml tags when writing the document."""


def build_prompt(modality: str, level: int, num_words: int = 50) -> str:
    """Byte-stable generation prompt for (modality, level)."""
    if level not in LEVEL_NAMES:
        raise DataError(f"unknown quality level {level}")
    if modality == "caption":
        return CAPTION_PROMPT_TEMPLATE.format(
            requirement=CAPTION_LEVEL_REQUIREMENTS[level], num_words=num_words)
    if modality == "interleaved":
        return INTERLEAVED_PROMPT_TEMPLATE.format(
            requirement=INTERLEAVED_LEVEL_REQUIREMENTS[level])
    raise DataError(f"unknown modality {modality!r}")


# --- keyword machinery ---------------------------------------------------------------
#
# Slot q of an image is the mean intensity of quadrant q (TL, TR, BL, BR),
# bucketed into B bins; bucket b of slot q names word SLOT_BANKS[q][b].  Banks
# are disjoint from each other and from all template filler text, so a word's
# presence in generated text is unambiguous.

SLOT_BANKS = [
    ["fox", "heron", "otter", "lynx", "ibis", "toad", "crane", "mole"],
    ["lantern", "kettle", "anvil", "basket", "ladder", "mirror", "barrel", "spool"],
    ["copper", "ivory", "crimson", "olive", "amber", "slate", "indigo", "pearl"],
    ["harbor", "meadow", "attic", "canyon", "plaza", "orchard", "tundra", "cellar"],
]
N_BUCKETS = 8


@dataclass
class MockConfig:
    keywords_per_image: int = 4   # 3 or 4 slots
    buckets: int = N_BUCKETS
    image_hw: int = 16
    channels: int = 1
    jitter: float = 0.004
    texture_amp: float = 1.0
    texture_tile: int = 4  # patch-aligned tile size
    filler_contamination: float = 0.08  # chance a filler borrows a neighbor level's style

    def __post_init__(self):
        if not 3 <= self.keywords_per_image <= len(SLOT_BANKS):
            raise DataError("keywords_per_image must be 3 or 4")
        if not 2 <= self.buckets <= N_BUCKETS:
            raise DataError(f"buckets must be in 2..{N_BUCKETS}")


_texture_cache: dict[tuple, np.ndarray] = {}


def bucket_textures(buckets: int, quad_hw: int, tile: int) -> np.ndarray:
    """Fixed zero-mean +/-1 texture per bucket, shape (buckets, quad_hw, quad_hw).

    Rendered quadrants carry base intensity plus texture_amp times this
    pattern.  Each texture is a tile x tile sign pattern repeated across the
    quadrant, so with a matching patch size every patch of a quadrant embeds
    to the same bucket-specific vector.  The pattern averages to exactly
    zero, which keeps quadrant means (the statistic keywords are derived
    from) at their bucket centers while making buckets linearly separable
    instead of collinear.
    """
    if quad_hw % tile:
        tile = quad_hw
    key = (buckets, quad_hw, tile)
    if key not in _texture_cache:
        rng = child_rng(0, "bucket-texture", buckets, tile)
        n = tile * tile
        reps = quad_hw // tile
        pats = np.empty((buckets, quad_hw, quad_hw))
        for b in range(buckets):
            flat = np.concatenate([np.ones(n // 2), -np.ones(n - n // 2)])
            rng.shuffle(flat)
            pats[b] = np.tile(flat.reshape(tile, tile), (reps, reps))
        _texture_cache[key] = pats
    return _texture_cache[key]


def quadrant_means(pixels: np.ndarray) -> list[float]:
    """Mean intensity of each quadrant (TL, TR, BL, BR) over all channels."""
    _, h, w = pixels.shape
    hh, hw = h // 2, w // 2
    return [
        float(pixels[:, :hh, :hw].mean()), float(pixels[:, :hh, hw:].mean()),
        float(pixels[:, hh:, :hw].mean()), float(pixels[:, hh:, hw:].mean()),
    ]


def derive_buckets(payload: ImagePayload, cfg: MockConfig) -> list[int]:
    """Per-slot buckets from patch statistics; byte-hash fallback for grids."""
    b = cfg.buckets
    if payload.pixels is not None:
        means = quadrant_means(payload.pixels)
        return [min(b - 1, max(0, int(m * b))) for m in means[: cfg.keywords_per_image]]
    digest = hashlib.sha256(payload.patches.tobytes()).digest()
    return [digest[q] % b for q in range(cfg.keywords_per_image)]


def derive_keywords(payload: ImagePayload, cfg: MockConfig | None = None) -> list[str]:
    """K pseudo-keywords for an image, one per slot, fully deterministic."""
    cfg = cfg or MockConfig()
    return [SLOT_BANKS[q][bk] for q, bk in enumerate(derive_buckets(payload, cfg))]


def label_from_overlap(overlap: int, k: int) -> int:
    """Invert the generation profile: k -> 3, k-1 -> 2, 1..k-2 -> 1, 0 -> 0."""
    if overlap >= k:
        return POSITIVE
    if overlap == k - 1:
        return HARD
    if overlap >= 1:
        return MEDIUM
    return EASY


def keyword_overlap_label(record, cfg: MockConfig | None = None) -> int:
    """Recover the quality label of a mock record from keyword overlap alone."""
    cfg = cfg or MockConfig()
    k = cfg.keywords_per_image
    if isinstance(record, LabeledSample):
        record = record.record
    if isinstance(record, CaptionSample):
        tokens = set(tokenize_words(record.text))
        overlap = sum(1 for w in derive_keywords(record.image, cfg) if w in tokens)
        return label_from_overlap(overlap, k)
    if isinstance(record, InterleavedDoc):
        tokens = set(tokenize_words(" ".join(record.texts())))
        per_image = [
            sum(1 for w in derive_keywords(img, cfg) if w in tokens)
            for img in record.images()
        ]
        mean = sum(per_image) / len(per_image)
        return label_from_overlap(int(round(mean)), k)
    raise DataError(f"cannot label record of type {type(record).__name__}")


# --- mock text rendering ---------------------------------------------------------------

# one frame, keywords in fixed slot order; variety comes from the filler tail
_CAPTION_TEMPLATES = [
    "A {a} rests by the {o} in {m} tones near the {p}.",
]

# level-graded filler: the lower the quality level, the rougher the writing,
# mirroring the generation requirements (easy text is disfluent, medium is
# readable with slips, hard is clean, positive is clean and detail-enriched)
_EASY_FILLERS = [
    "the the notes notes is wrten very bad and and it make no sense sense.",
    "this part part is wrting gone wrong wrong and the the words drift off.",
    "bad wrting here here and and the line line does not not read well.",
    "is is broken all over over and the the page page reads like noise.",
]

_MEDIUM_FILLERS = [
    "this sectionn reads mostly fine but but a few parts feel rough.",
    "the writting here is passable though though some lines wobble.",
    "most of it it reads fine aside from a few rough spotts.",
    "the notes are usable but but the wording slips in placess.",
]

_CLEAN_FILLERS = [
    "The colors stay soft and the edges read clearly.",
    "Fine texture is visible across the whole surface.",
    "The background stays plain so the subject stands out.",
    "Nothing else crowds the frame and the light is even.",
]

_DETAIL_TAILS = [
    "Every marking stays sharp and the full scene is caught in rich detail.",
    "Each surface keeps its grain and the depth of the scene reads clearly.",
    "Small touches remain visible, from stray fibers to faint shadows.",
]


def _level_filler(level: int, rng, contamination: float = 0.0) -> str:
    """Filler sentence in the level's writing style.

    With probability `contamination` the style of an adjacent level is used
    instead, so surface fluency alone does not fully determine the label and
    the keyword-overlap signal keeps marginal value.
    """
    style = level
    if contamination > 0 and rng.uniform() < contamination:
        style = min(POSITIVE, max(EASY, level + (1 if rng.integers(2) else -1)))
    if style == EASY:
        pool = _EASY_FILLERS
    elif style == MEDIUM:
        pool = _MEDIUM_FILLERS
    else:
        pool = _CLEAN_FILLERS
    out = pool[int(rng.integers(len(pool)))]
    if style == POSITIVE:
        out = f"{out} {_DETAIL_TAILS[int(rng.integers(len(_DETAIL_TAILS)))]}"
    return out

_DOC_SENTENCE_TEMPLATES = [
    "Here a {a} waits by the {o} in {m} tones near the {p}.",
]

_DOC_INTRO = "The following notes walk through each picture in turn."
_DOC_OUTRO = "That closes out this set of pictures and remarks."


def _fill(template: str, kws: list[str]) -> str:
    names = {"a": kws[0], "o": kws[1], "m": kws[2]}
    if len(kws) > 3:
        names["p"] = kws[3]
    else:
        names["p"] = "room"  # neutral, outside every bank
    return template.format(**names)


def _swap_slot(buckets, slot, cfg, rng, banned_buckets, near=False):
    """Pick a wrong bucket for one slot, avoiding banned ones for that slot."""
    b = cfg.buckets
    cur = buckets[slot]
    banned = set(banned_buckets.get(slot, ())) | {cur}
    if near:
        for cand in rng.permutation([(cur - 1) % b, (cur + 1) % b]):
            if cand not in banned:
                return int(cand)
    choices = [x for x in range(b) if x not in banned]
    if not choices:
        raise DataError("no free bucket left for keyword swap; lower images per doc")
    return int(rng.choice(choices))


def _level_keywords(buckets, level: int, cfg: MockConfig, rng, banned_buckets) -> list[str]:
    """Keyword list actually written into the text for one image at one level."""
    k = cfg.keywords_per_image
    out = list(buckets)
    if level == POSITIVE:
        pass
    elif level == HARD:
        slot = int(rng.integers(k))
        out[slot] = _swap_slot(buckets, slot, cfg, rng, banned_buckets, near=True)
    elif level == MEDIUM:
        keep = int(rng.integers(k))
        for slot in range(k):
            if slot != keep:
                out[slot] = _swap_slot(buckets, slot, cfg, rng, banned_buckets)
    elif level == EASY:
        for slot in range(k):
            out[slot] = _swap_slot(buckets, slot, cfg, rng, banned_buckets)
    else:
        raise DataError(f"unknown quality level {level}")
    return [SLOT_BANKS[q][bk] for q, bk in enumerate(out)]


def mock_generate_caption(payload: ImagePayload, level: int, seed: int,
                          cfg: MockConfig | None = None,
                          donor: ImagePayload | None = None) -> dict:
    """Caption-modality mock response: {topic, positive_caption, negative_caption}.

    The negative caption follows the requested level's overlap profile.  For
    easy negatives the replacement keywords come from the donor image when one
    is supplied, with collisions against this image's keywords bumped away.
    """
    cfg = cfg or MockConfig()
    rng = child_rng(seed, "mock-caption", level)
    buckets = derive_buckets(payload, cfg)
    true_kws = [SLOT_BANKS[q][bk] for q, bk in enumerate(buckets)]

    if level == EASY and donor is not None:
        donor_buckets = derive_buckets(donor, cfg)
        neg_buckets = [
            db if db != tb else (db + 1) % cfg.buckets
            for db, tb in zip(donor_buckets, buckets)
        ]
        neg_kws = [SLOT_BANKS[q][bk] for q, bk in enumerate(neg_buckets)]
    else:
        neg_kws = _level_keywords(buckets, level if level != POSITIVE else EASY,
                                  cfg, rng, banned_buckets={})

    def render(kws, lvl):
        template = _CAPTION_TEMPLATES[int(rng.integers(len(_CAPTION_TEMPLATES)))]
        return f"{_fill(template, kws)} {_level_filler(lvl, rng, cfg.filler_contamination)}"

    return {
        "topic": f"{true_kws[0]} by the {true_kws[-1]}",
        "positive_caption": render(true_kws, POSITIVE),
        "negative_caption": render(neg_kws, level if level != POSITIVE else EASY),
    }


def mock_generate_document(images: list[ImagePayload], level: int, seed: int,
                           cfg: MockConfig | None = None) -> dict:
    """Interleaved-modality mock response: {image_tags, document}.

    Every image appears exactly once as an <img>tag</img> placeholder between
    sentences; each image's paragraph carries its level-profile keywords, and
    swapped-in words never collide with any image's true keywords in the doc.
    """
    cfg = cfg or MockConfig()
    if not images:
        raise DataError("interleaved generation needs at least one image")
    rng = child_rng(seed, "mock-doc", level)
    k = cfg.keywords_per_image

    all_buckets = [derive_buckets(img, cfg) for img in images]
    banned = {slot: {b[slot] for b in all_buckets} for slot in range(k)}

    tags = []
    for i, buckets in enumerate(all_buckets):
        kws = [SLOT_BANKS[q][bk] for q, bk in enumerate(buckets)]
        tags.append(f"{kws[2]} {kws[0]} near {kws[1]}")
    if len(set(tags)) != len(tags):  # same-keyword images in one doc
        raise DataError("mock doc images must have distinct keyword sets")

    parts = [_DOC_INTRO]
    for i, buckets in enumerate(all_buckets):
        kws = _level_keywords(buckets, level, cfg, rng, banned)
        sentence = _fill(
            _DOC_SENTENCE_TEMPLATES[int(rng.integers(len(_DOC_SENTENCE_TEMPLATES)))], kws)
        parts.append(f"<img>{tags[i]}</img>")
        parts.append(f"{sentence} {_level_filler(level, rng, cfg.filler_contamination)}")
    parts.append(_DOC_OUTRO)
    return {"image_tags": tags, "document": "\n\n".join(parts)}


# --- generator interface ----------------------------------------------------------------


@dataclass
class GeneratorRequest:
    modality: str                      # "caption" | "interleaved"
    level: int
    images: list[ImagePayload]
    prompt: str
    num_words: int = 50
    seed: int = 0
    donor: ImagePayload | None = None  # easy-negative keyword source, captions only


class MockGenerator:
    """Offline generator; responses mirror the remote JSON schema exactly."""

    def __init__(self, cfg: MockConfig | None = None):
        self.cfg = cfg or MockConfig()

    def generate(self, request: GeneratorRequest) -> dict:
        if request.modality == "caption":
            if len(request.images) != 1:
                raise DataError("caption generation takes exactly one image")
            return mock_generate_caption(request.images[0], request.level, request.seed,
                                         self.cfg, donor=request.donor)
        if request.modality == "interleaved":
            return mock_generate_document(request.images, request.level, request.seed, self.cfg)
        raise DataError(f"unknown modality {request.modality!r}")


@dataclass
class RemoteGeneratorConfig:
    """Wire schema for a hosted text generator; transport is not included."""
    endpoint: str
    model: str
    api_key_env: str = "GENERATOR_API_KEY"
    timeout_s: float = 60.0
    max_attempts: int = 3


class RemoteGenerator:
    """Interface stub: request/response contract only, no network code."""

    def __init__(self, cfg: RemoteGeneratorConfig):
        self.cfg = cfg

    def generate(self, request: GeneratorRequest) -> dict:
        raise DataError(
            "remote generator transport is not included in this build; "
            "plug in a client that POSTs the prompt to "
            f"{self.cfg.endpoint} and returns the parsed JSON object")


# --- response parsing --------------------------------------------------------------------

_IMG_TAG_RE = re.compile(r"<img>(.*?)</img>", re.DOTALL)


def parse_caption_response(resp: dict, level: int) -> str:
    """Extract the caption matching the requested level from a response object."""
    for key in ("positive_caption", "negative_caption"):
        if key not in resp or not isinstance(resp[key], str):
            raise DataError(f"caption response missing key {key!r}")
    text = resp["positive_caption"] if level == POSITIVE else resp["negative_caption"]
    text = text.strip()
    if not text:
        raise DataError("caption response has empty text")
    return text


def parse_interleaved_response(resp: dict, images: list[ImagePayload]) -> list[DocItem]:
    """Rebuild interleaved items from {image_tags, document}.

    Tags map 1:1 onto the supplied images by list position; the document must
    use each tag exactly once, between sentences.  Returns items in document
    order.
    """
    try:
        tags = list(resp["image_tags"])
        document = str(resp["document"])
    except (KeyError, TypeError) as exc:
        raise DataError(f"interleaved response missing key: {exc}") from exc
    if len(tags) != len(images):
        raise DataError(f"{len(tags)} image tags for {len(images)} images")
    if len(set(tags)) != len(tags):
        raise DataError("image tags are not unique")

    tag_to_idx = {tag: i for i, tag in enumerate(tags)}
    items: list[DocItem] = []
    used: set[int] = set()
    pos = 0
    for m in _IMG_TAG_RE.finditer(document):
        chunk = document[pos:m.start()].strip()
        if chunk:
            items.append(DocItem(kind="text", text=chunk))
        tag = m.group(1)
        if tag not in tag_to_idx:
            raise DataError(f"document uses unknown image tag {tag!r}")
        idx = tag_to_idx[tag]
        if idx in used:
            raise DataError(f"document uses image tag {tag!r} more than once")
        used.add(idx)
        items.append(DocItem(kind="image", image=images[idx]))
        pos = m.end()
    tail = document[pos:].strip()
    if tail:
        items.append(DocItem(kind="text", text=tail))
    if len(used) != len(images):
        missing = [tags[i] for i in range(len(tags)) if i not in used]
        raise DataError(f"document never used image tags: {missing}")
    return items


# --- safety scan -------------------------------------------------------------------------


def scan_safety(text: str, predicate=None) -> bool:
    """True when the text passes the safety hook (default: everything passes)."""
    if predicate is None:
        return True
    return bool(predicate(text))


# --- mock sources ------------------------------------------------------------------------


def render_mock_image(buckets, cfg: MockConfig, rng: np.random.Generator) -> ImagePayload:
    """One quadrant per slot: bucket-center intensity, bucket texture, tiny jitter."""
    hw = cfg.image_hw
    hh = hw // 2
    img = np.empty((cfg.channels, hw, hw))
    spans = [(slice(None, hh), slice(None, hh)), (slice(None, hh), slice(hh, None)),
             (slice(hh, None), slice(None, hh)), (slice(hh, None), slice(hh, None))]
    textures = bucket_textures(cfg.buckets, hh, cfg.texture_tile)
    padded = list(buckets) + [cfg.buckets // 2] * (4 - len(buckets))
    for span, b in zip(spans, padded):
        img[:, span[0], span[1]] = (b + 0.5) / cfg.buckets + cfg.texture_amp * textures[b]
    img += cfg.jitter * rng.uniform(-1.0, 1.0, size=img.shape)
    return ImagePayload(pixels=img)


def make_mock_sources(n_caption_images: int, n_docs: int, seed: int,
                      cfg: MockConfig | None = None, max_images_per_doc: int = 3):
    """Seeded source corpus: caption images plus image groups for documents.

    Images inside one document get distinct buckets in every slot so their
    keyword sets never collide (a collision would make overlap labels
    ambiguous).
    """
    cfg = cfg or MockConfig()
    k = cfg.keywords_per_image
    rng = child_rng(seed, "mock-sources")
    images = [
        render_mock_image(rng.integers(cfg.buckets, size=k), cfg, rng)
        for _ in range(n_caption_images)
    ]
    docs = []
    for _ in range(n_docs):
        m = int(rng.integers(1, max_images_per_doc + 1))
        per_slot = [rng.choice(cfg.buckets, size=m, replace=False) for _ in range(k)]
        docs.append([
            render_mock_image([int(per_slot[q][i]) for q in range(k)], cfg, rng)
            for i in range(m)
        ])
    return images, docs


# --- dataset assembly ---------------------------------------------------------------------


@dataclass
class GenReport:
    requested: dict
    generated: dict
    safety_excluded: int
    nonsynthetic_positives: int
    n_train: int
    n_val: int
    val_fraction: float
    seed: int

    def to_obj(self) -> dict:
        return dict(self.__dict__)


def build_dataset(images_caption: list[ImagePayload],
                  docs_interleaved: list[list[ImagePayload]],
                  counts_per_level: dict[int, int],
                  nonsyn_positives: list[CaptionSample] | None = None,
                  val_fraction: float = 0.05,
                  seed: int = 0,
                  generator=None,
                  safety_predicate=None,
                  num_words: int = 50,
                  mock_cfg: MockConfig | None = None):
    """Generate, label, scan and split a semi-synthetic quality dataset.

    counts_per_level applies to each modality separately: level L consumes
    counts_per_level[L] caption images and as many document image groups.
    Non-synthetic positives are appended with label 3 and skip the safety
    scan (they are curated, the scan targets generated text).  Returns
    (train, val, GenReport); the split is a seeded shuffle with
    floor(val_fraction * n) validation samples, no stratification.
    """
    mock_cfg = mock_cfg or MockConfig()
    generator = generator or MockGenerator(mock_cfg)
    for level in counts_per_level:
        if level not in LEVEL_NAMES:
            raise DataError(f"unknown quality level {level}")
    need_caps = sum(counts_per_level.values())
    need_docs = need_caps
    if need_caps > len(images_caption):
        raise DataError(f"need {need_caps} caption images, have {len(images_caption)}")
    if need_docs > len(docs_interleaved):
        raise DataError(f"need {need_docs} doc image groups, have {len(docs_interleaved)}")

    samples: list[LabeledSample] = []
    excluded = 0
    generated = {"caption": dict.fromkeys(counts_per_level, 0),
                 "interleaved": dict.fromkeys(counts_per_level, 0)}

    cap_idx = 0
    for level in sorted(counts_per_level):
        for _ in range(counts_per_level[level]):
            payload = images_caption[cap_idx]
            donor = images_caption[(cap_idx + 1) % len(images_caption)]
            req = GeneratorRequest(
                modality="caption", level=level, images=[payload],
                prompt=build_prompt("caption", level, num_words),
                num_words=num_words,
                seed=int(child_seed(seed, "gen-cap", level, cap_idx).generate_state(1)[0]),
                donor=donor,
            )
            text = parse_caption_response(generator.generate(req), level)
            cap_idx += 1
            if not scan_safety(text, safety_predicate):
                excluded += 1
                continue
            rec = CaptionSample(id=f"cap-{len(samples):06d}", image=payload, text=text)
            samples.append(LabeledSample(record=rec, label=level,
                                         level_name=LEVEL_NAMES[level]))
            generated["caption"][level] += 1

    doc_idx = 0
    for level in sorted(counts_per_level):
        for _ in range(counts_per_level[level]):
            group = docs_interleaved[doc_idx]
            req = GeneratorRequest(
                modality="interleaved", level=level, images=list(group),
                prompt=build_prompt("interleaved", level, num_words),
                num_words=num_words,
                seed=int(child_seed(seed, "gen-doc", level, doc_idx).generate_state(1)[0]),
            )
            items = parse_interleaved_response(generator.generate(req), list(group))
            doc_idx += 1
            doc_text = " ".join(it.text for it in items if it.kind == "text")
            if not scan_safety(doc_text, safety_predicate):
                excluded += 1
                continue
            rec = InterleavedDoc(id=f"doc-{len(samples):06d}", items=items)
            samples.append(LabeledSample(record=rec, label=level,
                                         level_name=LEVEL_NAMES[level]))
            generated["interleaved"][level] += 1

    n_nonsyn = 0
    for cap in nonsyn_positives or []:
        samples.append(LabeledSample(record=cap, label=POSITIVE,
                                     level_name=LEVEL_NAMES[POSITIVE],
                                     provenance="nonsynthetic_positive"))
        n_nonsyn += 1

    order = child_rng(seed, "split").permutation(len(samples))
    n_val = int(math.floor(val_fraction * len(samples)))
    val = [samples[i] for i in order[:n_val]]
    train = [samples[i] for i in order[n_val:]]
    report = GenReport(
        requested={LEVEL_NAMES[k]: v for k, v in sorted(counts_per_level.items())},
        generated={m: {LEVEL_NAMES[k]: v for k, v in sorted(d.items())}
                   for m, d in generated.items()},
        safety_excluded=excluded,
        nonsynthetic_positives=n_nonsyn,
        n_train=len(train),
        n_val=len(val),
        val_fraction=val_fraction,
        seed=seed,
    )
    return train, val, report


def make_mock_benchmark(train_per_cell: int, val_per_cell: int, seed: int,
                        mock_cfg: MockConfig | None = None):
    """Balanced mock dataset: (level x modality) cells of equal size.

    Returns (train, val) with train_per_cell and val_per_cell samples in each
    of the 8 cells, shuffled within each split.  Sources are generated
    internally from the seed.
    """
    mock_cfg = mock_cfg or MockConfig()
    per_cell = train_per_cell + val_per_cell
    images, docs = make_mock_sources(per_cell * 4, per_cell * 4, seed, mock_cfg)
    generator = MockGenerator(mock_cfg)

    train: list[LabeledSample] = []
    val: list[LabeledSample] = []
    counter = 0
    for level in sorted(LEVEL_NAMES):
        for i in range(per_cell):
            payload = images[level * per_cell + i]
            donor = images[(level * per_cell + i + 1) % len(images)]
            req = GeneratorRequest(
                modality="caption", level=level, images=[payload],
                prompt=build_prompt("caption", level), seed=seed * 1000003 + counter,
                donor=donor)
            text = parse_caption_response(generator.generate(req), level)
            rec = CaptionSample(id=f"cap-{counter:06d}", image=payload, text=text)
            sample = LabeledSample(record=rec, label=level, level_name=LEVEL_NAMES[level])
            (val if i < val_per_cell else train).append(sample)
            counter += 1
        for i in range(per_cell):
            group = docs[level * per_cell + i]
            req = GeneratorRequest(
                modality="interleaved", level=level, images=list(group),
                prompt=build_prompt("interleaved", level), seed=seed * 1000003 + counter)
            items = parse_interleaved_response(generator.generate(req), list(group))
            rec = InterleavedDoc(id=f"doc-{counter:06d}", items=items)
            sample = LabeledSample(record=rec, label=level, level_name=LEVEL_NAMES[level])
            (val if i < val_per_cell else train).append(sample)
            counter += 1
    child_rng(seed, "bench-shuffle-train").shuffle(train)
    child_rng(seed, "bench-shuffle-val").shuffle(val)
    return train, val
