"""Shared domain types, configuration and manifest handling.

Everything downstream (selection, composition, question generation,
evaluation) works in terms of the types defined here.  All types are
immutable after construction and safe to share between threads.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field, asdict
from enum import Enum
from importlib import resources
from typing import Optional


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

def _load_vocabulary() -> dict:
    with resources.files("scrapbook.data").joinpath("vocabulary.json").open() as f:
        return json.load(f)


VOCAB = _load_vocabulary()

COLORS: tuple[str, ...] = tuple(sorted(VOCAB["colors"]))
SHAPE_CLASSES: tuple[str, ...] = tuple(VOCAB["shapes"])
COCO_CLASSES: tuple[str, ...] = tuple(VOCAB["coco_classes"])
UNK_TOKEN: str = VOCAB["unk_token"]
NOT_APPLICABLE: str = VOCAB["not_applicable"]

COLOR_RGB: dict[str, tuple[int, int, int]] = {
    name: tuple(rgb) for name, rgb in VOCAB["colors"].items()
}


class AbsolutePosition(str, Enum):
    TOP_LEFT = "top-left"
    TOP_CENTER = "top-center"
    TOP_RIGHT = "top-right"
    CENTER_LEFT = "center-left"
    CENTER = "center"
    CENTER_RIGHT = "center-right"
    BOTTOM_LEFT = "bottom-left"
    BOTTOM_CENTER = "bottom-center"
    BOTTOM_RIGHT = "bottom-right"

    @property
    def grid_cell(self) -> tuple[int, int]:
        """(row, col) of this position in the 3x3 grid."""
        i = list(AbsolutePosition).index(self)
        return divmod(i, 3)

    @property
    def phrase(self) -> str:
        return VOCAB["regions"][self.value]


class RelativePosition(str, Enum):
    UPPER_LEFT = "upper-left"
    ABOVE = "above"
    UPPER_RIGHT = "upper-right"
    LEFT = "left"
    RIGHT = "right"
    LOWER_LEFT = "lower-left"
    BELOW = "below"
    LOWER_RIGHT = "lower-right"

    @property
    def phrase(self) -> str:
        return VOCAB["relations"][self.value]


_OPPOSITES = {
    RelativePosition.UPPER_LEFT: RelativePosition.LOWER_RIGHT,
    RelativePosition.ABOVE: RelativePosition.BELOW,
    RelativePosition.UPPER_RIGHT: RelativePosition.LOWER_LEFT,
    RelativePosition.LEFT: RelativePosition.RIGHT,
    RelativePosition.RIGHT: RelativePosition.LEFT,
    RelativePosition.LOWER_LEFT: RelativePosition.UPPER_RIGHT,
    RelativePosition.BELOW: RelativePosition.ABOVE,
    RelativePosition.LOWER_RIGHT: RelativePosition.UPPER_LEFT,
}


def opposite(rel: RelativePosition) -> RelativePosition:
    return _OPPOSITES[rel]


class QType(str, Enum):
    PRESENCE = "presence"
    COUNTING = "counting"
    CONFIRMATION = "confirmation"
    RECOGNITION = "recognition"


class Group(str, Enum):
    NO_POSITION = "no_position"
    ABSOLUTE = "absolute_position"
    RELATIVE = "relative_position"


class Form(str, Enum):
    ORIGINAL = "original"
    CONDITION = "condition"
    DIRECTION = "direction"
    ENUMERATED = "enumerated"


FORMS: tuple[Form, ...] = tuple(Form)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GenerationConfig:
    object_mode: str = "shapes"          # shapes | coco
    selection_mode: str = "deterministic"  # deterministic | random
    class_char_mode: str = "unique"      # same | unique | random
    color_char_mode: str = "unique"
    size_char_mode: str = "unique"
    num_sets: int = 3                    # S
    objects_per_set: int = 5             # N
    backgrounds_per_set: int = 3         # B
    arrangements: int = 2                # A
    objects_per_image: int = 3           # x
    region_pairs: int = 3                # P
    n_questions_per_type: int = 3
    seed: int = 0
    canvas_width: int = 1280
    canvas_height: int = 768
    background_dir: Optional[str] = None  # photo backgrounds (coco mode)
    bank_dir: Optional[str] = None        # object bank cache (coco mode)

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "GenerationConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return asdict(self)


# The largest shape placed is 70 + 40 * (N - 1) pixels per side.
SHAPE_BASE_SIZE = 70
SHAPE_SIZE_STEP = 40

MAX_REGION_PAIRS = 81  # 9 x 9 ordered pairs of grid cells


def validate_config(cfg: GenerationConfig) -> list[str]:
    """Return the list of violated invariants (empty means ok)."""
    errors = []
    if cfg.object_mode not in ("shapes", "coco"):
        errors.append(f"object_mode must be shapes or coco, got {cfg.object_mode!r}")
    if cfg.selection_mode not in ("deterministic", "random"):
        errors.append(f"selection_mode must be deterministic or random, got {cfg.selection_mode!r}")
    for name in ("class_char_mode", "color_char_mode", "size_char_mode"):
        v = getattr(cfg, name)
        if v not in ("same", "unique", "random"):
            errors.append(f"{name} must be same, unique or random, got {v!r}")
    for name in ("num_sets", "objects_per_set", "backgrounds_per_set",
                 "arrangements", "objects_per_image", "region_pairs",
                 "n_questions_per_type"):
        if getattr(cfg, name) < 1:
            errors.append(f"{name} must be >= 1")
    if cfg.objects_per_image > cfg.objects_per_set:
        errors.append(
            f"objects_per_image ({cfg.objects_per_image}) must be <= "
            f"objects_per_set ({cfg.objects_per_set})")
    if cfg.region_pairs > MAX_REGION_PAIRS:
        errors.append(f"region_pairs ({cfg.region_pairs}) must be <= {MAX_REGION_PAIRS}")
    n = cfg.objects_per_set
    pair_bound = n * (n - 1)
    if n > 1 and cfg.arrangements > pair_bound:
        errors.append(
            f"arrangements ({cfg.arrangements}) must be <= N*(N-1) = {pair_bound}")
    if n == 1 and cfg.arrangements > 1:
        errors.append("arrangements must be 1 when objects_per_set is 1")
    if cfg.object_mode == "shapes":
        largest = SHAPE_BASE_SIZE + SHAPE_SIZE_STEP * (n - 1)
        if cfg.canvas_width < largest or cfg.canvas_height < largest:
            errors.append(
                f"canvas ({cfg.canvas_width}x{cfg.canvas_height}) smaller than "
                f"largest object ({largest}px)")
    return errors


# ---------------------------------------------------------------------------
# Scene types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObjectSpec:
    cls: str
    color: Optional[str] = None
    size_index: Optional[int] = None
    bank_id: Optional[str] = None

    def __post_init__(self):
        is_shape = self.cls in SHAPE_CLASSES
        if is_shape:
            if self.color is None or self.size_index is None or self.bank_id is not None:
                raise ValueError(f"shape spec needs color and size_index only: {self}")
        else:
            if self.cls not in COCO_CLASSES:
                raise ValueError(f"unknown object class {self.cls!r}")
            if self.color is not None or self.size_index is not None:
                raise ValueError(f"coco spec carries no color/size: {self}")

    @property
    def is_shape(self) -> bool:
        return self.cls in SHAPE_CLASSES

    def to_dict(self) -> dict:
        d = {"class": self.cls}
        if self.color is not None:
            d["color"] = self.color
        if self.size_index is not None:
            d["size_index"] = self.size_index
        if self.bank_id is not None:
            d["bank_id"] = self.bank_id
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectSpec":
        return cls(cls=d["class"], color=d.get("color"),
                   size_index=d.get("size_index"), bank_id=d.get("bank_id"))


@dataclass(frozen=True)
class Placement:
    """An object placed on the canvas.  bbox is (x, y, w, h) in pixels."""
    object: ObjectSpec
    bbox: tuple[int, int, int, int]
    mask_ref: str = ""

    @property
    def center(self) -> tuple[float, float]:
        x, y, w, h = self.bbox
        return (x + w / 2.0, y + h / 2.0)

    def to_dict(self) -> dict:
        return {"object": self.object.to_dict(),
                "bbox": list(self.bbox),
                "mask": self.mask_ref}

    @classmethod
    def from_dict(cls, d: dict) -> "Placement":
        return cls(object=ObjectSpec.from_dict(d["object"]),
                   bbox=tuple(d["bbox"]), mask_ref=d.get("mask", ""))


@dataclass(frozen=True)
class SceneImage:
    image_id: str
    background_id: str
    placements: tuple[Placement, ...]
    parent_id: Optional[str] = None
    main_index: Optional[int] = None
    reference_index: Optional[int] = None
    abs_pos_pair: Optional[tuple[AbsolutePosition, AbsolutePosition]] = None
    rel_pos: Optional[RelativePosition] = None
    image_path: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.image_id,
            "parent_id": self.parent_id,
            "background_id": self.background_id,
            "main_index": self.main_index,
            "reference_index": self.reference_index,
            "abs_pos_pair": ([p.value for p in self.abs_pos_pair]
                             if self.abs_pos_pair else None),
            "rel_pos": self.rel_pos.value if self.rel_pos else None,
            "image": self.image_path,
            "placements": [p.to_dict() for p in self.placements],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneImage":
        pair = d.get("abs_pos_pair")
        return cls(
            image_id=d["id"],
            parent_id=d.get("parent_id"),
            background_id=d["background_id"],
            main_index=d.get("main_index"),
            reference_index=d.get("reference_index"),
            abs_pos_pair=(tuple(AbsolutePosition(p) for p in pair) if pair else None),
            rel_pos=(RelativePosition(d["rel_pos"]) if d.get("rel_pos") else None),
            image_path=d.get("image", ""),
            placements=tuple(Placement.from_dict(p) for p in d["placements"]),
        )


# ---------------------------------------------------------------------------
# Question / answer types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnswerKey:
    kind: str                      # yes | no | number | text | unk
    number: Optional[int] = None
    text: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("yes", "no", "number", "text", "unk"):
            raise ValueError(f"bad answer kind {self.kind!r}")
        if self.kind == "number" and self.number is None:
            raise ValueError("number key without a number")
        if self.kind == "text" and not self.text:
            raise ValueError("text key without text")

    @property
    def is_unk(self) -> bool:
        return self.kind == "unk"

    def canonical(self) -> str:
        """Canonical surface string of the expected answer."""
        if self.kind == "yes":
            return "yes"
        if self.kind == "no":
            return "no"
        if self.kind == "number":
            return str(self.number)
        if self.kind == "unk":
            return UNK_TOKEN
        return self.text

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.number is not None:
            d["number"] = self.number
        if self.text is not None:
            d["text"] = self.text
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AnswerKey":
        return cls(kind=d["kind"], number=d.get("number"), text=d.get("text"))


@dataclass(frozen=True)
class QuestionRecord:
    question_id: str
    image_id: str
    qtype: QType
    group: Group
    subgroup: int
    form: Form
    text: str
    concepts: tuple[str, ...]
    level: int
    expected: AnswerKey
    template_id: str
    parameter_set_id: str
    answer_domain: str
    target: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "image_id": self.image_id,
            "qtype": self.qtype.value,
            "group": self.group.value,
            "subgroup": self.subgroup,
            "form": self.form.value,
            "text": self.text,
            "concepts": list(self.concepts),
            "level": self.level,
            "expected": self.expected.to_dict(),
            "template_id": self.template_id,
            "parameter_set_id": self.parameter_set_id,
            "answer_domain": self.answer_domain,
            "target": self.target,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuestionRecord":
        return cls(
            question_id=d["question_id"],
            image_id=d["image_id"],
            qtype=QType(d["qtype"]),
            group=Group(d["group"]),
            subgroup=d["subgroup"],
            form=Form(d["form"]),
            text=d["text"],
            concepts=tuple(d["concepts"]),
            level=d["level"],
            expected=AnswerKey.from_dict(d["expected"]),
            template_id=d["template_id"],
            parameter_set_id=d["parameter_set_id"],
            answer_domain=d["answer_domain"],
            target=d.get("target", {}),
        )

    @property
    def subgroup_file(self) -> str:
        return f"{self.qtype.value}_{self.group.value}_{self.subgroup}.jsonl"


@dataclass(frozen=True)
class ResponseRecord:
    question_id: str
    form: Form
    raw_text: str

    def to_dict(self) -> dict:
        return {"question_id": self.question_id, "form": self.form.value,
                "raw_text": self.raw_text}

    @classmethod
    def from_dict(cls, d: dict) -> "ResponseRecord":
        return cls(question_id=d["question_id"], form=Form(d["form"]),
                   raw_text=d["raw_text"])


VERDICT_STATUSES = (
    "correct",
    "wrong_answer",
    "multiple_answers",
    "unexpected_answer",
    "invalidated_by_simpler_image",
    "answer_disagreement",
    "error_disagreement",
)

AGGREGATE_ONLY_STATUSES = ("answer_disagreement", "error_disagreement")


@dataclass(frozen=True)
class Verdict:
    question_id: str
    status: str
    form: Optional[Form] = None    # None marks an aggregate verdict

    def __post_init__(self):
        if self.status not in VERDICT_STATUSES:
            raise ValueError(f"bad verdict status {self.status!r}")
        if self.form is not None and self.status in AGGREGATE_ONLY_STATUSES:
            raise ValueError(f"{self.status} is aggregate-only")


# ---------------------------------------------------------------------------
# Deterministic seeding
# ---------------------------------------------------------------------------

def derive_rng(seed: int, *coords) -> random.Random:
    """Stable per-unit RNG derived from the global seed and unit coordinates."""
    key = "|".join([str(seed)] + [str(c) for c in coords])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

def build_manifest(cfg: GenerationConfig, images: list[SceneImage],
                   question_counts: dict[str, int]) -> dict:
    return {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "images": [img.to_dict() for img in images],
        "question_counts": dict(sorted(question_counts.items())),
    }


def canonical_manifest(manifest: dict) -> bytes:
    """Deterministic byte serialization; equal datasets give identical bytes."""
    return json.dumps(manifest, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=True).encode("utf-8")


def parse_manifest(data: bytes | str) -> dict:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return json.loads(data)


def load_manifest(dataset_dir) -> dict:
    with open(f"{dataset_dir}/manifest.json", "rb") as f:
        return parse_manifest(f.read())


def manifest_images(manifest: dict) -> list[SceneImage]:
    return [SceneImage.from_dict(d) for d in manifest["images"]]


def load_questions(dataset_dir) -> list[QuestionRecord]:
    """Read every questions/*.jsonl file of a dataset, in file order."""
    import os
    qdir = os.path.join(dataset_dir, "questions")
    records = []
    for name in sorted(os.listdir(qdir)):
        if not name.endswith(".jsonl"):
            continue
        with open(os.path.join(qdir, name)) as f:
            for line in f:
                line = line.strip()
                if line:
                    records.append(QuestionRecord.from_dict(json.loads(line)))
    return records
