"""Question generation: intents, answer keys, template expansion, forms.

For every image a pool of question intents is built (what to ask about
which objects, where, and with which expected polarity), each intent's
answer key is computed from the scene geometry, and the surviving intents
are expanded through the template/expression files into paraphrase sets.
Every paraphrase is emitted in the four forms (original, condition,
direction, enumerated).
"""

from __future__ import annotations

import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from .composer import bboxes_overlap, classify_relative, region_of_bbox
from .core import (COLORS, NOT_APPLICABLE, SHAPE_CLASSES, VOCAB,
                   AbsolutePosition, AnswerKey, Form, FORMS, GenerationConfig,
                   Group, ObjectSpec, QType, QuestionRecord, RelativePosition,
                   SceneImage)
from .levels import LevelClassificationError, classify_level

# how many distinct intents to keep per (qtype, group, subgroup, kind) cell
# of one image; bounds dataset size while keeping all subgroups populated
INTENTS_PER_CELL = 1

_SLOT_RE = re.compile(r"\{([a-z_]+)\}")


def _load_data(name: str) -> dict:
    with resources.files("scrapbook.data").joinpath(name).open() as f:
        return json.load(f)


TEMPLATES: list[dict] = _load_data("templates.json")["templates"]
ADDENDA: dict = _load_data("templates.json")["addenda"]
EXPRESSIONS: dict[str, list[str]] = _load_data("expressions.json")["slots"]

_ATTR_NAMES = {"color": "color", "shape": "shape", "class": "object"}

# bare direction words used as canonical answers to "where ... relative to"
REL_ANSWER = {r: r.value.replace("-", " ") for r in RelativePosition}


class UnboundSlotError(KeyError):
    pass


def pluralize(noun: str) -> str:
    """Plural of an object-class noun (last word for multi-word classes)."""
    words = noun.split()
    last = words[-1]
    exceptions = VOCAB["plural_exceptions"]
    if last in exceptions:
        plural = exceptions[last]
    elif last.endswith(("s", "x", "z", "ch", "sh")):
        plural = last + "es"
    elif last.endswith("y") and last[-2:-1] not in "aeiou":
        plural = last[:-1] + "ies"
    else:
        plural = last + "s"
    return " ".join(words[:-1] + [plural])


def _article(phrase: str) -> str:
    return "an" if phrase[0] in "aeiou" else "a"


# ---------------------------------------------------------------------------
# Template expansion
# ---------------------------------------------------------------------------

def _slot_combos(pattern: str, bindings: dict) -> tuple[list[str], list[list[str]]]:
    """Dictionary slots of a pattern and their realization lists."""
    names, choices = [], []
    for slot in dict.fromkeys(_SLOT_RE.findall(pattern)):
        if slot in bindings:
            continue
        if slot not in EXPRESSIONS:
            raise UnboundSlotError(slot)
        names.append(slot)
        choices.append(EXPRESSIONS[slot])
    return names, choices


def _fill(pattern: str, values: dict) -> str:
    return _SLOT_RE.sub(lambda m: values[m.group(1)], pattern)


def expand_template(template: dict, bindings: dict, rng, cap: int) -> list[str]:
    """Up to cap distinct surface strings for one template.

    Samples without replacement from the cross product of the expression
    dictionary realizations of the pattern's free slots.
    """
    names, choices = _slot_combos(template["pattern"], bindings)
    combos = [[]]
    for options in choices:
        combos = [c + [o] for c in combos for o in options]
    picked = rng.sample(combos, min(cap, len(combos)))
    out = []
    for combo in picked:
        values = dict(bindings)
        values.update(zip(names, combo))
        out.append(_fill(template["pattern"], values))
    return out


def expand_variants(templates: list[dict], bindings: dict, rng, cap: int
                    ) -> list[tuple[str, str]]:
    """Sample cap distinct (template_id, text) variants across templates."""
    pool = []
    for t in templates:
        for text in expand_template(t, bindings, rng, 10):
            pool.append((t["template_id"], text))
    seen, unique = set(), []
    for tid, text in pool:
        if text not in seen:
            seen.add(text)
            unique.append((tid, text))
    return rng.sample(unique, min(cap, len(unique)))


# ---------------------------------------------------------------------------
# Intents and answer keys
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Intent:
    qtype: QType
    group: Group
    subgroup: int
    kind: str  # exist | attr | where | reldir
    subject: tuple[tuple[str, str], ...]  # (("color","red"), ("object","circle"))
    abs_pos: Optional[AbsolutePosition] = None
    rel_pos: Optional[RelativePosition] = None
    reference: Optional[str] = None       # reference object class
    query: Optional[str] = None           # color | shape | class | region | relation

    def concepts(self) -> tuple[str, ...]:
        tags = [f"{ns}:{v}" for ns, v in self.subject]
        if self.abs_pos is not None and self.kind != "where":
            tags.append(f"abs:{self.abs_pos.value}")
        if self.rel_pos is not None and self.kind != "reldir":
            tags.append(f"rel:{self.rel_pos.value}")
        if self.reference is not None:
            tags.append(f"object:{self.reference}")
        if self.query is not None:
            tags.append(f"query:{self.query}")
        return tuple(sorted(set(tags)))

    def answer_domain(self) -> str:
        if self.qtype in (QType.PRESENCE, QType.CONFIRMATION):
            return "yesno"
        if self.qtype == QType.COUNTING:
            return "count"
        return {"color": "color", "shape": "shape", "class": "class",
                "region": "region", "relation": "relation"}[self.query]

    def target(self) -> dict:
        return {
            "kind": self.kind,
            "subject": [list(t) for t in self.subject],
            "abs_pos": self.abs_pos.value if self.abs_pos else None,
            "rel_pos": self.rel_pos.value if self.rel_pos else None,
            "reference": self.reference,
            "query": self.query,
        }


def _spec_matches(spec: ObjectSpec, subject) -> bool:
    for ns, v in subject:
        if ns == "object" and spec.cls != v:
            return False
        if ns == "color" and spec.color != v:
            return False
    return True


def _attr_value(spec: ObjectSpec, query: str) -> Optional[str]:
    if query == "color":
        return spec.color
    return spec.cls  # shape and class queries both name the class


def answer_key(scene: SceneImage, intent: Intent, width: int, height: int
               ) -> Optional[AnswerKey]:
    """Geometric answer key, or None when the intent is ill-posed.

    Keys are computed from the placements alone (never from the subgroup
    label): subject matching, region membership of bbox centers, and the
    relative-position classifier.
    """
    placements = scene.placements
    ref = None
    if intent.reference is not None:
        refs = [p for p in placements if p.object.cls == intent.reference]
        if not refs:
            # incoherent question: the anchor of the relative clause is absent
            return AnswerKey(kind="unk")
        if len(refs) > 1:
            return None
        ref = refs[0]

    matches = []
    for p in placements:
        if p is ref or not _spec_matches(p.object, intent.subject):
            continue
        if intent.kind == "exist" and intent.group == Group.ABSOLUTE:
            if region_of_bbox(p.bbox, width, height) != intent.abs_pos:
                continue
        if intent.kind == "attr" and intent.abs_pos is not None:
            if region_of_bbox(p.bbox, width, height) != intent.abs_pos:
                continue
        if intent.rel_pos is not None:
            if bboxes_overlap(p.bbox, ref.bbox):
                return None
            if classify_relative(p.bbox, ref.bbox) != intent.rel_pos:
                continue
        matches.append(p)

    if intent.qtype in (QType.PRESENCE, QType.CONFIRMATION):
        return AnswerKey(kind="yes" if matches else "no")
    if intent.qtype == QType.COUNTING:
        return AnswerKey(kind="number", number=len(matches))

    # recognition
    if intent.query == "region":
        regions = {region_of_bbox(p.bbox, width, height) for p in matches}
        if len(matches) < 1 or len(regions) != 1:
            return None
        return AnswerKey(kind="text", text=next(iter(regions)).phrase)
    if intent.query == "relation":
        if len(matches) != 1 or ref is None:
            return None
        if bboxes_overlap(matches[0].bbox, ref.bbox):
            return None
        direction = classify_relative(matches[0].bbox, ref.bbox)
        return AnswerKey(kind="text", text=REL_ANSWER[direction])
    values = {_attr_value(p.object, intent.query) for p in matches}
    if not matches or len(values) != 1:
        return None
    return AnswerKey(kind="text", text=next(iter(values)))


def _key_fits_subgroup(intent: Intent, key: AnswerKey) -> bool:
    qt, sg = intent.qtype, intent.subgroup
    if qt == QType.RECOGNITION:
        return sg == 1 and key.kind == "text"
    if intent.group == Group.RELATIVE and sg == 4:
        return key.kind == "unk"
    if qt == QType.COUNTING:
        if key.kind != "number":
            return False
        return key.number >= 1 if sg == 1 else key.number == 0
    return key.kind == ("yes" if sg == 1 else "no")


# ---------------------------------------------------------------------------
# Surface phrasing
# ---------------------------------------------------------------------------

def _subject_noun(subject) -> str:
    d = dict((ns, v) for ns, v in subject)
    noun = d.get("object", "object")
    if "color" in d:
        return f"{d['color']} {noun}"
    return noun


def _bindings(intent: Intent) -> dict:
    noun = _subject_noun(intent.subject)
    b = {
        "subject": f"{_article(noun)} {noun}",
        "subjects": pluralize(noun),
        "subject_def": f"the {noun}",
    }
    if intent.abs_pos is not None and intent.kind != "where":
        b["region"] = intent.abs_pos.phrase
    if intent.rel_pos is not None and intent.kind != "reldir":
        b["relation"] = intent.rel_pos.phrase
    if intent.reference is not None:
        b["ref"] = f"the {intent.reference}"
    if intent.query in _ATTR_NAMES:
        b["attr_name"] = _ATTR_NAMES[intent.query]
    return b


def _domain_values(domain: str, scene: SceneImage, arrangement) -> list[str]:
    if domain == "yesno":
        return ["yes", "no"]
    if domain == "count":
        return [str(i) for i in range(len(scene.placements) + 1)]
    if domain == "color":
        return list(COLORS)
    if domain == "shape":
        return list(SHAPE_CLASSES)
    if domain == "class":
        return sorted({o.cls for o in arrangement.objects})
    if domain == "region":
        return [p.phrase for p in AbsolutePosition]
    return [REL_ANSWER[r] for r in RelativePosition]


def _options_string(values: list[str]) -> str:
    opts = values + [NOT_APPLICABLE]
    return ", ".join(opts[:-1]) + ", or " + opts[-1]


def form_text(base: str, form: Form, domain: str, options: list[str]) -> str:
    if form == Form.ORIGINAL:
        return base
    if form == Form.CONDITION:
        return f"{base} {ADDENDA['condition'][domain]}"
    if form == Form.DIRECTION:
        return f"{base} {ADDENDA['direction']}"
    return f"{base} " + ADDENDA["enumerated"].format(
        options=_options_string(options))


# ---------------------------------------------------------------------------
# Per-image generation
# ---------------------------------------------------------------------------

def _descriptors(spec: ObjectSpec, shapes: bool):
    if shapes:
        return [
            (("object", spec.cls),),
            (("color", spec.color),),
            (("color", spec.color), ("object", spec.cls)),
        ]
    return [(("object", spec.cls),)]


def generate_for_image(scene: SceneImage, arrangement, cfg: GenerationConfig,
                       rng) -> list[QuestionRecord]:
    width, height = cfg.canvas_width, cfg.canvas_height
    shapes = cfg.object_mode == "shapes"
    placements = scene.placements
    placed_specs = list(dict.fromkeys(p.object for p in placements))
    remaining = Counter(arrangement.objects) - Counter(p.object for p in placements)
    absent_specs = list(remaining.keys())
    abs_order = tuple(AbsolutePosition)
    occupied = sorted({region_of_bbox(p.bbox, width, height) for p in placements},
                      key=abs_order.index)

    has_ref = scene.reference_index is not None
    if has_ref:
        ref_p = placements[scene.reference_index]
        ref_cls = ref_p.object.cls
        ref_unique = sum(p.object.cls == ref_cls for p in placements) == 1
    rel_ok = has_ref and ref_unique and scene.rel_pos is not None

    cells: dict[tuple, list[Intent]] = defaultdict(list)

    def add(intent: Intent):
        cells[(intent.qtype.value, intent.group.value, intent.subgroup,
               intent.kind)].append(intent)

    ex_qtypes = (QType.PRESENCE, QType.COUNTING, QType.CONFIRMATION)
    for qt in ex_qtypes:
        for spec in placed_specs:
            for d in _descriptors(spec, shapes):
                if qt == QType.CONFIRMATION and len(d) < 2:
                    continue  # a bare confirmation asserts a single concept
                add(Intent(qt, Group.NO_POSITION, 1, "exist", d))
        for spec in absent_specs:
            for d in _descriptors(spec, shapes):
                if qt == QType.CONFIRMATION and len(d) < 2:
                    continue
                add(Intent(qt, Group.NO_POSITION, 2, "exist", d))

        for p in placements:
            r = region_of_bbox(p.bbox, width, height)
            for d in _descriptors(p.object, shapes):
                add(Intent(qt, Group.ABSOLUTE, 1, "exist", d, abs_pos=r))
                for r2 in occupied:
                    if r2 != r:
                        add(Intent(qt, Group.ABSOLUTE, 2, "exist", d, abs_pos=r2))
        for spec in absent_specs:
            for d in _descriptors(spec, shapes):
                for r in occupied:
                    add(Intent(qt, Group.ABSOLUTE, 3, "exist", d, abs_pos=r))

        if rel_ok:
            rel = scene.rel_pos
            main_p = placements[scene.main_index]
            main_descs = [d for d in _descriptors(main_p.object, shapes)
                          if ("object", ref_cls) not in d]
            for d in main_descs:
                add(Intent(qt, Group.RELATIVE, 1, "exist", d,
                           rel_pos=rel, reference=ref_cls))
                for r2 in RelativePosition:
                    if r2 != rel:
                        add(Intent(qt, Group.RELATIVE, 2, "exist", d,
                                   rel_pos=r2, reference=ref_cls))
            for spec in absent_specs:
                for d in _descriptors(spec, shapes):
                    if ("object", ref_cls) in d:
                        continue
                    add(Intent(qt, Group.RELATIVE, 3, "exist", d,
                               rel_pos=rel, reference=ref_cls))
            absent_classes = [s.cls for s in absent_specs
                              if all(p.object.cls != s.cls for p in placements)]
            for d in main_descs:
                for acls in absent_classes:
                    add(Intent(qt, Group.RELATIVE, 4, "exist", d,
                               rel_pos=rel, reference=acls))

    # recognition, subgroup 1 only
    if shapes:
        for spec in placed_specs:
            add(Intent(QType.RECOGNITION, Group.NO_POSITION, 1, "attr",
                       (("object", spec.cls),), query="color"))
            add(Intent(QType.RECOGNITION, Group.NO_POSITION, 1, "attr",
                       (("color", spec.color),), query="shape"))
    for p in placements:
        r = region_of_bbox(p.bbox, width, height)
        if shapes:
            add(Intent(QType.RECOGNITION, Group.ABSOLUTE, 1, "attr", (),
                       abs_pos=r, query="color"))
            add(Intent(QType.RECOGNITION, Group.ABSOLUTE, 1, "attr",
                       (("object", p.object.cls),), abs_pos=r, query="color"))
            add(Intent(QType.RECOGNITION, Group.ABSOLUTE, 1, "attr", (),
                       abs_pos=r, query="shape"))
        else:
            add(Intent(QType.RECOGNITION, Group.ABSOLUTE, 1, "attr", (),
                       abs_pos=r, query="class"))
        for d in _descriptors(p.object, shapes):
            add(Intent(QType.RECOGNITION, Group.ABSOLUTE, 1, "where", d,
                       query="region"))
    if rel_ok:
        rel = scene.rel_pos
        main_p = placements[scene.main_index]
        if shapes:
            add(Intent(QType.RECOGNITION, Group.RELATIVE, 1, "attr", (),
                       rel_pos=rel, reference=ref_cls, query="color"))
            add(Intent(QType.RECOGNITION, Group.RELATIVE, 1, "attr", (),
                       rel_pos=rel, reference=ref_cls, query="shape"))
            if main_p.object.cls != ref_cls:
                add(Intent(QType.RECOGNITION, Group.RELATIVE, 1, "attr",
                           (("object", main_p.object.cls),),
                           rel_pos=rel, reference=ref_cls, query="color"))
        else:
            add(Intent(QType.RECOGNITION, Group.RELATIVE, 1, "attr", (),
                       rel_pos=rel, reference=ref_cls, query="class"))
        for p in placements:
            if p is ref_p:
                continue
            for d in _descriptors(p.object, shapes):
                if len(d) == 1 and ("object", ref_cls) not in d:
                    add(Intent(QType.RECOGNITION, Group.RELATIVE, 1, "reldir",
                               d, reference=ref_cls, query="relation"))

    # validate, dedupe and sample each cell, then expand into records
    records: list[QuestionRecord] = []
    seq = 0
    for cell_key in sorted(cells.keys()):
        validated = []
        seen_psets = set()
        for intent in cells[cell_key]:
            key = answer_key(scene, intent, width, height)
            if key is None or not _key_fits_subgroup(intent, key):
                continue
            concepts = intent.concepts()
            try:
                level = classify_level(intent.qtype, intent.group, concepts)
            except LevelClassificationError:
                continue
            pset = json.dumps([scene.image_id, cell_key, intent.target()],
                              sort_keys=True)
            if pset in seen_psets:
                continue
            seen_psets.add(pset)
            validated.append((intent, key, concepts, level, pset))
        if not validated:
            continue
        for intent, key, concepts, level, pset in rng.sample(
                validated, min(INTENTS_PER_CELL, len(validated))):
            domain = intent.answer_domain()
            options = _domain_values(domain, scene, arrangement)
            templates = [t for t in TEMPLATES
                         if t["qtype"] == intent.qtype.value
                         and t["group"] == intent.group.value
                         and t["kind"] == intent.kind]
            variants = expand_variants(templates, _bindings(intent), rng,
                                       cfg.n_questions_per_type)
            for tid, text in variants:
                seq += 1
                stem = f"{scene.image_id}.q{seq:04d}"
                for form in FORMS:
                    records.append(QuestionRecord(
                        question_id=stem,
                        image_id=scene.image_id,
                        qtype=intent.qtype,
                        group=intent.group,
                        subgroup=intent.subgroup,
                        form=form,
                        text=form_text(text, form, domain, options),
                        concepts=concepts,
                        level=level,
                        expected=key,
                        template_id=tid,
                        parameter_set_id=pset,
                        answer_domain=domain,
                        target=intent.target(),
                    ))
    return records
