"""Validation levels: question classification, coverage, performance gating.

A question's level (1..4) reflects how many concepts it combines and
whether positional concepts are involved.  A dataset enables a concept at
a level when it holds the full presence/counting spectrum for it (keyed
yes and no, zero and nonzero); a model passes a concept at a level when
its aggregated accuracy clears the threshold on every populated
(question type, subgroup) cell for that concept.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .core import Group, QType, QuestionRecord

PASS_THRESHOLD = 0.8


class LevelClassificationError(ValueError):
    """Concept combination outside the four defined levels."""


def is_position_tag(tag: str) -> bool:
    return tag.startswith("abs:") or tag.startswith("rel:")


def is_query_tag(tag: str) -> bool:
    return tag.startswith("query:")


def classify_level(qtype: QType, group: Group, concepts: Iterable[str]) -> int:
    tags = set(concepts)
    if not tags:
        raise LevelClassificationError("no concepts")
    n = len(tags)
    has_abs = any(t.startswith("abs:") for t in tags)
    has_rel = any(t.startswith("rel:") for t in tags)
    if qtype in (QType.PRESENCE, QType.COUNTING):
        if n == 1 and not (has_abs or has_rel):
            return 1
        if n == 2 and not has_rel:
            return 2
        if n == 3 and (has_abs or has_rel):
            return 3
        if n == 4 and has_rel:
            return 4
    else:
        # confirmation / recognition never need level 1: they always relate
        # at least two concepts
        if n == 2:
            return 2
        if n == 3:
            return 3
        if n == 4 and (has_abs or has_rel):
            return 4
    raise LevelClassificationError(
        f"unclassifiable: {qtype.value}/{group.value} with {sorted(tags)}")


# ---------------------------------------------------------------------------
# Coverage
# ---------------------------------------------------------------------------

@dataclass
class ConceptStatus:
    concept: tuple[str, ...]
    level: int
    coverage_ok: bool
    question_counts: dict = field(default_factory=dict)
    performance_ok: Optional[bool] = None


def _spectrum_flags(records: Iterable[QuestionRecord], level: int):
    """Per concept tuple: does the dataset hold all four key polarities?"""
    flags: dict[frozenset, dict] = defaultdict(
        lambda: {"presence_yes": 0, "presence_no": 0,
                 "counting_zero": 0, "counting_nonzero": 0})
    for r in records:
        if r.level != level or r.qtype not in (QType.PRESENCE, QType.COUNTING):
            continue
        key = frozenset(r.concepts)
        f = flags[key]
        if r.qtype == QType.PRESENCE:
            if r.expected.kind == "yes":
                f["presence_yes"] += 1
            elif r.expected.kind == "no":
                f["presence_no"] += 1
        else:
            if r.expected.kind == "number" and r.expected.number == 0:
                f["counting_zero"] += 1
            elif r.expected.kind == "number":
                f["counting_nonzero"] += 1
    return flags


def coverage_enablement(records: list[QuestionRecord], level: int
                        ) -> list[ConceptStatus]:
    """Concept tuples the dataset covers at the given level.

    Level 1 covers single concepts outright; higher levels additionally
    require every non-position member concept to be covered at level 1.
    """
    base = {next(iter(k)) for k, f in _spectrum_flags(records, 1).items()
            if len(k) == 1 and all(f.values())}
    out = []
    for key, f in sorted(_spectrum_flags(records, level).items(),
                         key=lambda kv: sorted(kv[0])):
        ok = all(v > 0 for v in f.values())
        if level > 1:
            ok = ok and all(t in base for t in key if not is_position_tag(t))
        out.append(ConceptStatus(concept=tuple(sorted(key)), level=level,
                                 coverage_ok=ok, question_counts=dict(f)))
    return out


def covered_concepts(records: list[QuestionRecord], level: int) -> set[frozenset]:
    return {frozenset(s.concept) for s in coverage_enablement(records, level)
            if s.coverage_ok}


def enablement_summary(records: list[QuestionRecord]) -> dict:
    """Per-level covered concept tuples with their question counts."""
    out = {}
    for level in (1, 2, 3, 4):
        statuses = coverage_enablement(records, level)
        out[str(level)] = [
            {"concept": list(s.concept), "covered": s.coverage_ok,
             "counts": s.question_counts}
            for s in statuses]
    return out


# ---------------------------------------------------------------------------
# Performance gate
# ---------------------------------------------------------------------------

def performance_gate(records: list[QuestionRecord],
                     aggregate_status: dict[str, str], level: int,
                     threshold: float = PASS_THRESHOLD,
                     reference_concepts: Optional[set[str]] = None) -> set[str]:
    """Concept tags whose aggregated accuracy clears the threshold at a level.

    aggregate_status maps question_id to the aggregated verdict status.
    A concept passes iff every populated (qtype, subgroup) cell among its
    level-L questions has accuracy >= threshold (inclusive).  When
    reference_concepts is given, questions pairing the candidate with a
    concept outside that set are ignored (only already-passed concepts may
    serve as references at the next level).
    """
    cells: dict[str, dict[tuple, list[int]]] = defaultdict(
        lambda: defaultdict(lambda: [0, 0]))
    seen_stems = set()
    for r in records:
        if r.level != level or r.question_id in seen_stems:
            continue
        if r.question_id not in aggregate_status:
            continue
        seen_stems.add(r.question_id)
        status = aggregate_status[r.question_id]
        plain = [t for t in r.concepts
                 if not is_position_tag(t) and not is_query_tag(t)]
        for tag in plain:
            others = [t for t in plain if t != tag]
            if reference_concepts is not None and \
                    not all(t in reference_concepts for t in others):
                continue
            cell = cells[tag][(r.qtype.value, r.subgroup)]
            cell[0] += 1
            cell[1] += int(status == "correct")
    passed = set()
    for tag, by_cell in cells.items():
        if by_cell and all(c / t >= threshold for t, c in by_cell.values()):
            passed.add(tag)
    return passed
