"""Response scoring: matching rules, error taxonomy, filters, reports.

Free-text answers are matched against canonical keys with form-dependent
strictness (containment for open phrasing, exact equality for the
condition and enumerated forms).  Per-question verdicts are aggregated
across the four forms, optionally invalidated against simpler ancestor
images, and rolled up into accuracy/error tables under four filters and
five scoring approaches.
"""

from __future__ import annotations

import csv
import json
import os
import re
from collections import Counter, defaultdict
from typing import Iterable, Optional

from .core import (COCO_CLASSES, COLORS, NOT_APPLICABLE, SHAPE_CLASSES,
                   AbsolutePosition, AnswerKey, Form, FORMS, QuestionRecord,
                   RelativePosition, ResponseRecord)
from .levels import is_position_tag, is_query_tag

APPROACHES = ("aggregated", "original", "condition", "direction", "enumerated")
FILTERS = ("non_absurd", "non_absurd_star", "full", "full_star")
CONSISTENCY_THRESHOLD = 0.8

NUMBER_WORDS = {
    "zero": "0", "one": "1", "two": "2", "three": "3", "four": "4",
    "five": "5", "six": "6", "seven": "7", "eight": "8", "nine": "9",
    "ten": "10", "eleven": "11", "twelve": "12", "thirteen": "13",
    "fourteen": "14", "fifteen": "15", "sixteen": "16", "seventeen": "17",
    "eighteen": "18", "nineteen": "19", "twenty": "20",
}

_NON_ALNUM = re.compile(r"[^a-z0-9]+")

_UNK_ANSWERS = (["not", "applicable"], ["unk"])


def normalize(text: str) -> list[str]:
    """Lowercased tokens with punctuation stripped and number words mapped."""
    tokens = _NON_ALNUM.sub(" ", text.lower()).split()
    return [NUMBER_WORDS.get(t, t) for t in tokens]


def _contains(haystack: list[str], needle: list[str]) -> bool:
    n = len(needle)
    if n == 0:
        return False
    return any(haystack[i:i + n] == needle
               for i in range(len(haystack) - n + 1))


def match_answer(form: Form, expected: AnswerKey, raw_text: str) -> bool:
    resp = normalize(raw_text)
    if expected.is_unk:
        cands = [list(c) for c in _UNK_ANSWERS]
    else:
        cands = [normalize(expected.canonical())]
    if form in (Form.ORIGINAL, Form.DIRECTION):
        return any(_contains(resp, c) for c in cands)
    return any(resp == c for c in cands)


# ---------------------------------------------------------------------------
# Plausibility and error classification
# ---------------------------------------------------------------------------

def domain_vocabulary(answer_domain: str) -> list[str]:
    """Closed vocabulary of plausible answers for one answer domain."""
    if answer_domain == "yesno":
        values = ["yes", "no"]
    elif answer_domain == "count":
        values = [str(i) for i in range(21)]
    elif answer_domain == "color":
        values = list(COLORS)
    elif answer_domain == "shape":
        values = list(SHAPE_CLASSES)
    elif answer_domain == "class":
        values = list(COCO_CLASSES) + list(SHAPE_CLASSES)
    elif answer_domain == "region":
        values = [p.phrase for p in AbsolutePosition]
    elif answer_domain == "relation":
        values = [r.value.replace("-", " ") for r in RelativePosition]
    else:
        raise ValueError(f"unknown answer domain {answer_domain!r}")
    return values + [NOT_APPLICABLE]


def plausible_values(raw_text: str, domain_values: Iterable[str]) -> list[str]:
    """Domain values present in the response, keeping only maximal matches.

    A value that is a token subsequence of another found value is dropped,
    so "upper left" does not also count as "left".
    """
    resp = normalize(raw_text)
    found = [v for v in domain_values if _contains(resp, normalize(v))]
    return [v for v in found
            if not any(w != v and _contains(normalize(w), normalize(v))
                       for w in found)]


def classify_single(expected: AnswerKey, raw_text: str,
                    domain_values: Iterable[str]) -> tuple[str, tuple[str, ...]]:
    """Error status and detected plausible values for one non-matching answer."""
    found = plausible_values(raw_text, domain_values)
    if not found:
        return "unexpected_answer", ()
    if len(found) == 1:
        return "wrong_answer", (found[0],)
    return "multiple_answers", tuple(sorted(found))


def form_verdict(record: QuestionRecord, raw_text: str) -> tuple[str, tuple[str, ...]]:
    if match_answer(record.form, record.expected, raw_text):
        value = (NOT_APPLICABLE if record.expected.is_unk
                 else record.expected.canonical())
        return "correct", (value,)
    return classify_single(record.expected, raw_text,
                           domain_vocabulary(record.answer_domain))


def aggregate_forms(verdicts: dict[Form, tuple[str, tuple[str, ...]]]) -> str:
    """Collapse the four form verdicts into one aggregate status."""
    if set(verdicts) != set(FORMS):
        raise ValueError("aggregate requires all four form verdicts")
    statuses = [s for s, _ in verdicts.values()]
    kinds = {s for s in statuses if s != "correct"}
    if not kinds:
        return "correct"
    if len(kinds) >= 2:
        return "error_disagreement"
    kind = kinds.pop()
    if kind == "unexpected_answer":
        # an unexpected answer offers no plausible value to disagree with,
        # so a mix with correct forms is a disagreement of error behavior
        if all(s == "unexpected_answer" for s in statuses):
            return "unexpected_answer"
        return "error_disagreement"
    value_sets = {vals for _, vals in verdicts.values()}
    if "correct" in statuses or len(value_sets) > 1:
        return "answer_disagreement"
    return kind


def consistency(statuses: list[str],
                threshold: float = CONSISTENCY_THRESHOLD) -> tuple[bool, float]:
    """Pass/fail and correct ratio over one paraphrase set."""
    if not statuses:
        raise ValueError("empty paraphrase set")
    ratio = sum(s == "correct" for s in statuses) / len(statuses)
    return ratio >= threshold, ratio


def accuracy_pct(corrects: int, total: int) -> float:
    return round(100.0 * corrects / total, 2) if total else 0.0


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

def load_responses(path) -> dict[tuple[str, Form], str]:
    out = {}
    with open(path) as f:
        for i, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = ResponseRecord.from_dict(json.loads(line))
            except (KeyError, ValueError, json.JSONDecodeError) as e:
                raise ValueError(f"{path}:{i}: bad response record: {e}")
            key = (rec.question_id, rec.form)
            if key in out:
                raise ValueError(f"{path}:{i}: duplicate response for {key}")
            out[key] = rec.raw_text
    return out


def _ancestors(image_id: str, parents: dict[str, Optional[str]]) -> list[str]:
    chain = []
    cur = parents.get(image_id)
    while cur is not None:
        chain.append(cur)
        cur = parents.get(cur)
    return chain


def _match_key(record: QuestionRecord) -> tuple:
    # same question across chain images: identity by taxonomy and concepts,
    # ignoring subgroup (the polarity may flip as objects appear)
    return (record.qtype.value, record.group.value, frozenset(record.concepts))


class Evaluation:
    """Joined records/responses with per-approach verdicts and filters."""

    def __init__(self, records: list[QuestionRecord],
                 responses: dict[tuple[str, Form], str],
                 parents: Optional[dict[str, Optional[str]]] = None):
        self.parents = parents or {}
        by_stem: dict[str, dict[Form, QuestionRecord]] = defaultdict(dict)
        for r in records:
            by_stem[r.question_id][r.form] = r
        self.by_stem = by_stem

        # per-form verdicts
        self.form_status: dict[str, dict[Form, tuple[str, tuple]]] = {}
        self.excluded = 0
        self.aggregate: dict[str, str] = {}
        for stem, forms in by_stem.items():
            verdicts = {}
            for form, rec in forms.items():
                raw = responses.get((stem, form))
                if raw is not None:
                    verdicts[form] = form_verdict(rec, raw)
            self.form_status[stem] = verdicts
            if set(verdicts) == set(FORMS):
                self.aggregate[stem] = aggregate_forms(verdicts)
            else:
                self.excluded += 1

        self._starred: dict[str, dict[str, str]] = {}

    def record(self, stem: str) -> QuestionRecord:
        return next(iter(self.by_stem[stem].values()))

    def status(self, stem: str, approach: str) -> Optional[str]:
        if approach == "aggregated":
            return self.aggregate.get(stem)
        v = self.form_status[stem].get(Form(approach))
        return v[0] if v else None

    def starred_status(self, stem: str, approach: str) -> Optional[str]:
        if approach not in self._starred:
            self._starred[approach] = self._compute_starred(approach)
        return self._starred[approach].get(stem,
                                           self.status(stem, approach))

    def _compute_starred(self, approach: str) -> dict[str, str]:
        # index: does image i answer match-key k incorrectly?
        wrong_at: dict[tuple, bool] = defaultdict(bool)
        for stem in self.by_stem:
            st = self.status(stem, approach)
            if st is None:
                continue
            rec = self.record(stem)
            if st != "correct":
                wrong_at[(rec.image_id, _match_key(rec))] = True
        out = {}
        for stem in self.by_stem:
            st = self.status(stem, approach)
            if st != "correct":
                continue
            rec = self.record(stem)
            key = _match_key(rec)
            for anc in _ancestors(rec.image_id, self.parents):
                if wrong_at[(anc, key)]:
                    out[stem] = "invalidated_by_simpler_image"
                    break
        return out

    def filtered_statuses(self, filter_name: str, approach: str
                          ) -> dict[str, str]:
        """stem -> status under one filter/approach pair."""
        star = filter_name.endswith("_star")
        non_absurd = filter_name.startswith("non_absurd")
        out = {}
        for stem in self.by_stem:
            rec = self.record(stem)
            if non_absurd and rec.expected.is_unk:
                continue
            st = (self.starred_status(stem, approach) if star
                  else self.status(stem, approach))
            if st is not None:
                out[stem] = st
        return out


def build_report(records: list[QuestionRecord],
                 responses: dict[tuple[str, Form], str],
                 parents: Optional[dict[str, Optional[str]]] = None) -> dict:
    ev = Evaluation(records, responses, parents)
    summary: dict = {}
    errors: dict = {}
    slices: list[dict] = []
    for filter_name in FILTERS:
        summary[filter_name] = {}
        errors[filter_name] = {}
        for approach in APPROACHES:
            statuses = ev.filtered_statuses(filter_name, approach)
            total = len(statuses)
            corrects = sum(s == "correct" for s in statuses.values())
            summary[filter_name][approach] = {
                "corrects": corrects, "total": total,
                "accuracy_pct": accuracy_pct(corrects, total),
            }
            errors[filter_name][approach] = dict(Counter(
                s for s in statuses.values() if s != "correct"))

            cells: dict[tuple, list[int]] = defaultdict(lambda: [0, 0])
            for stem, st in statuses.items():
                rec = ev.record(stem)
                tags = [t for t in rec.concepts
                        if not is_position_tag(t) and not is_query_tag(t)]
                for tag in tags:
                    cell = cells[(rec.level, tag, rec.qtype.value, rec.subgroup)]
                    cell[0] += 1
                    cell[1] += int(st == "correct")
            for (level, tag, qtype, subgroup), (t, c) in sorted(cells.items()):
                slices.append({
                    "filter": filter_name, "approach": approach,
                    "level": level, "concept": tag, "qtype": qtype,
                    "subgroup": subgroup, "corrects": c, "total": t,
                    "accuracy_pct": accuracy_pct(c, t),
                })

    # consistency over paraphrase sets (aggregated, unfiltered)
    sets: dict[str, list[str]] = defaultdict(list)
    for stem, st in ev.aggregate.items():
        sets[ev.record(stem).parameter_set_id].append(st)
    ratios = [consistency(v)[1] for v in sets.values()]
    passed = sum(consistency(v)[0] for v in sets.values())
    report = {
        "summary": summary,
        "errors": errors,
        "slices": slices,
        "consistency": {
            "threshold": CONSISTENCY_THRESHOLD,
            "sets": len(sets),
            "passed": passed,
            "mean_ratio": (round(sum(ratios) / len(ratios), 4) if ratios else None),
        },
        "excluded_missing_forms": ev.excluded,
    }
    return report


def bar_series(report: dict, filter_name: str = "full") -> dict[str, list[dict]]:
    """Stacked-bar inputs: per level and concept namespace, the accuracy of
    the aggregated approach and the four forms, with the pass-color flag."""
    by_cell: dict[tuple, dict] = defaultdict(dict)
    for row in report["slices"]:
        if row["filter"] != filter_name:
            continue
        key = (row["level"], row["concept"], row["approach"])
        agg = by_cell[key]
        agg["corrects"] = agg.get("corrects", 0) + row["corrects"]
        agg["total"] = agg.get("total", 0) + row["total"]
    series: dict[str, list[dict]] = defaultdict(list)
    concepts = sorted({(lvl, c) for lvl, c, _ in by_cell})
    for level, concept in concepts:
        namespace = concept.split(":", 1)[0]
        entry = {"concept": concept, "approaches": {}}
        for approach in APPROACHES:
            cell = by_cell.get((level, concept, approach))
            if not cell or not cell["total"]:
                continue
            pct = accuracy_pct(cell["corrects"], cell["total"])
            entry["approaches"][approach] = {
                "accuracy_pct": pct,
                "passes_threshold": pct >= 100.0 * CONSISTENCY_THRESHOLD,
            }
        series[f"{level}_{namespace}"].append(entry)
    return dict(series)


def write_report(report: dict, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        json.dump(report, f, indent=1, sort_keys=True)
    with open(os.path.join(out_dir, "report.csv"), "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=[
            "filter", "approach", "level", "concept", "qtype", "subgroup",
            "corrects", "total", "accuracy_pct"])
        writer.writeheader()
        writer.writerows(report["slices"])
    bars_dir = os.path.join(out_dir, "bars")
    os.makedirs(bars_dir, exist_ok=True)
    for name, entries in bar_series(report).items():
        with open(os.path.join(bars_dir, f"{name}.json"), "w") as f:
            json.dump(entries, f, indent=1, sort_keys=True)
