import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import perfect_answer, perfect_responses
from scrapbook.core import (AnswerKey, Form, FORMS, Group, NOT_APPLICABLE,
                            QType, QuestionRecord)
from scrapbook.evaluator import (Evaluation, accuracy_pct, aggregate_forms,
                                 build_report, classify_single, consistency,
                                 domain_vocabulary, form_verdict,
                                 load_responses, match_answer, normalize,
                                 plausible_values)


def _rec(form, expected, domain="yesno", qid="i1.q0001", concepts=("object:circle",),
         image_id="i1", subgroup=1, pset="p1", level=1):
    return QuestionRecord(
        question_id=qid, image_id=image_id, qtype=QType.PRESENCE,
        group=Group.NO_POSITION, subgroup=subgroup, form=form, text="t",
        concepts=tuple(concepts), level=level, expected=expected,
        template_id="t", parameter_set_id=pset, answer_domain=domain,
        target={})


YES = AnswerKey(kind="yes")
NO = AnswerKey(kind="no")


# ---------------------------------------------------------------------------
# Normalization and matching
# ---------------------------------------------------------------------------

def test_normalize_strips_punctuation_and_maps_number_words():
    assert normalize("Yes, there are THREE circles!") == \
        ["yes", "there", "are", "3", "circles"]
    assert normalize("top-left") == ["top", "left"]
    assert normalize("") == []


def test_original_form_matches_by_containment():
    assert match_answer(Form.ORIGINAL, YES, "yes, I can see it")
    assert match_answer(Form.DIRECTION, NO, "No.")
    # whole tokens only: "yes" inside "eyes" does not count
    assert not match_answer(Form.ORIGINAL, YES, "my eyes hurt")
    # multi-token needles must be contiguous
    key = AnswerKey(kind="text", text="upper left")
    assert match_answer(Form.ORIGINAL, key, "it is in the upper left area")
    assert not match_answer(Form.ORIGINAL, key, "upper part, left side")


def test_strict_forms_require_exact_answer():
    assert match_answer(Form.CONDITION, YES, "Yes")
    assert not match_answer(Form.CONDITION, YES, "yes it is")
    assert match_answer(Form.ENUMERATED, AnswerKey(kind="number", number=3),
                        "three")
    assert not match_answer(Form.ENUMERATED, AnswerKey(kind="number", number=3),
                            "3 circles")


def test_unk_accepts_both_spellings():
    unk = AnswerKey(kind="unk")
    assert match_answer(Form.CONDITION, unk, "not applicable")
    assert match_answer(Form.CONDITION, unk, "unk")
    assert match_answer(Form.ORIGINAL, unk, "that is not applicable here")
    assert not match_answer(Form.CONDITION, unk, "none")


# ---------------------------------------------------------------------------
# Plausibility and error classification
# ---------------------------------------------------------------------------

def test_domain_vocabulary_includes_not_applicable():
    assert domain_vocabulary("yesno") == ["yes", "no", NOT_APPLICABLE]
    assert len(domain_vocabulary("count")) == 22
    assert "lower right" in domain_vocabulary("relation")
    with pytest.raises(ValueError):
        domain_vocabulary("emotion")


def test_plausible_values_keep_only_maximal_matches():
    vocab = domain_vocabulary("region")
    assert plausible_values("it is in the center left", vocab) == ["center left"]
    found = plausible_values("either top left or bottom right", vocab)
    assert set(found) == {"top left", "bottom right"}


def test_classify_single_statuses():
    vocab = domain_vocabulary("yesno")
    assert classify_single(YES, "perhaps", vocab) == ("unexpected_answer", ())
    assert classify_single(YES, "no", vocab) == ("wrong_answer", ("no",))
    # a single detected value counts as wrong even when it equals the key:
    # the form-level matcher already rejected it (e.g. strict-form overrun)
    assert classify_single(YES, "yes and no", vocab)[0] == "multiple_answers"


def test_form_verdict_correct_value_is_the_key():
    r = _rec(Form.ORIGINAL, YES)
    assert form_verdict(r, "yes indeed") == ("correct", ("yes",))
    r = _rec(Form.CONDITION, AnswerKey(kind="unk"))
    assert form_verdict(r, "not applicable") == ("correct", (NOT_APPLICABLE,))


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

def _agg(*statuses_values):
    return aggregate_forms(dict(zip(FORMS, statuses_values)))


def test_aggregate_all_correct():
    assert _agg(*[("correct", ("yes",))] * 4) == "correct"


def test_aggregate_requires_all_forms():
    with pytest.raises(ValueError):
        aggregate_forms({Form.ORIGINAL: ("correct", ("yes",))})


def test_aggregate_unanimous_error_kinds():
    assert _agg(*[("wrong_answer", ("no",))] * 4) == "wrong_answer"
    assert _agg(*[("unexpected_answer", ())] * 4) == "unexpected_answer"
    assert _agg(*[("multiple_answers", ("no", "yes"))] * 4) == "multiple_answers"


def test_aggregate_mixed_error_kinds_is_error_disagreement():
    assert _agg(("wrong_answer", ("no",)), ("unexpected_answer", ()),
                ("wrong_answer", ("no",)), ("wrong_answer", ("no",))) == \
        "error_disagreement"
    # correct mixed with unexpected also disagrees on error behavior
    assert _agg(("correct", ("yes",)), ("unexpected_answer", ()),
                ("unexpected_answer", ()), ("unexpected_answer", ())) == \
        "error_disagreement"


def test_aggregate_value_disagreements():
    # correct on some forms, one consistent wrong value on others
    assert _agg(("correct", ("yes",)), ("wrong_answer", ("no",)),
                ("correct", ("yes",)), ("correct", ("yes",))) == \
        "answer_disagreement"
    # all wrong but with two distinct values
    assert _agg(("wrong_answer", ("no",)), ("wrong_answer", ("yes",)),
                ("wrong_answer", ("no",)), ("wrong_answer", ("no",))) == \
        "answer_disagreement"


def test_consistency_threshold():
    assert consistency(["correct"] * 4 + ["wrong_answer"]) == (True, 0.8)
    assert consistency(["correct"] * 3 + ["wrong_answer"] * 2) == (False, 0.6)
    with pytest.raises(ValueError):
        consistency([])


def test_accuracy_pct_rounding():
    assert accuracy_pct(1, 3) == 33.33
    assert accuracy_pct(2, 3) == 66.67
    assert accuracy_pct(0, 0) == 0.0


# ---------------------------------------------------------------------------
# Response loading
# ---------------------------------------------------------------------------

def test_load_responses_roundtrip(tmp_path):
    p = tmp_path / "responses.jsonl"
    p.write_text('{"question_id": "q1", "form": "original", "raw_text": "yes"}\n'
                 '\n'
                 '{"question_id": "q1", "form": "condition", "raw_text": "no"}\n')
    out = load_responses(p)
    assert out == {("q1", Form.ORIGINAL): "yes", ("q1", Form.CONDITION): "no"}


def test_load_responses_rejects_duplicates_and_garbage(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"question_id": "q1", "form": "original", "raw_text": "a"}\n'
                 '{"question_id": "q1", "form": "original", "raw_text": "b"}\n')
    with pytest.raises(ValueError):
        load_responses(p)
    p.write_text('not json\n')
    with pytest.raises(ValueError):
        load_responses(p)


# ---------------------------------------------------------------------------
# Evaluation: filters, precedence invalidation, report
# ---------------------------------------------------------------------------

def _stem_records(qid, expected, image_id="i1", concepts=("object:circle",),
                  subgroup=1, pset=None):
    return [_rec(f, expected, qid=qid, image_id=image_id, concepts=concepts,
                 subgroup=subgroup, pset=pset or qid) for f in FORMS]


def test_missing_forms_are_excluded_from_aggregate():
    records = _stem_records("q1", YES)
    responses = {("q1", Form.ORIGINAL): "yes"}
    ev = Evaluation(records, responses)
    assert ev.aggregate == {}
    assert ev.excluded == 1
    assert ev.status("q1", "original") == "correct"
    assert ev.status("q1", "condition") is None


def test_non_absurd_filter_drops_unk_questions():
    records = _stem_records("q1", YES) + \
        _stem_records("q2", AnswerKey(kind="unk"))
    responses = perfect_responses(records)
    ev = Evaluation(records, responses)
    assert set(ev.filtered_statuses("non_absurd", "aggregated")) == {"q1"}
    assert set(ev.filtered_statuses("full", "aggregated")) == {"q1", "q2"}


def test_star_invalidates_against_ancestor_errors():
    # same taxonomy+concepts asked on a chain: wrong on the parent image,
    # correct on the child -> the child's correct is invalidated
    parent = _stem_records("p.q1", YES, image_id="img_1")
    child = _stem_records("c.q1", YES, image_id="img_2")
    parents = {"img_1": None, "img_2": "img_1"}
    responses = perfect_responses(child)
    responses.update({("p.q1", f): "no" for f in FORMS})
    ev = Evaluation(parent + child, responses, parents)
    assert ev.status("c.q1", "aggregated") == "correct"
    assert ev.starred_status("c.q1", "aggregated") == \
        "invalidated_by_simpler_image"
    # the parent's own wrong verdict is untouched
    assert ev.starred_status("p.q1", "aggregated") == "wrong_answer"


def test_star_matches_across_subgroups_but_not_concepts():
    parent_other = _stem_records("p.q1", YES, image_id="img_1",
                                 concepts=("object:square",))
    parent_same = _stem_records("p.q2", NO, image_id="img_1", subgroup=2)
    child = _stem_records("c.q1", YES, image_id="img_2")
    parents = {"img_1": None, "img_2": "img_1"}
    responses = perfect_responses(parent_other + child)
    responses.update({("p.q2", f): "yes" for f in FORMS})  # wrong
    ev = Evaluation(parent_other + parent_same + child, responses, parents)
    # subgroup differs (1 vs 2) but concepts match -> still invalidated
    assert ev.starred_status("c.q1", "aggregated") == \
        "invalidated_by_simpler_image"
    # the square question is correct on the parent, so it cannot invalidate
    assert ev.starred_status("p.q1", "aggregated") == "correct"


def test_report_summary_and_consistency():
    records = []
    for i in range(5):
        records += _stem_records(f"q{i}", YES, pset="shared")
    responses = perfect_responses(records)
    responses.update({(f"q4", f): "no" for f in FORMS})
    report = build_report(records, responses, {})
    cell = report["summary"]["full"]["aggregated"]
    assert (cell["corrects"], cell["total"]) == (4, 5)
    assert cell["accuracy_pct"] == 80.0
    assert report["errors"]["full"]["aggregated"] == {"wrong_answer": 1}
    cons = report["consistency"]
    assert cons["sets"] == 1 and cons["passed"] == 1
    assert cons["mean_ratio"] == 0.8
    assert report["excluded_missing_forms"] == 0


def test_write_report_files(tmp_path):
    records = _stem_records("q1", YES)
    report = build_report(records, perfect_responses(records), {})
    from scrapbook.evaluator import write_report
    write_report(report, tmp_path)
    assert (tmp_path / "report.json").exists()
    assert (tmp_path / "report.csv").exists()
    bars = list((tmp_path / "bars").glob("*.json"))
    assert bars


# ---------------------------------------------------------------------------
# Whole-dataset properties
# ---------------------------------------------------------------------------

def test_perfect_responses_score_100_everywhere(small_records, small_parents):
    report = build_report(small_records, perfect_responses(small_records),
                          small_parents)
    for f in ("non_absurd", "non_absurd_star", "full", "full_star"):
        for a in ("aggregated", "original", "condition", "direction",
                  "enumerated"):
            cell = report["summary"][f][a]
            assert cell["accuracy_pct"] == 100.0, (f, a)
            assert cell["corrects"] == cell["total"] > 0


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_random_responder_filter_relations(small_records, small_parents, seed):
    rng = random.Random(seed)
    pool = ["yes", "no", "3", "maybe", "red", "top left", "not applicable"]
    responses = {(r.question_id, r.form): rng.choice(pool)
                 for r in small_records}
    ev = Evaluation(small_records, responses, small_parents)
    for approach in ("aggregated", "original"):
        plain = ev.filtered_statuses("full", approach)
        starred = ev.filtered_statuses("full_star", approach)
        assert set(plain) == set(starred)
        # starring only turns corrects into invalidations, never the reverse
        n_plain = sum(s == "correct" for s in plain.values())
        n_star = sum(s == "correct" for s in starred.values())
        assert n_star <= n_plain
        for stem, st_ in starred.items():
            if st_ == "invalidated_by_simpler_image":
                assert plain[stem] == "correct"
        # non-absurd is a subset of full
        na = ev.filtered_statuses("non_absurd", approach)
        assert set(na) <= set(plain)
    # the aggregate can never beat the weakest form
    agg = sum(s == "correct"
              for s in ev.filtered_statuses("full", "aggregated").values())
    for form in ("original", "condition", "direction", "enumerated"):
        per_form = sum(s == "correct"
                       for s in ev.filtered_statuses("full", form).values())
        assert agg <= per_form
