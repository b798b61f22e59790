import pytest

from scrapbook.core import (Form, GenerationConfig, NOT_APPLICABLE,
                            load_manifest, load_questions)
from scrapbook.generate import generate_dataset

# the reference configuration: deterministic selection, unique
# characteristics, 3 sets of 5 objects, full-size canvas
DEFAULT_CFG = GenerationConfig(seed=42)

# a smaller, faster configuration for CLI and property tests
SMALL_CFG = GenerationConfig(
    num_sets=1, objects_per_set=3, backgrounds_per_set=1, arrangements=1,
    objects_per_image=3, region_pairs=2, n_questions_per_type=2, seed=7,
    canvas_width=640, canvas_height=384)


@pytest.fixture(scope="session")
def full_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("full_ds")
    generate_dataset(DEFAULT_CFG, out)
    return out


@pytest.fixture(scope="session")
def full_records(full_dataset):
    return load_questions(full_dataset)


@pytest.fixture(scope="session")
def full_parents(full_dataset):
    manifest = load_manifest(full_dataset)
    return {d["id"]: d.get("parent_id") for d in manifest["images"]}


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("small_ds")
    generate_dataset(SMALL_CFG, out)
    return out


@pytest.fixture(scope="session")
def small_records(small_dataset):
    return load_questions(small_dataset)


@pytest.fixture(scope="session")
def small_parents(small_dataset):
    manifest = load_manifest(small_dataset)
    return {d["id"]: d.get("parent_id") for d in manifest["images"]}


def perfect_answer(record) -> str:
    return NOT_APPLICABLE if record.expected.is_unk else record.expected.canonical()


def perfect_responses(records) -> dict[tuple[str, Form], str]:
    return {(r.question_id, r.form): perfect_answer(r) for r in records}
