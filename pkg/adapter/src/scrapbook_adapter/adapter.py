"""Drive a model over a generated dataset and write responses.jsonl.

The adapter only relies on the dataset directory contract (manifest.json,
images/, questions/*.jsonl) and the response schema (one JSON object per
line with question_id, form and raw_text).  Model output is written
verbatim; all normalization is left to the evaluator.

A model is any callable taking (image_path, question_text) and returning
the answer text.  Two stubs ship for testing: an oracle that echoes the
stored expected answer and a constant responder.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

log = logging.getLogger("scrapbook_adapter")

Model = Callable[[str, str], str]

NOT_APPLICABLE = "not applicable"


@dataclass(frozen=True)
class AdapterConfig:
    dataset_dir: str
    output_path: str
    model: str = "stub:yes"  # identifier or endpoint of the model to call
    batch_size: int = 8
    max_new_tokens: int = 32
    temperature: float = 0.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        manifest = os.path.join(self.dataset_dir, "manifest.json")
        if not os.path.isfile(manifest):
            raise ValueError(f"{self.dataset_dir} holds no manifest.json")


# ---------------------------------------------------------------------------
# Dataset access (files only, no generator imports)
# ---------------------------------------------------------------------------

def iter_questions(dataset_dir: str) -> Iterator[dict]:
    """Question dicts in a fixed order: sorted file name, then line order."""
    qdir = os.path.join(dataset_dir, "questions")
    for name in sorted(os.listdir(qdir)):
        if not name.endswith(".jsonl"):
            continue
        with open(os.path.join(qdir, name)) as f:
            for line in f:
                line = line.strip()
                if line:
                    yield json.loads(line)


def _image_paths(dataset_dir: str) -> dict[str, str]:
    with open(os.path.join(dataset_dir, "manifest.json")) as f:
        manifest = json.load(f)
    return {d["id"]: os.path.join(dataset_dir, d["image"])
            for d in manifest["images"]}


def _answered(output_path: str) -> set[tuple[str, str]]:
    done = set()
    if not os.path.exists(output_path):
        return done
    with open(output_path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            done.add((d["question_id"], d["form"]))
    return done


# ---------------------------------------------------------------------------
# Stub models
# ---------------------------------------------------------------------------

def _canonical(expected: dict) -> str:
    kind = expected["kind"]
    if kind in ("yes", "no"):
        return kind
    if kind == "number":
        return str(expected["number"])
    if kind == "text":
        return expected["text"]
    return NOT_APPLICABLE  # unk: the only honest reply a model could give


def echo_oracle(dataset_dir: str) -> Model:
    """Stub that answers every question with its stored expected answer."""
    keys = {(q["question_id"], q["form"]): _canonical(q["expected"])
            for q in iter_questions(dataset_dir)}
    current: dict[str, str] = {}

    def model(image_path: str, text: str) -> str:
        return keys[(current["question_id"], current["form"])]

    # run_adapter sets the record being asked before each call
    model.set_record = current.update  # type: ignore[attr-defined]
    return model


def constant_model(answer: str) -> Model:
    def model(image_path: str, text: str) -> str:
        return answer
    return model


def resolve_model(cfg: AdapterConfig) -> Model:
    if cfg.model == "stub:echo":
        return echo_oracle(cfg.dataset_dir)
    if cfg.model.startswith("stub:constant:"):
        return constant_model(cfg.model.split(":", 2)[2])
    if cfg.model == "stub:yes":
        return constant_model("yes")
    raise ValueError(f"unknown model {cfg.model!r}; real endpoints need a "
                     f"callable passed to run_adapter directly")


# ---------------------------------------------------------------------------
# Run loop
# ---------------------------------------------------------------------------

def run_adapter(cfg: AdapterConfig, model: Optional[Model] = None) -> int:
    """Answer every not-yet-answered (question_id, form) pair.

    Appends one JSON line per answered pair, flushing after each batch, so
    an interrupted run can be resumed and completes to the same file as an
    uninterrupted one.  A model call failure skips the record (it stays
    unanswered for the next run) and the run continues.

    Returns the number of records answered in this run.
    """
    if model is None:
        model = resolve_model(cfg)
    images = _image_paths(cfg.dataset_dir)
    done = _answered(cfg.output_path)
    written = 0
    os.makedirs(os.path.dirname(os.path.abspath(cfg.output_path)),
                exist_ok=True)
    with open(cfg.output_path, "a") as out:
        pending = 0
        for q in iter_questions(cfg.dataset_dir):
            key = (q["question_id"], q["form"])
            if key in done:
                continue
            done.add(key)
            if hasattr(model, "set_record"):
                model.set_record(q)
            try:
                raw = model(images[q["image_id"]], q["text"])
            except Exception as e:
                log.warning("model failed on %s/%s: %s", key[0], key[1], e)
                continue
            out.write(json.dumps({"question_id": key[0], "form": key[1],
                                  "raw_text": raw}) + "\n")
            written += 1
            pending += 1
            if pending >= cfg.batch_size:
                out.flush()
                pending = 0
    return written
