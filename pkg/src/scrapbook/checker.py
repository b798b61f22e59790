"""Self-contained dataset validator.

Re-verifies every geometric constraint and every answer key of a
generated dataset from the files alone.  The geometry here (grid cells,
overlap fractions, direction sectors) and the scene-graph answerer are
written independently of the composer/question modules so the two
implementations can check each other.
"""

from __future__ import annotations

import math
import os
from collections import Counter, defaultdict
from typing import Optional

import numpy as np
from PIL import Image

from .core import (AbsolutePosition, AnswerKey, GenerationConfig,
                   QuestionRecord, RelativePosition, SceneImage,
                   load_manifest, load_questions, manifest_images)
from .levels import LevelClassificationError, classify_level

_TAN = math.tan(math.radians(22.5))


def _center(bbox) -> tuple[float, float]:
    x, y, w, h = bbox
    return x + w / 2.0, y + h / 2.0


def direction_of(dx: float, dy: float) -> RelativePosition:
    """Sector of a center displacement, y axis down.

    Axis sectors are half-open so that each boundary ray belongs to
    exactly one sector; diagonal sectors are what remains per quadrant.
    """
    if dx == 0 and dy == 0:
        raise ValueError("no displacement")
    if dx > 0 and -_TAN * dx <= dy < _TAN * dx:
        return RelativePosition.RIGHT
    if dy > 0 and -_TAN * dy < dx <= _TAN * dy:
        return RelativePosition.BELOW
    if dx < 0 and _TAN * dx < dy <= -_TAN * dx:
        return RelativePosition.LEFT
    if dy < 0 and _TAN * dy <= dx < -_TAN * dy:
        return RelativePosition.ABOVE
    if dx > 0 and dy > 0:
        return RelativePosition.LOWER_RIGHT
    if dx < 0 and dy > 0:
        return RelativePosition.LOWER_LEFT
    if dx < 0 and dy < 0:
        return RelativePosition.UPPER_LEFT
    return RelativePosition.UPPER_RIGHT


def _boxes_disjoint(a, b) -> bool:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return ax + aw <= bx or bx + bw <= ax or ay + ah <= by or by + bh <= ay


def relative_of(subject_bbox, ref_bbox) -> Optional[RelativePosition]:
    if not _boxes_disjoint(subject_bbox, ref_bbox):
        return None
    sx, sy = _center(subject_bbox)
    rx, ry = _center(ref_bbox)
    return direction_of(sx - rx, sy - ry)


def cell_of(bbox, width: int, height: int) -> AbsolutePosition:
    cx, cy = _center(bbox)
    col = min(2, (0 if cx < width // 3 else (1 if cx < (2 * width) // 3 else 2)))
    row = min(2, (0 if cy < height // 3 else (1 if cy < (2 * height) // 3 else 2)))
    names = [
        ["top-left", "top-center", "top-right"],
        ["center-left", "center", "center-right"],
        ["bottom-left", "bottom-center", "bottom-right"],
    ]
    return AbsolutePosition(names[row][col])


def cell_fraction(bbox, abs_pos: AbsolutePosition, width: int, height: int) -> float:
    """Fraction of the bbox area inside the grid cell of abs_pos."""
    row, col = abs_pos.grid_cell
    xs = [0, width // 3, (2 * width) // 3, width]
    ys = [0, height // 3, (2 * height) // 3, height]
    x, y, w, h = bbox
    ov_x = min(x + w, xs[col + 1]) - max(x, xs[col])
    ov_y = min(y + h, ys[row + 1]) - max(y, ys[row])
    if ov_x <= 0 or ov_y <= 0:
        return 0.0
    return (ov_x * ov_y) / (w * h)


# ---------------------------------------------------------------------------
# Scene-graph answerer
# ---------------------------------------------------------------------------

def _obj_matches(obj, subject: list) -> bool:
    for ns, value in subject:
        if ns == "object" and obj.cls != value:
            return False
        if ns == "color" and obj.color != value:
            return False
    return True


def answer_for(scene: SceneImage, record: QuestionRecord, width: int,
               height: int) -> Optional[AnswerKey]:
    """Recompute the expected answer from the scene graph and the record's
    structured target.  Returns None when the question is ill-posed."""
    t = record.target
    kind = t.get("kind")
    subject = t.get("subject", [])
    abs_pos = AbsolutePosition(t["abs_pos"]) if t.get("abs_pos") else None
    rel_pos = RelativePosition(t["rel_pos"]) if t.get("rel_pos") else None
    ref_cls = t.get("reference")
    query = t.get("query")

    ref = None
    if ref_cls is not None:
        refs = [p for p in scene.placements if p.object.cls == ref_cls]
        if not refs:
            return AnswerKey(kind="unk")
        if len(refs) > 1:
            return None
        ref = refs[0]

    pool = []
    for p in scene.placements:
        if p is ref or not _obj_matches(p.object, subject):
            continue
        if abs_pos is not None and kind in ("exist", "attr"):
            if cell_of(p.bbox, width, height) != abs_pos:
                continue
        if rel_pos is not None:
            if relative_of(p.bbox, ref.bbox) != rel_pos:
                continue
        pool.append(p)

    qt = record.qtype.value
    if qt in ("presence", "confirmation"):
        return AnswerKey(kind="yes" if pool else "no")
    if qt == "counting":
        return AnswerKey(kind="number", number=len(pool))
    if query == "region":
        cells = {cell_of(p.bbox, width, height) for p in pool}
        if not pool or len(cells) != 1:
            return None
        return AnswerKey(kind="text", text=cells.pop().phrase)
    if query == "relation":
        if len(pool) != 1 or ref is None:
            return None
        direction = relative_of(pool[0].bbox, ref.bbox)
        if direction is None:
            return None
        return AnswerKey(kind="text", text=direction.value.replace("-", " "))
    if query == "color":
        values = {p.object.color for p in pool}
    else:
        values = {p.object.cls for p in pool}
    if not pool or len(values) != 1:
        return None
    return AnswerKey(kind="text", text=values.pop())


# ---------------------------------------------------------------------------
# Dataset checks
# ---------------------------------------------------------------------------

def check_image(scene: SceneImage, cfg: GenerationConfig, dataset_dir,
                by_id: dict[str, SceneImage]) -> list[str]:
    errs = []
    width, height = cfg.canvas_width, cfg.canvas_height
    masks = []
    for i, p in enumerate(scene.placements):
        x, y, w, h = p.bbox
        if x < 0 or y < 0 or x + w > width or y + h > height:
            errs.append(f"{scene.image_id}: placement {i} leaves the canvas")
        mpath = os.path.join(dataset_dir, p.mask_ref)
        if not os.path.exists(mpath):
            errs.append(f"{scene.image_id}: missing mask {p.mask_ref}")
            continue
        m = np.asarray(Image.open(mpath).convert("L")) > 0
        if m.shape != (height, width):
            errs.append(f"{scene.image_id}: mask {i} is not canvas-sized")
            continue
        if not m.any():
            errs.append(f"{scene.image_id}: mask {i} is empty")
        outside = m.copy()
        outside[y:y + h, x:x + w] = False
        if outside.any():
            errs.append(f"{scene.image_id}: mask {i} spills outside its bbox")
        masks.append(m)
    if len(masks) == len(scene.placements) and masks:
        stack = np.zeros((height, width), dtype=np.uint8)
        for m in masks:
            stack += m.astype(np.uint8)
        if stack.max() > 1:
            errs.append(f"{scene.image_id}: overlapping object masks")

    if scene.parent_id is not None:
        parent = by_id.get(scene.parent_id)
        if parent is None:
            errs.append(f"{scene.image_id}: unknown parent {scene.parent_id}")
        else:
            own = [(p.object.to_dict(), p.bbox) for p in scene.placements]
            prev = [(p.object.to_dict(), p.bbox) for p in parent.placements]
            if own[:-1] != prev or len(own) != len(prev) + 1:
                errs.append(f"{scene.image_id}: placements are not "
                            f"parent's plus one appended object")

    if scene.main_index is not None and scene.abs_pos_pair is not None:
        main = scene.placements[scene.main_index]
        frac = cell_fraction(main.bbox, scene.abs_pos_pair[0], width, height)
        if frac < 0.75:
            errs.append(f"{scene.image_id}: main object only {frac:.2f} "
                        f"inside its region")
    if scene.reference_index is not None:
        ref = scene.placements[scene.reference_index]
        if scene.abs_pos_pair is not None:
            frac = cell_fraction(ref.bbox, scene.abs_pos_pair[1], width, height)
            if frac < 0.75:
                errs.append(f"{scene.image_id}: reference only {frac:.2f} "
                            f"inside its region")
        if scene.rel_pos is not None:
            main = scene.placements[scene.main_index]
            got = relative_of(main.bbox, ref.bbox)
            if got != scene.rel_pos:
                errs.append(f"{scene.image_id}: main is {got} of the "
                            f"reference, expected {scene.rel_pos.value}")
            for i, p in enumerate(scene.placements):
                if i in (scene.main_index, scene.reference_index):
                    continue
                if relative_of(p.bbox, ref.bbox) == scene.rel_pos:
                    errs.append(f"{scene.image_id}: placement {i} intrudes "
                                f"into the constrained relative position")
    return errs


def check_questions(records: list[QuestionRecord], by_id: dict[str, SceneImage],
                    cfg: GenerationConfig) -> list[str]:
    errs = []
    variants = defaultdict(set)
    for r in records:
        scene = by_id.get(r.image_id)
        if scene is None:
            errs.append(f"{r.question_id}: unknown image {r.image_id}")
            continue
        if r.qtype.value == "recognition" and r.subgroup != 1:
            errs.append(f"{r.question_id}: recognition outside subgroup 1")
        if r.subgroup == 4 and r.group.value != "relative_position":
            errs.append(f"{r.question_id}: subgroup 4 outside relative group")
        key = answer_for(scene, r, cfg.canvas_width, cfg.canvas_height)
        if key is None:
            errs.append(f"{r.question_id}: ill-posed target")
        elif key.to_dict() != r.expected.to_dict():
            errs.append(f"{r.question_id}: expected {r.expected.to_dict()}, "
                        f"recomputed {key.to_dict()}")
        try:
            level = classify_level(r.qtype, r.group, r.concepts)
            if level != r.level:
                errs.append(f"{r.question_id}: stored level {r.level}, "
                            f"recomputed {level}")
        except LevelClassificationError as e:
            errs.append(f"{r.question_id}: {e}")
        variants[(r.parameter_set_id, r.form)].add(r.text)
    for (pset, form), texts in variants.items():
        if len(texts) > cfg.n_questions_per_type:
            errs.append(f"parameter set {pset} has {len(texts)} {form.value} "
                        f"paraphrases, cap is {cfg.n_questions_per_type}")
    counts = Counter()
    for r in records:
        counts[(r.parameter_set_id, r.form)] += 1
    for (pset, form), n in counts.items():
        if n != len(variants[(pset, form)]):
            errs.append(f"parameter set {pset} repeats a {form.value} text")
    return errs


def check_dataset(dataset_dir) -> list[str]:
    manifest = load_manifest(dataset_dir)
    cfg = GenerationConfig.from_dict(manifest["config"])
    images = manifest_images(manifest)
    by_id = {img.image_id: img for img in images}
    errs = []
    for scene in images:
        errs.extend(check_image(scene, cfg, dataset_dir, by_id))
    records = load_questions(dataset_dir)
    errs.extend(check_questions(records, by_id, cfg))
    per_file = Counter(r.subgroup_file for r in records)
    for name, n in manifest.get("question_counts", {}).items():
        if per_file.get(name, 0) != n:
            errs.append(f"manifest counts {n} questions for {name}, "
                        f"found {per_file.get(name, 0)}")
    return errs


def key_census(records: list[QuestionRecord]) -> Counter:
    """Counts of canonical expected answers over unique question stems."""
    seen = set()
    census = Counter()
    for r in records:
        if r.question_id in seen:
            continue
        seen.add(r.question_id)
        census[r.expected.canonical()] += 1
    return census
