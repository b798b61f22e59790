"""Constraint-based placement and incremental image composition.

Objects are placed by rejection sampling: the main object must have at
least three quarters of its bbox inside its target grid cell, the
reference object additionally has to sit in the requested relative
position of the main object's viewpoint, and every further object must
avoid that relative position so the main object stays the only one in it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from PIL import Image

from .core import AbsolutePosition, ObjectSpec, RelativePosition

MAX_ATTEMPTS = 1000       # rejection-sampling budget per object
JOINT_ROUNDS = 5          # main+reference pairs re-sampled together
REGION_OVERLAP_MIN = 0.75

ABS_POSITIONS = tuple(AbsolutePosition)
REL_POSITIONS = tuple(RelativePosition)

# sector order produced by classify_relative, counter-clockwise in screen
# coordinates starting at +x (45 degree sectors, boundaries at odd
# multiples of 22.5)
_SECTORS = (RelativePosition.RIGHT, RelativePosition.LOWER_RIGHT,
            RelativePosition.BELOW, RelativePosition.LOWER_LEFT,
            RelativePosition.LEFT, RelativePosition.UPPER_LEFT,
            RelativePosition.ABOVE, RelativePosition.UPPER_RIGHT)


class ClassificationError(ValueError):
    """Relative position undefined (overlapping boxes or equal centers)."""


def _grid_lines(size: int) -> tuple[int, int, int, int]:
    return (0, size // 3, (2 * size) // 3, size)


def region_bounds(abs_pos: AbsolutePosition, width: int, height: int
                  ) -> tuple[int, int, int, int]:
    """Grid-cell rectangle (x0, y0, x1, y1), upper bounds exclusive."""
    row, col = abs_pos.grid_cell
    xs = _grid_lines(width)
    ys = _grid_lines(height)
    return (xs[col], ys[row], xs[col + 1], ys[row + 1])


def cell_of_point(x: float, y: float, width: int, height: int) -> AbsolutePosition:
    xs = _grid_lines(width)
    ys = _grid_lines(height)
    col = 0 if x < xs[1] else (1 if x < xs[2] else 2)
    row = 0 if y < ys[1] else (1 if y < ys[2] else 2)
    return ABS_POSITIONS[row * 3 + col]


def region_of_bbox(bbox: tuple[int, int, int, int], width: int, height: int
                   ) -> AbsolutePosition:
    """Grid cell holding the bbox center."""
    x, y, w, h = bbox
    return cell_of_point(x + w / 2.0, y + h / 2.0, width, height)


def bboxes_overlap(a: tuple[int, int, int, int],
                   b: tuple[int, int, int, int]) -> bool:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return ax < bx + bw and bx < ax + aw and ay < by + bh and by < ay + ah


def region_overlap_fraction(bbox, region) -> float:
    x, y, w, h = bbox
    rx0, ry0, rx1, ry1 = region
    ix = max(0, min(x + w, rx1) - max(x, rx0))
    iy = max(0, min(y + h, ry1) - max(y, ry0))
    return (ix * iy) / float(w * h)


def classify_relative(main_bbox, ref_bbox) -> RelativePosition:
    """Direction of main relative to reference (8 sectors of 45 degrees).

    Uses the displacement between bbox centers, y axis pointing down.
    Raises ClassificationError for overlapping boxes or equal centers.
    """
    if bboxes_overlap(main_bbox, ref_bbox):
        raise ClassificationError(f"overlapping boxes {main_bbox} / {ref_bbox}")
    mx, my, mw, mh = main_bbox
    rx, ry, rw, rh = ref_bbox
    dx = (mx + mw / 2.0) - (rx + rw / 2.0)
    dy = (my + mh / 2.0) - (ry + rh / 2.0)
    if dx == 0 and dy == 0:
        raise ClassificationError("identical centers")
    angle = math.degrees(math.atan2(dy, dx))
    return _SECTORS[int(math.floor((angle + 22.5) / 45.0)) % 8]


# ---------------------------------------------------------------------------
# Placement sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlacedObject:
    object: ObjectSpec
    bbox: tuple[int, int, int, int]
    mask: np.ndarray  # bool, aligned to bbox

    def __post_init__(self):
        if not self.mask.any():
            raise ValueError("placement mask is empty")


def masks_disjoint(a: PlacedObject, b: PlacedObject) -> bool:
    if not bboxes_overlap(a.bbox, b.bbox):
        return True
    ax, ay, aw, ah = a.bbox
    bx, by, bw, bh = b.bbox
    x0, y0 = max(ax, bx), max(ay, by)
    x1, y1 = min(ax + aw, bx + bw), min(ay + ah, by + bh)
    sa = a.mask[y0 - ay:y1 - ay, x0 - ax:x1 - ax]
    sb = b.mask[y0 - by:y1 - by, x0 - bx:x1 - bx]
    return not np.logical_and(sa, sb).any()


AssetFn = Callable[[ObjectSpec], tuple[Image.Image, np.ndarray]]


def _sample_region_xy(w, h, region, width, height, rng):
    """Candidate top-left corner near the region; exact checks done by caller."""
    rx0, ry0, rx1, ry1 = region
    slack_x, slack_y = w // 4, h // 4
    lo_x = max(0, rx0 - slack_x)
    hi_x = min(width - w, rx1 - w + slack_x)
    lo_y = max(0, ry0 - slack_y)
    hi_y = min(height - h, ry1 - h + slack_y)
    if lo_x > hi_x or lo_y > hi_y:
        return None
    return rng.randint(lo_x, hi_x), rng.randint(lo_y, hi_y)


def place_main(spec: ObjectSpec, abs_pos: AbsolutePosition, width: int,
               height: int, rng, asset_fn: AssetFn,
               max_attempts: int = MAX_ATTEMPTS) -> Optional[PlacedObject]:
    """Place the main object with >= 75% of its bbox inside its region."""
    _, mask = asset_fn(spec)
    h, w = mask.shape
    if w > width or h > height:
        return None
    region = region_bounds(abs_pos, width, height)
    for _ in range(max_attempts):
        xy = _sample_region_xy(w, h, region, width, height, rng)
        if xy is None:
            return None
        bbox = (xy[0], xy[1], w, h)
        if region_overlap_fraction(bbox, region) >= REGION_OVERLAP_MIN:
            return PlacedObject(object=spec, bbox=bbox, mask=mask)
    return None


def place_reference(spec: ObjectSpec, abs_pos: AbsolutePosition,
                    rel_pos: RelativePosition, main: PlacedObject,
                    width: int, height: int, rng, asset_fn: AssetFn,
                    max_attempts: int = MAX_ATTEMPTS) -> Optional[PlacedObject]:
    """Place the reference so that main sits in rel_pos of it."""
    _, mask = asset_fn(spec)
    h, w = mask.shape
    if w > width or h > height:
        return None
    region = region_bounds(abs_pos, width, height)
    for _ in range(max_attempts):
        xy = _sample_region_xy(w, h, region, width, height, rng)
        if xy is None:
            return None
        bbox = (xy[0], xy[1], w, h)
        if region_overlap_fraction(bbox, region) < REGION_OVERLAP_MIN:
            continue
        if bboxes_overlap(bbox, main.bbox):
            continue
        if classify_relative(main.bbox, bbox) != rel_pos:
            continue
        return PlacedObject(object=spec, bbox=bbox, mask=mask)
    return None


def place_distractor(spec: ObjectSpec, priors: list[PlacedObject],
                     reference: PlacedObject, rel_pos: RelativePosition,
                     width: int, height: int, rng, asset_fn: AssetFn,
                     max_attempts: int = MAX_ATTEMPTS) -> Optional[PlacedObject]:
    """Add an extra object anywhere that is not in rel_pos of the reference.

    The bbox is kept disjoint from the reference bbox so every placement's
    direction from the reference stays classifiable.
    """
    _, mask = asset_fn(spec)
    h, w = mask.shape
    if w > width or h > height:
        return None
    for _ in range(max_attempts):
        x = rng.randint(0, width - w)
        y = rng.randint(0, height - h)
        bbox = (x, y, w, h)
        if bboxes_overlap(bbox, reference.bbox):
            continue
        if classify_relative(bbox, reference.bbox) == rel_pos:
            continue
        cand = PlacedObject(object=spec, bbox=bbox, mask=mask)
        if all(masks_disjoint(cand, p) for p in priors):
            return cand
    return None


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------

@dataclass
class ComposedScene:
    """One image of a chain: shared prefix of placements plus one new object."""
    placements: list[PlacedObject]
    main_index: int
    reference_index: Optional[int]
    abs_pair: tuple[AbsolutePosition, AbsolutePosition]
    rel_pos: RelativePosition


def compose_chain(arrangement, abs_pair, rel_pos: RelativePosition,
                  max_objects: int, width: int, height: int, rng,
                  asset_fn: AssetFn) -> tuple[list[ComposedScene], int]:
    """Build the incremental image chain for one configuration.

    Returns (scenes, dropped) where scenes is empty when the main/reference
    pair cannot be placed (the configuration is skipped) and dropped counts
    distractors for which no valid position was found.
    """
    main = reference = None
    if arrangement.reference is None or max_objects < 2:
        main = place_main(arrangement.main, abs_pair[0], width, height, rng,
                          asset_fn)
        if main is None:
            return [], 0
    else:
        for _ in range(JOINT_ROUNDS):
            main = place_main(arrangement.main, abs_pair[0], width, height,
                              rng, asset_fn)
            if main is None:
                return [], 0
            reference = place_reference(
                arrangement.reference, abs_pair[1], rel_pos, main,
                width, height, rng, asset_fn,
                max_attempts=MAX_ATTEMPTS // JOINT_ROUNDS)
            if reference is not None:
                break
        if reference is None:
            return [], 0

    placements = [main]
    scenes = [ComposedScene(placements=list(placements), main_index=0,
                            reference_index=None, abs_pair=abs_pair,
                            rel_pos=rel_pos)]
    if reference is not None:
        placements.append(reference)
        scenes.append(ComposedScene(placements=list(placements), main_index=0,
                                    reference_index=1, abs_pair=abs_pair,
                                    rel_pos=rel_pos))

    dropped = 0
    for spec in arrangement.remainder[:max(0, max_objects - len(placements))]:
        extra = place_distractor(spec, placements, reference, rel_pos,
                                 width, height, rng, asset_fn)
        if extra is None:
            dropped += 1
            continue
        placements.append(extra)
        scenes.append(ComposedScene(placements=list(placements), main_index=0,
                                    reference_index=1, abs_pair=abs_pair,
                                    rel_pos=rel_pos))
    return scenes, dropped


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def render(placements: list[PlacedObject], background: Image.Image,
           asset_fn: AssetFn) -> Image.Image:
    """Alpha-composite the objects over the background in placement order."""
    out = background.copy()
    for p in placements:
        rgba, _ = asset_fn(p.object)
        out.paste(rgba, (p.bbox[0], p.bbox[1]), rgba)
    return out


def full_canvas_mask(p: PlacedObject, width: int, height: int) -> np.ndarray:
    m = np.zeros((height, width), dtype=bool)
    x, y, w, h = p.bbox
    m[y:y + h, x:x + w] = p.mask
    return m
