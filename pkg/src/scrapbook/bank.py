"""Placeable object assets: rasterized shapes, COCO cutouts, backgrounds.

Shape rasters are generated on demand and cached; COCO cutouts are read
from (or built into) a bank directory of RGBA PNGs plus an index file.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from PIL import Image, ImageDraw

from .core import (COLOR_RGB, COCO_CLASSES, COLORS, SHAPE_BASE_SIZE,
                   SHAPE_SIZE_STEP, SHAPE_CLASSES, GenerationConfig,
                   ObjectSpec, derive_rng)

MIN_CUTOUT_DIM = 48       # instances smaller than this on either side are dropped
MIN_PHOTO_BG_DIM = 500    # photo backgrounds must be at least 500x500
EDGE_TOLERANCE = 1        # bbox within this many px of the border counts as clipped

_POLYGON_SIDES = {"triangle": 3, "square": 4, "pentagon": 5, "hexagon": 6,
                  "heptagon": 7}


def shape_side(size_index: int) -> int:
    """Bounding-box side length for a shape of the given size index."""
    if size_index < 0:
        raise ValueError("size_index must be >= 0")
    return SHAPE_BASE_SIZE + SHAPE_SIZE_STEP * size_index


def _polygon_points(n: int, side: int) -> list[tuple[float, float]]:
    # Regular n-gon inscribed in the bbox, flat side down, fixed orientation.
    # Vertex angles measured in screen coordinates (y grows downward).
    c = side / 2.0
    r = side / 2.0 - 0.5
    points = []
    for k in range(n):
        theta = math.radians(90.0 - 180.0 / n + k * 360.0 / n)
        points.append((c + r * math.cos(theta), c + r * math.sin(theta)))
    return points


@lru_cache(maxsize=256)
def rasterize_shape(cls: str, color: str, size_index: int):
    """Render a filled shape.  Returns (RGBA Image, bool mask array)."""
    if cls not in SHAPE_CLASSES:
        raise ValueError(f"unknown shape class {cls!r}")
    if color not in COLORS:
        raise ValueError(f"unknown color {color!r}")
    side = shape_side(size_index)
    mask_img = Image.new("L", (side, side), 0)
    draw = ImageDraw.Draw(mask_img)
    if cls == "circle":
        draw.ellipse((0, 0, side - 1, side - 1), fill=255)
    else:
        draw.polygon(_polygon_points(_POLYGON_SIDES[cls], side), fill=255)
    mask = np.asarray(mask_img, dtype=bool)
    rgba = Image.new("RGBA", (side, side), (0, 0, 0, 0))
    solid = Image.new("RGBA", (side, side), COLOR_RGB[color] + (255,))
    rgba.paste(solid, (0, 0), mask_img)
    return rgba, mask


def shape_asset(spec: ObjectSpec):
    return rasterize_shape(spec.cls, spec.color, spec.size_index)


# ---------------------------------------------------------------------------
# COCO object bank
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BankEntry:
    bank_id: str
    cls: str
    raster_path: str
    mask_path: str
    source_image_id: int
    original_bbox: tuple[float, float, float, float]
    width: int
    height: int


def _bbox_at_edge(bbox, img_w, img_h) -> bool:
    x, y, w, h = bbox
    return (x <= EDGE_TOLERANCE or y <= EDGE_TOLERANCE
            or x + w >= img_w - EDGE_TOLERANCE
            or y + h >= img_h - EDGE_TOLERANCE)


def build_coco_bank(annotation_file, image_dir, out_dir,
                    classes: tuple[str, ...] = COCO_CLASSES) -> list[BankEntry]:
    """Extract object cutouts from COCO-format instance annotations.

    Keeps instances that are at least 48px on both sides, are not clipped
    by the source-image border, and belong to the curated class list.
    Cutouts keep their original pixels (no recoloring or rescaling);
    everything outside the instance mask is transparent.
    """
    with open(annotation_file) as f:
        coco = json.load(f)
    cat_names = {c["id"]: c["name"] for c in coco["categories"]}
    images = {i["id"]: i for i in coco["images"]}
    wanted = set(classes)
    unknown = wanted - set(COCO_CLASSES)
    if unknown:
        raise ValueError(f"classes outside the curated list: {sorted(unknown)}")

    os.makedirs(out_dir, exist_ok=True)
    entries: list[BankEntry] = []
    for ann in coco["annotations"]:
        if ann.get("iscrowd"):
            continue
        cls = cat_names.get(ann["category_id"])
        if cls not in wanted:
            continue
        info = images[ann["image_id"]]
        x, y, w, h = ann["bbox"]
        if min(w, h) < MIN_CUTOUT_DIM:
            continue
        if _bbox_at_edge(ann["bbox"], info["width"], info["height"]):
            continue
        src_path = os.path.join(image_dir, info["file_name"])
        if not os.path.exists(src_path):
            raise FileNotFoundError(f"missing source image {src_path}")
        src = Image.open(src_path).convert("RGBA")

        mask_img = Image.new("L", (info["width"], info["height"]), 0)
        draw = ImageDraw.Draw(mask_img)
        for seg in ann["segmentation"]:
            pts = list(zip(seg[0::2], seg[1::2]))
            draw.polygon(pts, fill=255)

        x0, y0 = int(math.floor(x)), int(math.floor(y))
        x1, y1 = int(math.ceil(x + w)), int(math.ceil(y + h))
        crop = src.crop((x0, y0, x1, y1))
        mask_crop = mask_img.crop((x0, y0, x1, y1))
        if not mask_crop.getbbox():
            continue  # degenerate segmentation
        cut = Image.new("RGBA", crop.size, (0, 0, 0, 0))
        cut.paste(crop, (0, 0), mask_crop)

        bank_id = f"{cls.replace(' ', '_')}_{ann['id']}"
        raster_path = os.path.join(out_dir, f"{bank_id}.png")
        mask_path = os.path.join(out_dir, f"{bank_id}_mask.png")
        cut.save(raster_path)
        mask_crop.point(lambda v: 255 if v else 0).convert("1").save(mask_path)
        entries.append(BankEntry(
            bank_id=bank_id, cls=cls, raster_path=raster_path,
            mask_path=mask_path, source_image_id=ann["image_id"],
            original_bbox=tuple(ann["bbox"]),
            width=cut.size[0], height=cut.size[1]))

    index = [e.__dict__ | {"original_bbox": list(e.original_bbox)} for e in entries]
    with open(os.path.join(out_dir, "bank_index.json"), "w") as f:
        json.dump(index, f, indent=1, sort_keys=True)
    return entries


def load_bank(bank_dir) -> dict[str, BankEntry]:
    with open(os.path.join(bank_dir, "bank_index.json")) as f:
        index = json.load(f)
    out = {}
    for d in index:
        d = dict(d)
        d["original_bbox"] = tuple(d["original_bbox"])
        e = BankEntry(**d)
        out[e.bank_id] = e
    return out


def bank_asset(entry: BankEntry):
    """Load an entry's RGBA raster and bool mask."""
    rgba = Image.open(entry.raster_path).convert("RGBA")
    mask = np.asarray(Image.open(entry.mask_path).convert("L"), dtype=bool)
    return rgba, mask


# ---------------------------------------------------------------------------
# Backgrounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Background:
    background_id: str
    image: Image.Image


def pick_background(cfg: GenerationConfig, set_colors: frozenset[str],
                    set_id: int, bg_index: int) -> Background:
    """Choose one background for (set, index), deterministically per seed.

    Shapes mode fills the canvas with a solid color not used by any object
    of the current set; coco mode picks a photo of at least 500x500 from
    the configured directory.
    """
    rng = derive_rng(cfg.seed, "background", set_id, bg_index)
    if cfg.object_mode == "shapes" or cfg.background_dir is None:
        eligible = [c for c in COLORS if c not in set_colors]
        if not eligible:
            raise ValueError("all colors are used by the object set; "
                             "no eligible solid background color")
        color = rng.choice(eligible)
        img = Image.new("RGB", (cfg.canvas_width, cfg.canvas_height),
                        COLOR_RGB[color])
        return Background(background_id=f"solid_{color}", image=img)

    candidates = sorted(
        f for f in os.listdir(cfg.background_dir)
        if f.lower().endswith((".png", ".jpg", ".jpeg")))
    eligible_files = []
    for name in candidates:
        with Image.open(os.path.join(cfg.background_dir, name)) as im:
            if im.size[0] >= MIN_PHOTO_BG_DIM and im.size[1] >= MIN_PHOTO_BG_DIM:
                eligible_files.append(name)
    if not eligible_files:
        raise ValueError(f"no background of at least {MIN_PHOTO_BG_DIM}x"
                         f"{MIN_PHOTO_BG_DIM} in {cfg.background_dir}")
    name = rng.choice(eligible_files)
    img = Image.open(os.path.join(cfg.background_dir, name)).convert("RGB")
    img = img.resize((cfg.canvas_width, cfg.canvas_height))
    return Background(background_id=f"photo_{os.path.splitext(name)[0]}",
                      image=img)
