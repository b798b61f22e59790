import json
import math
import os

import numpy as np
import pytest
from PIL import Image

from scrapbook.bank import (build_coco_bank, load_bank, pick_background,
                            rasterize_shape, shape_asset, shape_side)
from scrapbook.core import COLORS, COLOR_RGB, GenerationConfig, ObjectSpec


def test_shape_side_ladder():
    assert shape_side(0) == 70
    assert shape_side(1) == 110
    assert shape_side(4) == 230
    with pytest.raises(ValueError):
        shape_side(-1)


def test_rasterized_shape_dimensions():
    rgba, mask = rasterize_shape("circle", "black", 0)
    assert rgba.size == (70, 70)
    assert mask.shape == (70, 70)
    rgba, mask = rasterize_shape("triangle", "red", 1)
    assert rgba.size == (110, 110)


def test_circle_mask_area_close_to_disk_area():
    _, mask = rasterize_shape("circle", "black", 0)
    area = int(mask.sum())
    expected = math.pi * 35.0 ** 2  # ~3848 px
    assert abs(area - expected) / expected < 0.02


def test_every_shape_mask_is_nonempty_and_fills_center():
    for cls in ("circle", "square", "triangle", "pentagon", "hexagon",
                "heptagon"):
        for color in COLORS:
            _, mask = rasterize_shape(cls, color, 0)
            assert mask.any()
            assert mask[35, 35]


def test_rasterization_is_deterministic():
    a, _ = rasterize_shape("pentagon", "green", 2)
    b, _ = rasterize_shape("pentagon", "green", 2)
    assert a.tobytes() == b.tobytes()


def test_shape_fill_color_matches_vocabulary():
    rgba, mask = rasterize_shape("square", "orange", 0)
    arr = np.asarray(rgba)
    ys, xs = np.nonzero(mask)
    pixel = tuple(arr[ys[len(ys) // 2], xs[len(xs) // 2]][:3])
    assert pixel == COLOR_RGB["orange"]


def test_unknown_shape_or_color_rejected():
    with pytest.raises(ValueError):
        rasterize_shape("star", "red", 0)
    with pytest.raises(ValueError):
        rasterize_shape("circle", "purple", 0)


def test_shape_asset_uses_spec_fields():
    spec = ObjectSpec(cls="hexagon", color="blue", size_index=1)
    rgba, mask = shape_asset(spec)
    assert rgba.size == (110, 110)


def test_solid_background_avoids_set_colors():
    cfg = GenerationConfig()
    used = frozenset({"black", "blue", "green"})
    bg = pick_background(cfg, used, set_id=0, bg_index=0)
    assert bg.image.size == (1280, 768)
    colors = bg.image.getcolors(maxcolors=10)
    assert len(colors) == 1  # exactly one distinct RGB value
    name = bg.background_id.removeprefix("solid_")
    assert name in COLORS and name not in used


def test_solid_background_needs_a_free_color():
    cfg = GenerationConfig()
    with pytest.raises(ValueError):
        pick_background(cfg, frozenset(COLORS), 0, 0)


def test_photo_background_filters_small_images(tmp_path):
    Image.new("RGB", (400, 600), (10, 10, 10)).save(tmp_path / "small.png")
    Image.new("RGB", (800, 600), (20, 20, 20)).save(tmp_path / "big.png")
    cfg = GenerationConfig(object_mode="coco", background_dir=str(tmp_path))
    bg = pick_background(cfg, frozenset(), 0, 0)
    assert bg.background_id == "photo_big"
    assert bg.image.size == (1280, 768)


def test_photo_background_errors_when_all_undersized(tmp_path):
    Image.new("RGB", (400, 400), (10, 10, 10)).save(tmp_path / "tiny.jpg")
    cfg = GenerationConfig(object_mode="coco", background_dir=str(tmp_path))
    with pytest.raises(ValueError):
        pick_background(cfg, frozenset(), 0, 0)


# ---------------------------------------------------------------------------
# COCO bank construction on synthetic annotations
# ---------------------------------------------------------------------------

def _fake_coco(tmp_path):
    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    Image.new("RGB", (640, 480), (90, 120, 150)).save(img_dir / "000001.png")
    ann = {
        "images": [{"id": 1, "file_name": "000001.png",
                    "width": 640, "height": 480}],
        "categories": [{"id": 18, "name": "dog"}, {"id": 2, "name": "bicycle"}],
        "annotations": [
            # valid instance, well inside the frame
            {"id": 10, "image_id": 1, "category_id": 18, "iscrowd": 0,
             "bbox": [100, 100, 120, 90],
             "segmentation": [[100, 100, 220, 100, 220, 190, 100, 190]]},
            # too thin: fails the 48 px minimum on one side
            {"id": 11, "image_id": 1, "category_id": 18, "iscrowd": 0,
             "bbox": [300, 100, 40, 200],
             "segmentation": [[300, 100, 340, 100, 340, 300, 300, 300]]},
            # touches the image border: possibly incomplete
            {"id": 12, "image_id": 1, "category_id": 2, "iscrowd": 0,
             "bbox": [0, 200, 100, 100],
             "segmentation": [[0, 200, 100, 200, 100, 300, 0, 300]]},
            # crowd annotations are skipped outright
            {"id": 13, "image_id": 1, "category_id": 18, "iscrowd": 1,
             "bbox": [400, 100, 100, 100],
             "segmentation": [[400, 100, 500, 100, 500, 200, 400, 200]]},
        ],
    }
    ann_path = tmp_path / "instances.json"
    ann_path.write_text(json.dumps(ann))
    return ann_path, img_dir


def test_coco_bank_applies_size_and_edge_filters(tmp_path):
    ann_path, img_dir = _fake_coco(tmp_path)
    entries = build_coco_bank(ann_path, img_dir, tmp_path / "bank")
    assert [e.bank_id for e in entries] == ["dog_10"]
    e = entries[0]
    assert min(e.width, e.height) >= 48
    assert os.path.exists(e.raster_path) and os.path.exists(e.mask_path)
    # cutout keeps the source pixels under the mask, transparent elsewhere
    cut = Image.open(e.raster_path)
    arr = np.asarray(cut)
    assert tuple(arr[45, 60][:3]) == (90, 120, 150)
    assert arr[..., 3].min() == 0 or arr.shape[0] * arr.shape[1] == (arr[..., 3] > 0).sum()


def test_coco_bank_class_restriction(tmp_path):
    ann_path, img_dir = _fake_coco(tmp_path)
    entries = build_coco_bank(ann_path, img_dir, tmp_path / "bank",
                              classes=("bicycle",))
    assert entries == []
    with pytest.raises(ValueError):
        build_coco_bank(ann_path, img_dir, tmp_path / "bank2",
                        classes=("unicorn",))


def test_coco_bank_roundtrip(tmp_path):
    ann_path, img_dir = _fake_coco(tmp_path)
    entries = build_coco_bank(ann_path, img_dir, tmp_path / "bank")
    loaded = load_bank(tmp_path / "bank")
    assert set(loaded) == {e.bank_id for e in entries}
    assert loaded["dog_10"].cls == "dog"
