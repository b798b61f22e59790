"""Dataset generation pipeline: plan units, compose, render, write.

Each (set, background, arrangement, region pair, relative position) unit
is generated independently from a seed derived from its coordinates, so
the output is identical for a fixed (config, seed) regardless of worker
count or scheduling.
"""

from __future__ import annotations

import io
import json
import os
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from PIL import Image

from . import bank as bank_mod
from .composer import compose_chain, full_canvas_mask
from .core import (AbsolutePosition, FORMS, GenerationConfig, ObjectSpec,
                   Placement, QuestionRecord, RelativePosition, SceneImage,
                   build_manifest, canonical_manifest, derive_rng,
                   validate_config)
from .levels import enablement_summary
from .questions import generate_for_image
from .selection import enumerate_arrangements, select_sets

PNG_COMPRESS_LEVEL = 1


def _png_bytes(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, "PNG", compress_level=PNG_COMPRESS_LEVEL)
    return buf.getvalue()


def _mask_bytes(mask: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(mask).convert("1").save(buf, "PNG")
    return buf.getvalue()


def _relative_positions(cfg: GenerationConfig) -> list:
    if cfg.objects_per_image >= 2 and cfg.objects_per_set >= 2:
        return list(RelativePosition)
    return [None]


def plan_units(cfg: GenerationConfig) -> list[tuple[int, int, int, int, int]]:
    rels = _relative_positions(cfg)
    return [(k, b, a, pi, ri)
            for k in range(cfg.num_sets)
            for b in range(cfg.backgrounds_per_set)
            for a in range(cfg.arrangements)
            for pi in range(cfg.region_pairs)
            for ri in range(len(rels))]


def _region_pair(cfg: GenerationConfig, k: int, b: int, a: int, pi: int):
    rng = derive_rng(cfg.seed, "pairs", k, b, a)
    positions = list(AbsolutePosition)
    all_pairs = [(p1, p2) for p1 in positions for p2 in positions]
    return rng.sample(all_pairs, cfg.region_pairs)[pi]


def _with_bank_ids(arrangement, bank: dict, rng):
    """Bind each object of a coco arrangement to a concrete bank cutout."""
    by_cls = defaultdict(list)
    for entry in bank.values():
        by_cls[entry.cls].append(entry)
    for lst in by_cls.values():
        lst.sort(key=lambda e: e.bank_id)

    def bind(spec: ObjectSpec) -> ObjectSpec:
        entries = by_cls.get(spec.cls)
        if not entries:
            raise ValueError(f"object bank holds no {spec.cls!r} cutout")
        return ObjectSpec(cls=spec.cls, bank_id=rng.choice(entries).bank_id)

    main = bind(arrangement.main)
    reference = bind(arrangement.reference) if arrangement.reference else None
    remainder = tuple(bind(s) for s in arrangement.remainder)
    return type(arrangement)(arrangement_id=arrangement.arrangement_id,
                             main=main, reference=reference,
                             remainder=remainder)


def _asset_fn(cfg: GenerationConfig, bank: dict):
    if cfg.object_mode == "shapes":
        return bank_mod.shape_asset
    cache = {}

    def fn(spec: ObjectSpec):
        if spec.bank_id not in cache:
            cache[spec.bank_id] = bank_mod.bank_asset(bank[spec.bank_id])
        return cache[spec.bank_id]

    return fn


def generate_unit(cfg_dict: dict, coords: tuple[int, int, int, int, int]) -> dict:
    """Build one image chain; returns files, image rows and question rows."""
    cfg = GenerationConfig.from_dict(cfg_dict)
    k, b, a, pi, ri = coords
    obj_set = select_sets(cfg)[k]
    arrangement = enumerate_arrangements(
        obj_set, cfg.arrangements, derive_rng(cfg.seed, "arrange", k))[a]
    abs_pair = _region_pair(cfg, k, b, a, pi)
    rel = _relative_positions(cfg)[ri]

    bank = bank_mod.load_bank(cfg.bank_dir) if cfg.object_mode == "coco" else {}
    rng = derive_rng(cfg.seed, "compose", k, b, a, pi, ri)
    if cfg.object_mode == "coco":
        arrangement = _with_bank_ids(arrangement, bank, rng)
    asset_fn = _asset_fn(cfg, bank)

    scenes, dropped = compose_chain(
        arrangement, abs_pair, rel, cfg.objects_per_image,
        cfg.canvas_width, cfg.canvas_height, rng, asset_fn)
    out = {"coords": coords, "files": [], "images": [], "questions": [],
           "dropped": dropped, "skipped": not scenes}
    if not scenes:
        return out

    background = bank_mod.pick_background(cfg, obj_set.colors, k, b)
    canvas = background.image.copy()
    base_id = f"s{k}_b{b}_a{a}_p{pi}_r{ri}"
    prev_id = None
    for step, scene in enumerate(scenes, 1):
        image_id = f"{base_id}_{step}"
        new = scene.placements[-1]
        rgba, _ = asset_fn(new.object)
        canvas.paste(rgba, (new.bbox[0], new.bbox[1]), rgba)
        image_path = f"images/{image_id}.png"
        out["files"].append((image_path, _png_bytes(canvas)))

        placements = []
        for idx, p in enumerate(scene.placements):
            mask_ref = f"masks/{image_id}_{idx}.png"
            out["files"].append(
                (mask_ref, _mask_bytes(full_canvas_mask(
                    p, cfg.canvas_width, cfg.canvas_height))))
            placements.append(Placement(object=p.object, bbox=p.bbox,
                                        mask_ref=mask_ref))
        scene_img = SceneImage(
            image_id=image_id,
            parent_id=prev_id,
            background_id=background.background_id,
            placements=tuple(placements),
            main_index=scene.main_index,
            reference_index=scene.reference_index,
            abs_pos_pair=abs_pair,
            rel_pos=rel,
            image_path=image_path,
        )
        out["images"].append(scene_img.to_dict())
        q_rng = derive_rng(cfg.seed, "questions", image_id)
        out["questions"].extend(
            r.to_dict() for r in generate_for_image(scene_img, arrangement,
                                                    cfg, q_rng))
        prev_id = image_id
    return out


def generate_dataset(cfg: GenerationConfig, out_dir, jobs: int = 1) -> dict:
    errors = validate_config(cfg)
    if errors:
        raise ValueError("; ".join(errors))
    started = time.time()
    units = plan_units(cfg)
    cfg_dict = cfg.to_dict()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            payloads = list(pool.map(generate_unit, [cfg_dict] * len(units),
                                     units, chunksize=4))
    else:
        payloads = [generate_unit(cfg_dict, u) for u in units]

    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "questions"), exist_ok=True)

    images, records = [], []
    skipped = dropped = 0
    for payload in payloads:
        skipped += int(payload["skipped"])
        dropped += payload["dropped"]
        for relpath, data in payload["files"]:
            with open(os.path.join(out_dir, relpath), "wb") as f:
                f.write(data)
        images.extend(SceneImage.from_dict(d) for d in payload["images"])
        records.extend(QuestionRecord.from_dict(d)
                       for d in payload["questions"])

    form_order = {f: i for i, f in enumerate(FORMS)}
    records.sort(key=lambda r: (r.question_id, form_order[r.form]))
    by_file = defaultdict(list)
    for r in records:
        by_file[r.subgroup_file].append(r)
    question_counts = {}
    for name in sorted(by_file):
        with open(os.path.join(out_dir, "questions", name), "w") as f:
            for r in by_file[name]:
                f.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
        question_counts[name] = len(by_file[name])

    manifest = build_manifest(cfg, images, question_counts)
    with open(os.path.join(out_dir, "manifest.json"), "wb") as f:
        f.write(canonical_manifest(manifest))
    with open(os.path.join(out_dir, "enablement.json"), "w") as f:
        json.dump(enablement_summary(records), f, indent=1, sort_keys=True)
    runlog = {
        "seed": cfg.seed,
        "attempted_units": len(units),
        "generated_units": len(units) - skipped,
        "skipped_units": skipped,
        "dropped_distractors": dropped,
        "images": len(images),
        "questions": len(records),
        "seconds": round(time.time() - started, 3),
    }
    with open(os.path.join(out_dir, "runlog.json"), "w") as f:
        json.dump(runlog, f, indent=1, sort_keys=True)
    return manifest
