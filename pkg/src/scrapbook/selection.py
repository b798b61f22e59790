"""Object set selection: sliding-window deterministic or seeded random."""

from __future__ import annotations

from dataclasses import dataclass

from .bank import shape_side
from .core import (COCO_CLASSES, COLORS, SHAPE_CLASSES, GenerationConfig,
                   ObjectSpec, derive_rng)


@dataclass(frozen=True)
class ObjectSet:
    set_id: int
    specs: tuple[ObjectSpec, ...]

    @property
    def colors(self) -> frozenset[str]:
        return frozenset(s.color for s in self.specs if s.color is not None)


@dataclass(frozen=True)
class Arrangement:
    """Ordered selection of a set's objects: (main, reference, remainder).

    A singleton set yields an arrangement with no reference object.
    """
    arrangement_id: int
    main: ObjectSpec
    reference: ObjectSpec | None
    remainder: tuple[ObjectSpec, ...]

    @property
    def objects(self) -> tuple[ObjectSpec, ...]:
        if self.reference is None:
            return (self.main,) + self.remainder
        return (self.main, self.reference) + self.remainder


def size_for_index(i: int) -> int:
    """Pixel side length of a shape bbox: 70, 110, 150, ..."""
    return shape_side(i)


def _pick_values(domain: list, n: int, char_mode: str, selection_mode: str,
                 set_id: int, rng) -> list:
    """Attribute values for the n objects of one set.

    Deterministic selection uses a sliding window over the fixed domain
    ordering, advancing one position per set (wrapping modulo the domain).
    """
    c = len(domain)
    if char_mode == "unique" and n > c:
        raise ValueError(f"unique mode needs n <= {c}, got n={n}")
    if selection_mode == "deterministic":
        if char_mode == "same":
            return [domain[set_id % c]] * n
        if char_mode == "unique":
            return [domain[(set_id + i) % c] for i in range(n)]
        return [rng.choice(domain) for _ in range(n)]
    # random selection
    if char_mode == "same":
        return [rng.choice(domain)] * n
    if char_mode == "unique":
        return rng.sample(domain, n)
    return [rng.choice(domain) for _ in range(n)]


def select_sets(cfg: GenerationConfig) -> list[ObjectSet]:
    """Build the S object sets.  Pure function of (cfg, seed)."""
    sets = []
    n = cfg.objects_per_set
    classes = list(SHAPE_CLASSES) if cfg.object_mode == "shapes" else list(COCO_CLASSES)
    for k in range(cfg.num_sets):
        # each set draws from its own stream so set contents do not shift
        # when S changes
        rng = derive_rng(cfg.seed, "select", k)
        cls_values = _pick_values(classes, n, cfg.class_char_mode,
                                  cfg.selection_mode, k, rng)
        if cfg.object_mode == "shapes":
            color_values = _pick_values(list(COLORS), n, cfg.color_char_mode,
                                        cfg.selection_mode, k, rng)
            size_values = _pick_values(list(range(n)), n, cfg.size_char_mode,
                                       cfg.selection_mode, k, rng)
            specs = tuple(ObjectSpec(cls=c, color=col, size_index=s)
                          for c, col, s in zip(cls_values, color_values, size_values))
        else:
            specs = tuple(ObjectSpec(cls=c) for c in cls_values)
        sets.append(ObjectSet(set_id=k, specs=specs))
    return sets


def enumerate_arrangements(obj_set: ObjectSet, count: int, rng) -> list[Arrangement]:
    """Pick `count` arrangements with pairwise-distinct (main, reference) pairs."""
    n = len(obj_set.specs)
    if n == 1:
        if count > 1:
            raise ValueError("a singleton set has a single arrangement")
        return [Arrangement(arrangement_id=0, main=obj_set.specs[0],
                            reference=None, remainder=())]
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    if count > len(pairs):
        raise ValueError(f"requested {count} arrangements but only "
                         f"{len(pairs)} ordered pairs exist")
    rng.shuffle(pairs)
    arrangements = []
    for a, (i, j) in enumerate(pairs[:count]):
        remainder = tuple(s for k, s in enumerate(obj_set.specs) if k not in (i, j))
        arrangements.append(Arrangement(
            arrangement_id=a, main=obj_set.specs[i],
            reference=obj_set.specs[j], remainder=remainder))
    return arrangements
