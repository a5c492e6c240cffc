"""Class schemas, packed label masks, boundary extraction, eval ground truth.

A label mask stores one uint32 per pixel:

    bits 0..k-1   membership in each of the k predefined classes
    bit  30       membership in the class-agnostic object class
    bit  31       ignore flag; an ignored pixel carries no other bits

k is at most 30. A pixel may set several predefined bits in principle
(the layout is multi-label), though remapping from a semantic id map
always produces exactly one predefined bit per counted pixel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import ndimage

from .errors import SchemaError, ShapeError, ValidationError
from .tensor_io import read_tensor, write_tensor

OBJECT_BIT = np.uint32(1 << 30)
IGNORE_BIT = np.uint32(1 << 31)
MAX_PREDEFINED = 30
DEFAULT_VOID_ID = 255

GT_NOT_OBSTACLE = 0
GT_OBSTACLE = 1
GT_EXCLUDED = 2

FINE19_NAMES = (
    "road", "sidewalk", "building", "wall", "fence", "pole",
    "traffic_light", "traffic_sign", "vegetation", "terrain", "sky",
    "person", "rider", "car", "truck", "bus", "train", "motorcycle",
    "bicycle",
)

GROUPED7_NAMES = (
    "road", "flat_other", "human", "vehicle", "construction", "object",
    "background",
)

# Source ids follow the usual 19-class training-id convention.
_GROUPED7_TABLE = {
    0: 0,    # road
    1: 1,    # sidewalk -> flat_other
    2: 4, 3: 4, 4: 4,          # building, wall, fence -> construction
    5: 5, 6: 5, 7: 5,          # pole, traffic light/sign -> object
    8: 6, 9: 6, 10: 6,         # vegetation, terrain, sky -> background
    11: 2, 12: 2,              # person, rider -> human
    13: 3, 14: 3, 15: 3, 16: 3, 17: 3, 18: 3,  # vehicles
}

_FINE19_OBJECT = frozenset({5, 6, 7, 11, 12, 13, 14, 15, 16, 17, 18})
_GROUPED7_OBJECT = frozenset({2, 3, 5})  # human, vehicle, object


@dataclass(frozen=True)
class ClassSchema:
    """Predefined class names, which of them count as objects, and an
    optional remap table from source semantic ids to class indices."""

    names: tuple[str, ...]
    object_members: frozenset[int]
    grouping: Mapping[int, int] | None = field(default=None)

    def __post_init__(self):
        k = len(self.names)
        if not 1 <= k <= MAX_PREDEFINED:
            raise SchemaError(f"{k} classes outside 1..{MAX_PREDEFINED}")
        if len(set(self.names)) != k:
            raise SchemaError("duplicate class names")
        if any(not 0 <= m < k for m in self.object_members):
            raise SchemaError("object member index out of range")
        if self.grouping is not None:
            targets = set(self.grouping.values())
            if any(not 0 <= t < k for t in targets):
                raise SchemaError("grouping target out of range")
            if targets != set(range(k)):
                raise SchemaError(
                    f"grouping targets must cover 0..{k - 1} exactly"
                )

    @property
    def k(self) -> int:
        return len(self.names)


def build_schema(
    source: str | Mapping[int, str | int],
    object_classes=None,
) -> ClassSchema:
    """Build a schema from a preset name or a custom source-id table.

    Presets: ``"grouped7"`` (7 merged classes) and ``"fine19"`` (the full
    19). A custom table maps source ids to class names (classes are
    numbered by first appearance over sorted source ids) or directly to
    dense indices 0..k-1. ``object_classes`` selects which class names
    count as objects; presets carry their own selection and reject it.
    """
    if isinstance(source, str):
        if object_classes is not None:
            raise SchemaError("presets fix their own object classes")
        if source == "grouped7":
            return ClassSchema(GROUPED7_NAMES, _GROUPED7_OBJECT, dict(_GROUPED7_TABLE))
        if source == "fine19":
            return ClassSchema(
                FINE19_NAMES, _FINE19_OBJECT, {i: i for i in range(19)}
            )
        raise SchemaError(f"unknown preset {source!r}")

    if not source:
        raise SchemaError("empty class table")
    values = list(source.values())
    if all(isinstance(v, str) for v in values):
        names: list[str] = []
        index: dict[str, int] = {}
        for sid in sorted(source):
            name = source[sid]
            if name not in index:
                index[name] = len(names)
                names.append(name)
        grouping = {sid: index[source[sid]] for sid in source}
    elif all(isinstance(v, int) and not isinstance(v, bool) for v in values):
        targets = set(values)
        k = len(targets)
        if targets != set(range(k)):
            raise SchemaError(
                f"integer targets must be exactly 0..{k - 1}, got {sorted(targets)}"
            )
        names = [f"class_{i}" for i in range(k)]
        grouping = dict(source)
    else:
        raise SchemaError("table values must be all names or all indices")

    if len(names) > MAX_PREDEFINED:
        raise SchemaError(f"{len(names)} classes exceed {MAX_PREDEFINED}")

    members: set[int] = set()
    if object_classes is not None:
        for entry in object_classes:
            if isinstance(entry, str):
                if entry not in names:
                    raise SchemaError(f"unknown object class {entry!r}")
                members.add(names.index(entry))
            else:
                if not 0 <= entry < len(names):
                    raise SchemaError(f"object class index {entry} out of range")
                members.add(int(entry))
    return ClassSchema(tuple(names), frozenset(members), grouping)


class LabelMap:
    """A (height, width) uint32 bitmask array plus its class count k."""

    __slots__ = ("mask", "k")

    def __init__(self, mask: np.ndarray, k: int):
        mask = np.asarray(mask)
        if mask.ndim != 2 or mask.shape[0] < 1 or mask.shape[1] < 1:
            raise ValidationError(f"expected (H, W) mask, got shape {mask.shape}")
        if mask.dtype != np.uint32:
            if not np.issubdtype(mask.dtype, np.integer):
                raise ValidationError(f"mask dtype {mask.dtype} is not integral")
            if mask.min() < 0 or mask.max() > np.iinfo(np.uint32).max:
                raise ValidationError("mask values outside uint32 range")
            mask = mask.astype(np.uint32)
        if not 1 <= k <= MAX_PREDEFINED:
            raise ValidationError(f"k={k} outside 1..{MAX_PREDEFINED}")
        allowed = np.uint32((1 << k) - 1) | OBJECT_BIT | IGNORE_BIT
        if (mask & ~allowed).any():
            raise ValidationError("mask sets bits outside the declared layout")
        ignored = (mask & IGNORE_BIT) != 0
        if (mask[ignored] != IGNORE_BIT).any():
            raise ValidationError("ignored pixels must carry the ignore bit alone")
        self.mask = mask
        self.k = int(k)

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    def ignore(self) -> np.ndarray:
        """Boolean mask of pixels excluded from the loss."""
        return (self.mask & IGNORE_BIT) != 0

    def object_mask(self) -> np.ndarray:
        return (self.mask & OBJECT_BIT) != 0

    def class_mask(self, index: int) -> np.ndarray:
        if not 0 <= index < self.k:
            raise ValidationError(f"class index {index} outside 0..{self.k - 1}")
        return (self.mask & np.uint32(1 << index)) != 0

    def multihot(self) -> np.ndarray:
        """Targets as float32 (H, W, k+1): predefined bits then object."""
        shifts = np.arange(self.k, dtype=np.uint32)
        bits = (self.mask[:, :, None] >> shifts) & np.uint32(1)
        obj = (self.mask & OBJECT_BIT) != 0
        out = np.empty((*self.mask.shape, self.k + 1), dtype=np.float32)
        out[:, :, : self.k] = bits
        out[:, :, self.k] = obj
        return out

    def save(self, path: str | Path) -> None:
        write_tensor(self.mask, path)

    @classmethod
    def load(cls, path: str | Path, k: int) -> "LabelMap":
        return cls(read_tensor(path), k)


def remap_labels(
    semantic_ids: np.ndarray,
    schema: ClassSchema,
    void_id: int = DEFAULT_VOID_ID,
) -> LabelMap:
    """Turn a semantic id map into a packed label mask.

    Each mapped pixel gets its class bit, plus the object bit when the
    class is an object member. Pixels equal to ``void_id`` become pure
    ignore. Any other id missing from the schema raises SchemaError.
    """
    ids = np.asarray(semantic_ids)
    if ids.ndim != 2:
        raise ValidationError(f"expected (H, W) ids, got shape {ids.shape}")
    if not np.issubdtype(ids.dtype, np.integer):
        raise ValidationError(f"ids dtype {ids.dtype} is not integral")
    if not 0 <= void_id <= 65535:
        raise ValidationError(f"void id {void_id} outside 0..65535")
    grouping = schema.grouping or {i: i for i in range(schema.k)}
    if ids.size and int(ids.min()) < 0:
        raise SchemaError("negative semantic id")
    top = int(ids.max()) if ids.size else 0
    lut = np.zeros(max(top, void_id) + 1, dtype=np.uint32)
    known = np.zeros(lut.shape, dtype=bool)
    for sid, target in grouping.items():
        word = np.uint32(1 << target)
        if target in schema.object_members:
            word |= OBJECT_BIT
        if sid <= top:
            lut[sid] = word
            known[sid] = True
    if void_id <= top:
        lut[void_id] = IGNORE_BIT
        known[void_id] = True
    if not known[ids].all():
        bad = np.unique(ids[~known[ids]])
        raise SchemaError(f"semantic ids {bad.tolist()} missing from schema")
    return LabelMap(lut[ids], schema.k)


def assign_ood_labels(labels: LabelMap, ood_mask: np.ndarray) -> LabelMap:
    """Mark the given pixels as object-only training targets.

    Marked pixels keep no class bits and lose the ignore flag; this is
    how void regions become out-of-distribution supervision. Applying
    the same mask twice changes nothing.
    """
    ood = np.asarray(ood_mask).astype(bool)
    if ood.shape != labels.mask.shape:
        raise ShapeError(f"mask shape {ood.shape} != labels {labels.mask.shape}")
    out = labels.mask.copy()
    out[ood] = OBJECT_BIT
    return LabelMap(out, labels.k)


def boundary_mask(labels: LabelMap, radius: int = 2) -> np.ndarray:
    """Pixels near a label transition, as uint8 {0, 1}.

    A transition is any 4-neighbor pair whose full bitmasks differ,
    except pairs where both pixels are ignored. Both endpoints of a
    transition are seeds; the seed set is then dilated with a square of
    side 2*radius+1, so a pixel is marked when its Chebyshev distance to
    a seed is at most radius.
    """
    if radius < 0:
        raise ValidationError(f"radius {radius} must be >= 0")
    m = labels.mask
    ign = labels.ignore()
    seeds = np.zeros(m.shape, dtype=bool)
    step = (m[:, 1:] != m[:, :-1]) & ~(ign[:, 1:] & ign[:, :-1])
    seeds[:, 1:] |= step
    seeds[:, :-1] |= step
    step = (m[1:, :] != m[:-1, :]) & ~(ign[1:, :] & ign[:-1, :])
    seeds[1:, :] |= step
    seeds[:-1, :] |= step
    if radius > 0 and seeds.any():
        size = 2 * radius + 1
        seeds = ndimage.binary_dilation(seeds, structure=np.ones((size, size), bool))
    return seeds.astype(np.uint8)


def make_eval_gt(obstacle_mask: np.ndarray, roi_mask: np.ndarray) -> np.ndarray:
    """Combine obstacle and region-of-interest masks into per-pixel
    evaluation states: 1 obstacle, 0 not obstacle, 2 excluded.

    Pixels outside the ROI are excluded even when the obstacle mask
    claims them.
    """
    obstacle = np.asarray(obstacle_mask).astype(bool)
    roi = np.asarray(roi_mask).astype(bool)
    if obstacle.shape != roi.shape:
        raise ShapeError(f"obstacle shape {obstacle.shape} != roi {roi.shape}")
    states = np.full(obstacle.shape, GT_EXCLUDED, dtype=np.uint8)
    states[roi] = GT_NOT_OBSTACLE
    states[roi & obstacle] = GT_OBSTACLE
    return states
