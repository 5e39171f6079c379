"""Scene model: boxes, detected objects, vocabularies and detection-file ingestion."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, Mapping, Optional, Set, Tuple

from .errors import (
    BoxOutOfBounds,
    DegenerateBox,
    DuplicateObjectId,
    EmptyVocabulary,
    SchemaError,
    UnknownAttribute,
    UnknownCategory,
    UnknownObject,
    VocabularyError,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixels, origin top-left, y pointing down."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        for name in ("x1", "y1", "x2", "y2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise DegenerateBox(f"degenerate box {self.as_list()}")

    @classmethod
    def from_seq(cls, values: Iterable[Any]) -> "BBox":
        vals = list(values)
        if len(vals) != 4 or not all(_is_number(v) for v in vals):
            raise SchemaError(f"box must be four numbers, got {vals!r}")
        return cls(*(float(v) for v in vals))

    def as_list(self) -> list:
        return [self.x1, self.y1, self.x2, self.y2]

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def within(self, width: float, height: float) -> bool:
        return self.x1 >= 0 and self.y1 >= 0 and self.x2 <= width and self.y2 <= height

    def translated(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)


@dataclass(frozen=True)
class DetectedObject:
    id: int
    category: str
    attributes: FrozenSet[str]
    box: BBox

    def sorted_attributes(self) -> Tuple[str, ...]:
        return tuple(sorted(self.attributes))


@dataclass(frozen=True)
class Scene:
    scene_id: str
    image_width: int
    image_height: int
    objects: Tuple[DetectedObject, ...]
    time_step: int = 0
    _index: Dict[int, DetectedObject] = field(
        default_factory=dict, init=False, repr=False, compare=False, hash=False
    )

    def __post_init__(self) -> None:
        if not self.objects:
            raise SchemaError(f"scene {self.scene_id!r} has no objects")
        if self.time_step < 0:
            raise SchemaError("time_step must be non-negative")
        index = self._index
        for obj in self.objects:
            if obj.id in index:
                raise DuplicateObjectId(f"duplicate object id {obj.id} in scene {self.scene_id!r}")
            if not obj.box.within(self.image_width, self.image_height):
                raise BoxOutOfBounds(
                    f"object {obj.id} box {obj.box.as_list()} outside "
                    f"{self.image_width}x{self.image_height} image"
                )
            index[obj.id] = obj

    def get(self, object_id: int) -> DetectedObject:
        try:
            return self._index[object_id]
        except KeyError:
            raise UnknownObject(f"no object {object_id} in scene {self.scene_id!r}") from None

    @property
    def size(self) -> Tuple[int, int]:
        return (self.image_width, self.image_height)

    def at_step(self, t: int) -> "Scene":
        return replace(self, time_step=t)


@dataclass(frozen=True)
class Vocabulary:
    kind: str
    tokens: Tuple[str, ...]
    _members: FrozenSet[str] = field(default=frozenset(), init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in ("category", "attribute"):
            raise VocabularyError(f"unknown vocabulary kind {self.kind!r}")
        if not self.tokens:
            raise EmptyVocabulary(f"{self.kind} vocabulary is empty")
        for tok in self.tokens:
            if not tok or tok != tok.lower():
                raise VocabularyError(f"invalid token {tok!r}")
        if len(set(self.tokens)) != len(self.tokens):
            raise VocabularyError("vocabulary tokens must be unique")
        object.__setattr__(self, "_members", frozenset(self.tokens))

    def __contains__(self, token: object) -> bool:
        return token in self._members

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def load_vocabulary(path, kind: str) -> Vocabulary:
    """Read one token per line; tokens are lowercased and de-duplicated in file order."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"vocabulary file not found: {path}")
    tokens = []
    seen: Set[str] = set()
    for raw in path.read_text(encoding="utf-8").splitlines():
        tok = " ".join(raw.split()).lower()
        if not tok:
            continue
        if tok in seen:
            log.warning("duplicate %s token %r in %s; keeping first occurrence", kind, tok, path)
            continue
        seen.add(tok)
        tokens.append(tok)
    if not tokens:
        raise EmptyVocabulary(f"{kind} vocabulary {path} is empty")
    return Vocabulary(kind, tuple(tokens))


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _require(doc: Mapping, key: str, types, where: str):
    if key not in doc:
        raise SchemaError(f"{where}: missing field {key!r}")
    val = doc[key]
    if not isinstance(val, types) or isinstance(val, bool):
        raise SchemaError(f"{where}: field {key!r} has wrong type {type(val).__name__}")
    return val


def scene_from_dict(
    doc: Mapping[str, Any],
    vocabs: Optional[Tuple[Vocabulary, Vocabulary]] = None,
) -> Scene:
    """Validate a decoded scene document. Vocabulary checks are skipped when ``vocabs`` is None."""
    if not isinstance(doc, Mapping):
        raise SchemaError("scene document must be an object")
    scene_id = _require(doc, "scene_id", str, "scene")
    width = _require(doc, "image_width", int, scene_id)
    height = _require(doc, "image_height", int, scene_id)
    if width <= 0 or height <= 0:
        raise SchemaError(f"{scene_id}: image dimensions must be positive")
    raw_objects = _require(doc, "objects", list, scene_id)
    cats, attrs = vocabs if vocabs is not None else (None, None)
    objects = []
    for i, raw in enumerate(raw_objects):
        where = f"{scene_id}: objects[{i}]"
        if not isinstance(raw, Mapping):
            raise SchemaError(f"{where} must be an object")
        oid = _require(raw, "id", int, where)
        category = _require(raw, "category", str, where)
        attributes = _require(raw, "attributes", list, where)
        box_vals = _require(raw, "box", list, where)
        if cats is not None and category not in cats:
            raise UnknownCategory(f"{where}: unknown category {category!r}")
        for a in attributes:
            if not isinstance(a, str):
                raise SchemaError(f"{where}: attributes must be strings")
            if attrs is not None and a not in attrs:
                raise UnknownAttribute(f"{where}: unknown attribute {a!r}")
        box = BBox.from_seq(box_vals)
        objects.append(DetectedObject(oid, category, frozenset(attributes), box))
    time_step = doc.get("time_step", 0)
    if not isinstance(time_step, int) or isinstance(time_step, bool):
        raise SchemaError(f"{scene_id}: time_step must be an integer")
    return Scene(scene_id, width, height, tuple(objects), time_step)


def scene_to_dict(scene: Scene) -> Dict[str, Any]:
    doc: Dict[str, Any] = {
        "scene_id": scene.scene_id,
        "image_width": scene.image_width,
        "image_height": scene.image_height,
        "objects": [
            {
                "id": o.id,
                "category": o.category,
                "attributes": list(o.sorted_attributes()),
                "box": o.box.as_list(),
            }
            for o in scene.objects
        ],
    }
    if scene.time_step:
        doc["time_step"] = scene.time_step
    return doc


def parse_scene(path, vocabs: Tuple[Vocabulary, Vocabulary]) -> Scene:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return scene_from_dict(doc, vocabs)


def serialize_scene(scene: Scene) -> str:
    return json.dumps(scene_to_dict(scene), sort_keys=True)


def write_scene(scene: Scene, path) -> None:
    Path(path).write_text(serialize_scene(scene) + "\n", encoding="utf-8")


def center_distance(a: BBox, b: BBox) -> float:
    (ax, ay), (bx, by) = a.center, b.center
    return math.hypot(ax - bx, ay - by)


def is_nearby(a: BBox, b: BBox, factor: float) -> bool:
    return center_distance(a, b) <= factor * (a.diagonal + b.diagonal) / 2.0


def related_objects(scene: Scene, k: int, nearby_radius_factor: float = 1.0) -> Set[int]:
    """Ids of objects sharing k's category or lying near it (center distance within
    ``nearby_radius_factor`` times the mean diagonal of the two boxes)."""
    if nearby_radius_factor <= 0:
        raise ValueError("nearby_radius_factor must be positive")
    target = scene.get(k)
    out = set()
    for o in scene.objects:
        if o.id == k:
            continue
        if o.category == target.category or is_nearby(target.box, o.box, nearby_radius_factor):
            out.add(o.id)
    return out
