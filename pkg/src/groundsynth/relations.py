"""Spatial relation heuristic over detected boxes.

All comparisons use box centers. Pairwise relations need a margin in pixels so that
near-ties produce no relation at all; superlatives need the same margin over every
other member of the comparison class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from .scene import DetectedObject, Scene

SUPERLATIVES = ("leftmost", "rightmost", "frontmost", "behindmost")
PAIRWISE = ("left", "right", "in front", "in behind")
NEXT_TO = "next to"
RELATIONS = SUPERLATIVES + PAIRWISE + (NEXT_TO,)

SAME_CATEGORY = "sameCategory"
SAME_CATEGORY_AND_ATTRIBUTE = "sameCategoryAndAttribute"
NEARBY_OBJECT = "nearbyObject"
COMPARISON_CLASSES = (SAME_CATEGORY, SAME_CATEGORY_AND_ATTRIBUTE, NEARBY_OBJECT)

MIRROR = {
    "left": "right",
    "right": "left",
    "leftmost": "rightmost",
    "rightmost": "leftmost",
}

# 3x3 grid over the image, row-major from the top-left cell.
ZONES = (
    "top left", "top", "top right",
    "left", "center", "right",
    "bottom left", "bottom", "bottom right",
)


@dataclass(frozen=True)
class RelationConfig:
    margin_frac: float = 0.05
    margin_x: Optional[float] = None
    margin_y: Optional[float] = None
    nearby_factor: float = 1.0
    flip_depth: bool = False

    def __post_init__(self) -> None:
        if self.margin_frac <= 0:
            raise ValueError("margin_frac must be positive")
        for name in ("margin_x", "margin_y"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")
        if self.nearby_factor <= 0:
            raise ValueError("nearby_factor must be positive")

    def margins(self, scene: Scene) -> Tuple[float, float]:
        mx = self.margin_x if self.margin_x is not None else self.margin_frac * scene.image_width
        my = self.margin_y if self.margin_y is not None else self.margin_frac * scene.image_height
        return mx, my


@dataclass(frozen=True)
class RelationFeature:
    subject_id: int
    relation: str
    comparison_class: str
    anchor_id: Optional[int] = None
    # shared attribute defining the comparison class of a sameCategoryAndAttribute feature
    attribute: Optional[str] = None

    def __post_init__(self) -> None:
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")
        if self.comparison_class not in COMPARISON_CLASSES:
            raise ValueError(f"unknown comparison class {self.comparison_class!r}")
        if (self.anchor_id is not None) != (self.comparison_class == NEARBY_OBJECT):
            raise ValueError("anchor_id is required exactly for nearbyObject features")
        if self.anchor_id is not None and self.anchor_id == self.subject_id:
            raise ValueError("anchor must differ from subject")
        if self.relation in SUPERLATIVES and self.anchor_id is not None:
            raise ValueError("superlatives never carry an anchor")
        if (self.attribute is not None) != (self.comparison_class == SAME_CATEGORY_AND_ATTRIBUTE):
            raise ValueError("attribute is required exactly for sameCategoryAndAttribute features")


@dataclass(frozen=True)
class Expression:
    """Slot values of one referring expression.

    Which relation semantics apply follows from the filled slots: an anchor means the
    relation is measured against a nearby object, otherwise it is measured against the
    same-category objects (narrowed to those carrying ``attribute`` when it is set).
    """

    category: str
    attribute: Optional[str] = None
    relation: Optional[str] = None
    anchor_attribute: Optional[str] = None
    anchor_category: Optional[str] = None
    zone: Optional[str] = None

    def as_dict(self) -> Dict[str, Optional[str]]:
        return {
            "attribute": self.attribute,
            "category": self.category,
            "relation": self.relation,
            "anchor_attribute": self.anchor_attribute,
            "anchor_category": self.anchor_category,
            "zone": self.zone,
        }

    @classmethod
    def from_dict(cls, doc) -> "Expression":
        return cls(
            category=doc["category"],
            attribute=doc.get("attribute"),
            relation=doc.get("relation"),
            anchor_attribute=doc.get("anchor_attribute"),
            anchor_category=doc.get("anchor_category"),
            zone=doc.get("zone"),
        )


class SceneGeometry:
    """Per-scene cache of centers, distances and nearest neighbours."""

    def __init__(self, scene: Scene, config: RelationConfig = RelationConfig()):
        self.scene = scene
        self.config = config
        self.mx, self.my = config.margins(scene)
        self.centers = {o.id: o.box.center for o in scene.objects}
        self.diagonals = {o.id: o.box.diagonal for o in scene.objects}
        self._nearest: Dict[int, Optional[int]] = {}

    def distance(self, a: int, b: int) -> float:
        (ax, ay), (bx, by) = self.centers[a], self.centers[b]
        return math.hypot(ax - bx, ay - by)

    def nearby(self, a: int, b: int) -> bool:
        limit = self.config.nearby_factor * (self.diagonals[a] + self.diagonals[b]) / 2.0
        return self.distance(a, b) <= limit

    def nearest(self, a: int) -> Optional[int]:
        if a not in self._nearest:
            best = None
            for o in self.scene.objects:
                if o.id == a:
                    continue
                key = (self.distance(a, o.id), o.id)
                if best is None or key < best:
                    best = key
            self._nearest[a] = None if best is None else best[1]
        return self._nearest[a]

    def pairwise(self, relation: str, a: int, b: int) -> bool:
        """True iff ``a`` stands in ``relation`` to ``b`` by at least the margin."""
        (ax, ay), (bx, by) = self.centers[a], self.centers[b]
        dx = ax - bx
        dy = ay - by
        if self.config.flip_depth:
            dy = -dy
        if relation == "left":
            return dx <= -self.mx
        if relation == "right":
            return dx >= self.mx
        if relation == "in front":
            return dy >= self.my
        if relation == "in behind":
            return dy <= -self.my
        if relation == NEXT_TO:
            return self.nearest(a) == b and self.nearby(a, b)
        raise ValueError(f"not a pairwise relation: {relation!r}")

    def against_class(self, relation: str, a: int, others: Sequence[int]) -> bool:
        if not others:
            return False
        if relation in SUPERLATIVES:
            base = relation[: -len("most")]
            pair = {"left": "left", "right": "right", "front": "in front", "behind": "in behind"}[base]
            return all(self.pairwise(pair, a, o) for o in others)
        if relation in PAIRWISE:
            return any(self.pairwise(relation, a, o) for o in others)
        return False

    def zone(self, object_id: int) -> str:
        cx, cy = self.centers[object_id]
        col = min(int(3 * cx / self.scene.image_width), 2)
        row = min(int(3 * cy / self.scene.image_height), 2)
        return ZONES[3 * row + col]

    def same_category(self, obj: DetectedObject, attribute: Optional[str] = None) -> List[int]:
        return [
            o.id
            for o in self.scene.objects
            if o.id != obj.id
            and o.category == obj.category
            and (attribute is None or attribute in o.attributes)
        ]

    def relation_holds(self, obj: DetectedObject, expr: Expression) -> bool:
        if expr.relation is None:
            return True
        if expr.anchor_category is not None:
            for o in self.scene.objects:
                if o.id == obj.id or o.category != expr.anchor_category:
                    continue
                if expr.anchor_attribute is not None and expr.anchor_attribute not in o.attributes:
                    continue
                if self.nearby(obj.id, o.id) and self.pairwise(expr.relation, obj.id, o.id):
                    return True
            return False
        return self.against_class(expr.relation, obj.id, self.same_category(obj, expr.attribute))

    def unmatched_slots(self, obj: DetectedObject, expr: Expression) -> int:
        """Count of attribute/relation/zone slots ``obj`` fails; category must already match."""
        missed = 0
        if expr.attribute is not None and expr.attribute not in obj.attributes:
            missed += 1
        if expr.zone is not None and self.zone(obj.id) != expr.zone:
            missed += 1
        if not self.relation_holds(obj, expr):
            missed += 1
        return missed

    def satisfiers(self, expr: Expression) -> List[int]:
        return [
            o.id
            for o in self.scene.objects
            if o.category == expr.category and self.unmatched_slots(o, expr) == 0
        ]


def extract_relations(
    scene: Scene,
    k: int,
    config: RelationConfig = RelationConfig(),
    geometry: Optional[SceneGeometry] = None,
) -> List[RelationFeature]:
    obj = scene.get(k)
    geo = geometry if geometry is not None else SceneGeometry(scene, config)
    features: List[RelationFeature] = []

    same = geo.same_category(obj)
    for rel in SUPERLATIVES + PAIRWISE:
        if geo.against_class(rel, k, same):
            features.append(RelationFeature(k, rel, SAME_CATEGORY))

    for attr in obj.sorted_attributes():
        cls = geo.same_category(obj, attr)
        for rel in SUPERLATIVES + PAIRWISE:
            if geo.against_class(rel, k, cls):
                features.append(RelationFeature(k, rel, SAME_CATEGORY_AND_ATTRIBUTE, attribute=attr))

    anchors = sorted(o.id for o in scene.objects if o.id != k and geo.nearby(k, o.id))
    for anchor in anchors:
        for rel in PAIRWISE + (NEXT_TO,):
            if geo.pairwise(rel, k, anchor):
                features.append(RelationFeature(k, rel, NEARBY_OBJECT, anchor_id=anchor))
    return features


def is_discriminative(
    scene: Scene,
    k: int,
    expression: Expression,
    config: RelationConfig = RelationConfig(),
    geometry: Optional[SceneGeometry] = None,
) -> bool:
    """True iff object ``k`` is the only object in the scene matching ``expression``."""
    geo = geometry if geometry is not None else SceneGeometry(scene, config)
    return geo.satisfiers(expression) == [k]
