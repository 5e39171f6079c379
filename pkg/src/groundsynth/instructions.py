"""Template-based pick and place instruction synthesis."""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

from .errors import MissingSlot, UnshiftableBox
from .relations import (
    NEARBY_OBJECT,
    SAME_CATEGORY,
    SAME_CATEGORY_AND_ATTRIBUTE,
    ZONES,
    Expression,
    RelationConfig,
    RelationFeature,
    SceneGeometry,
    extract_relations,
)
from .scene import BBox, DetectedObject, Scene

PICK = "pick"
PLACE = "place"

# relation surface forms by position in the template
PREFIX_FORMS = {
    "leftmost": "leftmost",
    "rightmost": "rightmost",
    "frontmost": "frontmost",
    "behindmost": "behindmost",
    "left": "left",
    "right": "right",
}
SUFFIX_FORMS = {
    "left": "on the left",
    "right": "on the right",
    "in front": "in front",
    "in behind": "in behind",
}
ANCHORED_FORMS = {
    "left": "on the left of",
    "right": "on the right of",
    "in front": "in front of",
    "in behind": "in behind",
    "next to": "next to",
}
ZONE_PHRASES = {
    "top left": "on the top left of the table",
    "top": "on the top of the table",
    "top right": "on the top right of the table",
    "left": "on the left of the table",
    "center": "on the center",
    "right": "on the right of the table",
    "bottom left": "on the bottom left of the table",
    "bottom": "on the bottom of the table",
    "bottom right": "on the bottom right of the table",
}
assert set(ZONE_PHRASES) == set(ZONES)

PREPOSITIONS = ("in front of", "in behind", "on the left side of", "on the right side of")
_SHIFT_DIRECTION = {
    "in front of": (0, 1),
    "in behind": (0, -1),
    "on the left side of": (-1, 0),
    "on the right side of": (1, 0),
}


@dataclass(frozen=True)
class ExpressionTemplate:
    template_id: str
    slot_sequence: Tuple[str, ...]

    @property
    def relation_position(self) -> Optional[str]:
        seq = self.slot_sequence
        if "R" not in seq:
            return None
        if "A" in seq:
            return "anchored"
        return "prefix" if seq.index("R") < seq.index("c") else "suffix"


TEMPLATES = (
    ExpressionTemplate("I", ("a", "c")),
    ExpressionTemplate("II", ("R", "c")),
    ExpressionTemplate("II", ("c", "R")),
    ExpressionTemplate("III", ("R", "a", "c")),
    ExpressionTemplate("III", ("a", "c", "R")),
    ExpressionTemplate("IV", ("c", "R", "A", "C")),
    ExpressionTemplate("IV", ("a", "c", "R", "A", "C")),
    ExpressionTemplate("V", ("c", "b")),
    ExpressionTemplate("V", ("a", "c", "b")),
)
TEMPLATE_IDS = ("I", "II", "III", "IV", "V")


def template(template_id: str, slot_sequence: Sequence[str]) -> ExpressionTemplate:
    t = ExpressionTemplate(template_id, tuple(slot_sequence))
    if t not in TEMPLATES:
        raise ValueError(f"no template {template_id} with slots {tuple(slot_sequence)}")
    return t


@dataclass(frozen=True)
class CommandLexicon:
    pick_terms: Tuple[str, ...] = ("pick up the", "grasp the", "give me the")
    place_terms: Tuple[str, ...] = ("place it", "put it")
    prepositions: Tuple[str, ...] = PREPOSITIONS

    def __post_init__(self) -> None:
        for name in ("pick_terms", "place_terms", "prepositions"):
            vals = tuple(getattr(self, name))
            if not vals or any(not v.strip() for v in vals):
                raise ValueError(f"{name} must be a non-empty list of phrases")
            object.__setattr__(self, name, tuple(" ".join(v.lower().split()) for v in vals))
        unknown = set(self.prepositions) - set(PREPOSITIONS)
        if unknown:
            raise ValueError(f"unsupported prepositions: {sorted(unknown)}")


@dataclass(frozen=True)
class GenerationConfig:
    lexicon: CommandLexicon = field(default_factory=CommandLexicon)
    relation: RelationConfig = field(default_factory=RelationConfig)
    require_unique: bool = True
    max_per_object: Optional[int] = None
    shift_extent: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_per_object is not None and self.max_per_object < 1:
            raise ValueError("max_per_object must be positive")
        if self.shift_extent < 0:
            raise ValueError("shift_extent must be non-negative")


@dataclass(frozen=True)
class InstructionTriplet:
    scene_id: str
    object_id: int
    kind: str
    text: str
    target_box: BBox
    template_id: str
    expression: Expression
    preposition: Optional[str] = None
    clamped: bool = False

    def __post_init__(self) -> None:
        if self.kind == PICK and self.preposition is not None:
            raise ValueError("pick instructions carry no preposition")
        if self.kind == PLACE and self.preposition not in PREPOSITIONS:
            raise ValueError(f"place instruction needs a preposition, got {self.preposition!r}")
        if self.kind not in (PICK, PLACE):
            raise ValueError(f"unknown kind {self.kind!r}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scene_id": self.scene_id,
            "object_id": self.object_id,
            "kind": self.kind,
            "text": self.text,
            "target_box": self.target_box.as_list(),
            "template_id": self.template_id,
            "preposition": self.preposition,
            "clamped": self.clamped,
            "expression": self.expression.as_dict(),
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "InstructionTriplet":
        return cls(
            scene_id=doc["scene_id"],
            object_id=doc["object_id"],
            kind=doc["kind"],
            text=doc["text"],
            target_box=BBox.from_seq(doc["target_box"]),
            template_id=doc["template_id"],
            expression=Expression.from_dict(doc["expression"]),
            preposition=doc.get("preposition"),
            clamped=bool(doc.get("clamped", False)),
        )


FeatureChoice = Tuple[Optional[str], Optional[RelationFeature], Optional[str]]


def _expression_for(
    obj: DetectedObject, choice: FeatureChoice, tmpl: ExpressionTemplate, scene: Scene
) -> Expression:
    attribute, feature, zone = choice
    seq = tmpl.slot_sequence
    slots: Dict[str, Optional[str]] = {"category": obj.category}
    if "a" in seq:
        if attribute is None:
            raise MissingSlot(f"template {tmpl.template_id} {seq} needs an attribute")
        slots["attribute"] = attribute
    if "R" in seq:
        if feature is None:
            raise MissingSlot(f"template {tmpl.template_id} {seq} needs a relation")
        slots["relation"] = feature.relation
    if "A" in seq:
        anchor = scene.get(feature.anchor_id) if feature.anchor_id is not None else None
        if anchor is None:
            raise MissingSlot("anchored template needs a relation with an anchor object")
        attrs = anchor.sorted_attributes()
        if not attrs:
            raise MissingSlot(f"anchor {anchor.id} has no attribute to fill the anchor slot")
        slots["anchor_attribute"] = attrs[0]
        slots["anchor_category"] = anchor.category
    if "b" in seq:
        if zone is None:
            raise MissingSlot(f"template {tmpl.template_id} {seq} needs a location")
        if zone not in ZONE_PHRASES:
            raise ValueError(f"unknown zone {zone!r}")
        slots["zone"] = zone
    return Expression(**slots)


def render_expression(expr: Expression, tmpl: ExpressionTemplate, anchor_article: bool = False) -> str:
    """Fill the template slots in order; raises MissingSlot when a required value is absent."""
    words = []
    for slot in tmpl.slot_sequence:
        if slot == "a":
            value = expr.attribute
        elif slot == "c":
            value = expr.category
        elif slot == "R":
            pos = tmpl.relation_position
            forms = {"prefix": PREFIX_FORMS, "suffix": SUFFIX_FORMS, "anchored": ANCHORED_FORMS}[pos]
            value = forms.get(expr.relation)
            if value is None and expr.relation is not None:
                raise MissingSlot(f"relation {expr.relation!r} has no {pos} form")
        elif slot == "A":
            value = expr.anchor_attribute
            if value is not None and anchor_article:
                value = "the " + value
        elif slot == "C":
            value = expr.anchor_category
        else:
            value = ZONE_PHRASES.get(expr.zone) if expr.zone else None
        if value is None:
            raise MissingSlot(f"slot {{{slot}}} of template {tmpl.template_id} is empty")
        words.append(value)
    return " ".join(words).lower()


def realize_expression(
    obj: DetectedObject,
    feature_choice: FeatureChoice,
    tmpl: ExpressionTemplate,
    scene: Scene,
    anchor_article: bool = False,
) -> str:
    return render_expression(_expression_for(obj, feature_choice, tmpl, scene), tmpl, anchor_article)


def _anchored_expressions(
    obj: DetectedObject, feature: RelationFeature, scene: Scene
) -> Iterator[Tuple[Expression, ExpressionTemplate]]:
    anchor = scene.get(feature.anchor_id)
    for anchor_attr in anchor.sorted_attributes():
        base = dict(
            category=obj.category,
            relation=feature.relation,
            anchor_attribute=anchor_attr,
            anchor_category=anchor.category,
        )
        yield Expression(**base), TEMPLATES[5]
        for attr in obj.sorted_attributes():
            yield Expression(attribute=attr, **base), TEMPLATES[6]


def candidate_expressions(
    scene: Scene, k: int, geometry: SceneGeometry
) -> List[Tuple[Expression, ExpressionTemplate]]:
    """Every admissible (expression, template) for object ``k`` in template order I..V."""
    obj = scene.get(k)
    attrs = obj.sorted_attributes()
    features = extract_relations(scene, k, geometry.config, geometry)
    out: List[Tuple[Expression, ExpressionTemplate]] = []

    for a in attrs:
        out.append((Expression(obj.category, attribute=a), TEMPLATES[0]))
    for f in features:
        if f.comparison_class != SAME_CATEGORY:
            continue
        expr = Expression(obj.category, relation=f.relation)
        if f.relation in PREFIX_FORMS:
            out.append((expr, TEMPLATES[1]))
        if f.relation in SUFFIX_FORMS:
            out.append((expr, TEMPLATES[2]))
    for f in features:
        if f.comparison_class != SAME_CATEGORY_AND_ATTRIBUTE:
            continue
        expr = Expression(obj.category, attribute=f.attribute, relation=f.relation)
        if f.relation in PREFIX_FORMS:
            out.append((expr, TEMPLATES[3]))
        if f.relation in SUFFIX_FORMS:
            out.append((expr, TEMPLATES[4]))
    for f in features:
        if f.comparison_class == NEARBY_OBJECT:
            out.extend(_anchored_expressions(obj, f, scene))
    zone = geometry.zone(k)
    out.append((Expression(obj.category, zone=zone), TEMPLATES[7]))
    for a in attrs:
        out.append((Expression(obj.category, attribute=a, zone=zone), TEMPLATES[8]))
    return out


def _kept_expressions(
    scene: Scene, k: int, config: GenerationConfig, geometry: SceneGeometry
) -> List[Tuple[Expression, ExpressionTemplate, str]]:
    kept = []
    seen = set()
    for expr, tmpl in candidate_expressions(scene, k, geometry):
        text = render_expression(expr, tmpl, anchor_article=True)
        if text in seen:
            continue
        seen.add(text)
        if config.require_unique and geometry.satisfiers(expr) != [k]:
            continue
        kept.append((expr, tmpl, text))
    return kept


def object_rng(master_seed: int, scene_id: str, k: int, kind: str) -> random.Random:
    digest = hashlib.sha256(f"{master_seed}\x1f{scene_id}\x1f{k}\x1f{kind}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _cap(items: list, rng: random.Random, cap: Optional[int]) -> list:
    if cap is None or len(items) <= cap:
        return items
    keep = sorted(rng.sample(range(len(items)), cap))
    return [items[i] for i in keep]


def generate_pick_instructions(
    scene: Scene,
    k: int,
    config: GenerationConfig = GenerationConfig(),
    geometry: Optional[SceneGeometry] = None,
) -> List[InstructionTriplet]:
    geo = geometry if geometry is not None else SceneGeometry(scene, config.relation)
    obj = scene.get(k)
    rng = object_rng(config.seed, scene.scene_id, k, PICK)
    out = []
    for expr, tmpl, text in _kept_expressions(scene, k, config, geo):
        verb = rng.choice(config.lexicon.pick_terms)
        out.append(
            InstructionTriplet(
                scene_id=scene.scene_id,
                object_id=k,
                kind=PICK,
                text=f"{verb} {text}",
                target_box=obj.box,
                template_id=tmpl.template_id,
                expression=expr,
            )
        )
    return _cap(out, rng, config.max_per_object)


def shift_box(
    box: BBox,
    preposition: str,
    image: Tuple[float, float],
    extent_factor: float = 1.0,
    flip_depth: bool = False,
) -> Tuple[BBox, bool]:
    """Shifted box plus a flag telling whether it had to be pulled back inside the image."""
    if preposition not in _SHIFT_DIRECTION:
        raise ValueError(f"unknown preposition {preposition!r}")
    if extent_factor < 0:
        raise ValueError("extent_factor must be non-negative")
    width, height = image
    if not box.within(width, height):
        raise ValueError(f"box {box.as_list()} is outside the {width}x{height} image")
    sx, sy = _SHIFT_DIRECTION[preposition]
    if flip_depth:
        sy = -sy
    dx = sx * extent_factor * box.width
    dy = sy * extent_factor * box.height
    if dx == 0 and dy == 0:
        return box, False
    if (sx and box.width >= width) or (sy and box.height >= height):
        raise UnshiftableBox(f"box {box.as_list()} spans the image along the shift axis")
    x1 = min(max(box.x1 + dx, 0.0), width - box.width)
    y1 = min(max(box.y1 + dy, 0.0), height - box.height)
    clamped = x1 != box.x1 + dx or y1 != box.y1 + dy
    return BBox(x1, y1, x1 + box.width, y1 + box.height), clamped


def shift_box_for_preposition(
    box: BBox,
    preposition: str,
    image: Tuple[float, float],
    extent_factor: float = 1.0,
    flip_depth: bool = False,
) -> BBox:
    return shift_box(box, preposition, image, extent_factor, flip_depth)[0]


def generate_place_instructions(
    scene: Scene,
    k: int,
    config: GenerationConfig = GenerationConfig(),
    geometry: Optional[SceneGeometry] = None,
) -> List[InstructionTriplet]:
    geo = geometry if geometry is not None else SceneGeometry(scene, config.relation)
    obj = scene.get(k)
    rng = object_rng(config.seed, scene.scene_id, k, PLACE)
    shifted = {}
    for prep in config.lexicon.prepositions:
        try:
            shifted[prep] = shift_box(
                obj.box, prep, scene.size, config.shift_extent, config.relation.flip_depth
            )
        except UnshiftableBox:
            continue
    out = []
    for expr, tmpl, text in _kept_expressions(scene, k, config, geo):
        for prep in config.lexicon.prepositions:
            if prep not in shifted:
                continue
            box, clamped = shifted[prep]
            verb = rng.choice(config.lexicon.place_terms)
            out.append(
                InstructionTriplet(
                    scene_id=scene.scene_id,
                    object_id=k,
                    kind=PLACE,
                    text=f"{verb} {prep} the {text}",
                    target_box=box,
                    template_id=tmpl.template_id,
                    expression=expr,
                    preposition=prep,
                    clamped=clamped,
                )
            )
    return _cap(out, rng, config.max_per_object)


def generate_scene(
    scene: Scene, config: GenerationConfig = GenerationConfig()
) -> Tuple[List[InstructionTriplet], List[InstructionTriplet]]:
    """Pick and place triplets for every object of the scene, in object order."""
    geo = SceneGeometry(scene, config.relation)
    picks: List[InstructionTriplet] = []
    places: List[InstructionTriplet] = []
    for obj in scene.objects:
        picks.extend(generate_pick_instructions(scene, obj.id, config, geo))
        places.extend(generate_place_instructions(scene, obj.id, config, geo))
    return picks, places
