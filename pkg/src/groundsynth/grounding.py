"""Instruction parsing and the lexical baseline grounder.

The parser inverts the expression templates: it strips the command phrase (and the
preposition for place instructions), then matches the remaining words against every
slot sequence. When several templates match, the most specific reading wins
(IV, then III, II, V, I). A bare category ("pick up the bowl") is accepted as the
lowest-priority reading even though no template produces it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from .errors import NoCandidate, Unparseable
from .instructions import (
    ANCHORED_FORMS,
    PICK,
    PLACE,
    PREFIX_FORMS,
    SUFFIX_FORMS,
    TEMPLATES,
    ZONE_PHRASES,
    CommandLexicon,
    ExpressionTemplate,
    shift_box,
)
from .relations import Expression, RelationConfig, SceneGeometry
from .scene import BBox, Scene, Vocabulary

PRIORITY = {"IV": 0, "III": 1, "II": 2, "V": 3, "I": 4, None: 5}
BARE = ExpressionTemplate("bare", ("c",))

Phrase = Tuple[str, ...]


@dataclass(frozen=True)
class GroundingQuery:
    scene: Scene
    instruction: str
    kind: str
    id: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in (PICK, PLACE):
            raise ValueError(f"unknown kind {self.kind!r}")
        if not isinstance(self.instruction, str):
            raise TypeError("instruction must be a string")


@dataclass(frozen=True)
class GroundingResult:
    box: BBox
    confidence: float
    resolved_object_id: Optional[int] = None
    flags: Tuple[str, ...] = ()


@dataclass(frozen=True)
class ParsedInstruction:
    kind: str
    verb_phrase: str
    preposition: Optional[str]
    expression: Expression
    template: ExpressionTemplate

    @property
    def template_id(self) -> Optional[str]:
        return None if self.template is BARE else self.template.template_id


def _phrase_table(items: Sequence[Tuple[str, str]]) -> Dict[str, List[Tuple[Phrase, str]]]:
    table: Dict[str, List[Tuple[Phrase, str]]] = {}
    for text, value in items:
        words = tuple(text.split())
        table.setdefault(words[0], []).append((words, value))
    for entries in table.values():
        entries.sort(key=lambda e: -len(e[0]))
    return table


class InstructionGrammar:
    def __init__(self, lexicon: CommandLexicon, categories: Vocabulary, attributes: Vocabulary):
        self.lexicon = lexicon
        self.verbs = sorted(
            [(tuple(v.split()), v, PICK) for v in lexicon.pick_terms]
            + [(tuple(v.split()), v, PLACE) for v in lexicon.place_terms],
            key=lambda e: -len(e[0]),
        )
        self.prepositions = sorted(
            [(tuple(p.split()), p) for p in lexicon.prepositions], key=lambda e: -len(e[0])
        )
        self.slots = {
            "a": _phrase_table([(t, t) for t in attributes]),
            "A": _phrase_table([(t, t) for t in attributes]),
            "c": _phrase_table([(t, t) for t in categories]),
            "C": _phrase_table([(t, t) for t in categories]),
            "b": _phrase_table([(p, z) for z, p in ZONE_PHRASES.items()]),
        }
        self.relation_tables = {
            "prefix": _phrase_table([(p, r) for r, p in PREFIX_FORMS.items()]),
            "suffix": _phrase_table([(p, r) for r, p in SUFFIX_FORMS.items()]),
            "anchored": _phrase_table([(p, r) for r, p in ANCHORED_FORMS.items()]),
        }

    def _match(self, words: Phrase, pos: int, seq: Sequence[str], tmpl: ExpressionTemplate) -> Iterator[Dict[str, str]]:
        if not seq:
            if pos == len(words):
                yield {}
            return
        slot, rest = seq[0], seq[1:]
        if slot == "A" and pos < len(words) and words[pos] == "the":
            # optional article before the anchor
            yield from self._match_slot(words, pos + 1, slot, rest, tmpl)
        yield from self._match_slot(words, pos, slot, rest, tmpl)

    def _match_slot(self, words, pos, slot, rest, tmpl) -> Iterator[Dict[str, str]]:
        if pos >= len(words):
            return
        table = self.relation_tables[tmpl.relation_position] if slot == "R" else self.slots[slot]
        for phrase, value in table.get(words[pos], ()):
            end = pos + len(phrase)
            if words[pos:end] != phrase:
                continue
            for tail in self._match(words, end, rest, tmpl):
                found = dict(tail)
                found[slot] = value
                yield found

    def parse_expression(self, words: Phrase) -> Tuple[Expression, ExpressionTemplate]:
        best = None
        for tmpl in TEMPLATES + (BARE,):
            match = next(self._match(words, 0, tmpl.slot_sequence, tmpl), None)
            if match is None:
                continue
            tid = None if tmpl is BARE else tmpl.template_id
            if best is None or PRIORITY[tid] < PRIORITY[best[2]]:
                best = (match, tmpl, tid)
        if best is None:
            raise Unparseable(f"no template matches {' '.join(words)!r}")
        match, tmpl, _ = best
        expr = Expression(
            category=match["c"],
            attribute=match.get("a"),
            relation=match.get("R"),
            anchor_attribute=match.get("A"),
            anchor_category=match.get("C"),
            zone=match.get("b"),
        )
        return expr, tmpl

    def parse(self, text: str) -> ParsedInstruction:
        words = tuple(re.sub(r"[.!?,;]+", " ", text.lower()).split())
        if not words:
            raise Unparseable("empty instruction")
        failure: Optional[Unparseable] = None
        for verb_words, verb, kind in self.verbs:
            if words[: len(verb_words)] != verb_words:
                continue
            rest = words[len(verb_words):]
            options: List[Tuple[Optional[str], Phrase]] = []
            if kind == PLACE:
                for prep_words, prep in self.prepositions:
                    if rest[: len(prep_words)] == prep_words:
                        options.append((prep, rest[len(prep_words):]))
            else:
                options.append((None, rest))
            for prep, body in options:
                if body[:1] == ("the",):
                    body = body[1:]
                try:
                    expr, tmpl = self.parse_expression(body)
                except Unparseable as exc:
                    failure = exc
                    continue
                return ParsedInstruction(kind, verb, prep, expr, tmpl)
        if failure is not None:
            raise failure
        raise Unparseable(f"no command phrase recognised in {text!r}")


@lru_cache(maxsize=32)
def _grammar(lexicon: CommandLexicon, categories: Vocabulary, attributes: Vocabulary) -> InstructionGrammar:
    return InstructionGrammar(lexicon, categories, attributes)


def parse_instruction(
    text: str, lexicon: CommandLexicon, vocabs: Tuple[Vocabulary, Vocabulary]
) -> ParsedInstruction:
    return _grammar(lexicon, vocabs[0], vocabs[1]).parse(text)


@dataclass(frozen=True)
class GrounderConfig:
    vocabs: Tuple[Vocabulary, Vocabulary]
    lexicon: CommandLexicon = field(default_factory=CommandLexicon)
    relation: RelationConfig = field(default_factory=RelationConfig)
    shift_extent: float = 1.0


def ground_lexical(query: GroundingQuery, config: GrounderConfig) -> GroundingResult:
    """Resolve the instruction against the detected objects by slot filtering.

    Objects of the named category are ranked by how many of the remaining slots they
    fail; the lowest id among the best-ranked wins and confidence is the reciprocal of
    the number of best-ranked objects.
    """
    if not query.instruction.strip():
        raise NoCandidate("no instruction given; the lexical grounder cannot predict unconditioned")
    parsed = parse_instruction(query.instruction, config.lexicon, config.vocabs)
    if parsed.kind != query.kind:
        raise Unparseable(f"instruction reads as {parsed.kind}, query asked for {query.kind}")
    scene = query.scene
    expr = parsed.expression
    candidates = [o for o in scene.objects if o.category == expr.category]
    if not candidates:
        raise NoCandidate(f"no {expr.category!r} in scene {scene.scene_id!r}")
    geo = SceneGeometry(scene, config.relation)
    scored = [(geo.unmatched_slots(o, expr), o.id) for o in candidates]
    best = min(s for s, _ in scored)
    tied = sorted(oid for s, oid in scored if s == best)
    chosen = scene.get(tied[0])
    flags: Tuple[str, ...] = () if best == 0 else ("partial-match",)
    box = chosen.box
    if query.kind == PLACE:
        box, clamped = shift_box(
            box, parsed.preposition, scene.size, config.shift_extent, config.relation.flip_depth
        )
        if clamped:
            flags += ("clamped",)
    return GroundingResult(box, 1.0 / len(tied), chosen.id, flags)
