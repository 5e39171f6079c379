"""Pipeline configuration document.

Example (YAML or JSON)::

    vocab:
      categories: vocab/categories.txt
      attributes: vocab/attributes.txt
    seed: 0
    relation: {margin_frac: 0.05, nearby_factor: 1.0, flip_depth: false}
    generation:
      pick_terms: [pick up the, grasp the, give me the]
      place_terms: [place it, put it]
      require_unique: true
      max_per_object: null
      shift_extent: 1.0
    buffer: {capacity: 100, gamma: 0.1}
    checkpoints: [8, 33, 135, 540]
    eval: {threshold: 0.5}
    analysis: {bandwidth_factor: 3.0}
    adapter: {endpoint: null, timeout: 30}

Relative paths resolve against the directory holding the config file. Without vocab
paths the built-in demo vocabularies are used.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml

from .buffer import BufferConfig
from .errors import ConfigError
from .grounding import GrounderConfig
from .instructions import PREPOSITIONS, CommandLexicon, GenerationConfig
from .relations import RelationConfig
from .scene import Vocabulary, load_vocabulary
from .synthetic import default_vocabularies

log = logging.getLogger(__name__)

DEFAULT_CHECKPOINTS = (8, 33, 135, 540)
_SECTIONS = {"vocab", "seed", "relation", "generation", "buffer", "checkpoints", "eval", "analysis", "adapter"}


@dataclass(frozen=True)
class PipelineConfig:
    category_vocab: Optional[Path] = None
    attribute_vocab: Optional[Path] = None
    seed: int = 0
    relation: RelationConfig = field(default_factory=RelationConfig)
    lexicon: CommandLexicon = field(default_factory=CommandLexicon)
    require_unique: bool = True
    max_per_object: Optional[int] = None
    shift_extent: float = 1.0
    capacity: int = 100
    gamma: float = 0.1
    checkpoints: Tuple[int, ...] = DEFAULT_CHECKPOINTS
    threshold: float = 0.5
    bandwidth_factor: float = 3.0
    adapter: Optional[str] = None
    adapter_timeout: float = 30.0

    def vocabularies(self) -> Tuple[Vocabulary, Vocabulary]:
        if self.category_vocab is None or self.attribute_vocab is None:
            return default_vocabularies()
        return (
            load_vocabulary(self.category_vocab, "category"),
            load_vocabulary(self.attribute_vocab, "attribute"),
        )

    def generation(self) -> GenerationConfig:
        return GenerationConfig(
            lexicon=self.lexicon,
            relation=self.relation,
            require_unique=self.require_unique,
            max_per_object=self.max_per_object,
            shift_extent=self.shift_extent,
            seed=self.seed,
        )

    def buffer(self) -> BufferConfig:
        return BufferConfig(self.capacity, self.gamma, self.seed)

    def grounder(self, vocabs: Tuple[Vocabulary, Vocabulary]) -> GrounderConfig:
        return GrounderConfig(vocabs, self.lexicon, self.relation, self.shift_extent)

    def with_overrides(self, **overrides: Any) -> "PipelineConfig":
        changes = {k: v for k, v in overrides.items() if v is not None}
        if "checkpoints" in changes:
            changes["checkpoints"] = tuple(sorted(set(changes["checkpoints"])))
        cfg = replace(self, **changes)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not 0 < self.threshold < 1:
            raise ConfigError("eval threshold must lie in (0, 1)")
        if self.bandwidth_factor <= 0:
            raise ConfigError("analysis bandwidth_factor must be positive")
        if any(c < 1 for c in self.checkpoints):
            raise ConfigError("checkpoints must be positive steps")
        if self.adapter_timeout <= 0:
            raise ConfigError("adapter timeout must be positive")
        try:
            self.generation()
            self.buffer()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for p in (self.category_vocab, self.attribute_vocab):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"vocabulary file not found: {p}")


def _section(doc: Dict[str, Any], name: str) -> Dict[str, Any]:
    sec = doc.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    return sec


def config_from_dict(doc: Dict[str, Any], base_dir: Path = Path(".")) -> PipelineConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    unknown = set(doc) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    vocab = _section(doc, "vocab")
    rel = _section(doc, "relation")
    gen = _section(doc, "generation")
    buf = _section(doc, "buffer")
    adapter = _section(doc, "adapter")

    def path(key: str) -> Optional[Path]:
        v = vocab.get(key)
        return None if v is None else (base_dir / v)

    try:
        relation = RelationConfig(**rel)
        lexicon = CommandLexicon(
            pick_terms=tuple(gen.get("pick_terms", CommandLexicon.pick_terms)),
            place_terms=tuple(gen.get("place_terms", CommandLexicon.place_terms)),
            prepositions=tuple(gen.get("prepositions", PREPOSITIONS)),
        )
        cfg = PipelineConfig(
            category_vocab=path("categories"),
            attribute_vocab=path("attributes"),
            seed=int(doc.get("seed", 0)),
            relation=relation,
            lexicon=lexicon,
            require_unique=bool(gen.get("require_unique", True)),
            max_per_object=gen.get("max_per_object"),
            shift_extent=float(gen.get("shift_extent", 1.0)),
            capacity=int(buf.get("capacity", 100)),
            gamma=float(buf.get("gamma", 0.1)),
            checkpoints=tuple(sorted(set(doc.get("checkpoints", DEFAULT_CHECKPOINTS)))),
            threshold=float(_section(doc, "eval").get("threshold", 0.5)),
            bandwidth_factor=float(_section(doc, "analysis").get("bandwidth_factor", 3.0)),
            adapter=adapter.get("endpoint"),
            adapter_timeout=float(adapter.get("timeout", 30.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    cfg.validate()
    return cfg


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(doc, path.parent)
