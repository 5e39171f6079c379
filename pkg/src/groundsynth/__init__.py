"""Synthetic pick-and-place instructions from object detections, a replay buffer with
exponential forgetting, and grounding evaluation tools."""

from .buffer import BufferConfig, BufferRecord, VolatileBuffer, forget_probability
from .evaluation import AreaSample, EvalPair, iou, kde_density, precision_at, wasserstein_1d
from .grounding import GroundingQuery, GroundingResult, ground_lexical, parse_instruction
from .instructions import (
    CommandLexicon,
    GenerationConfig,
    InstructionTriplet,
    generate_pick_instructions,
    generate_place_instructions,
    generate_scene,
    realize_expression,
    shift_box_for_preposition,
)
from .relations import Expression, RelationConfig, RelationFeature, extract_relations, is_discriminative
from .scene import BBox, DetectedObject, Scene, Vocabulary, load_vocabulary, parse_scene, related_objects

__version__ = "0.1.0"
