"""Bounded replay store with exponential forgetting.

A record born at step ``tau`` is forgotten by step ``t`` with probability

    p(tau, t) = min((exp(gamma * (t - tau)) - 1) / (exp(gamma * M) - 1), 1)

Deletion is drawn once per step with the conditional probability
``1 - S(tau, t) / S(tau, t - 1)`` where ``S = 1 - p``. The product of the per-step
survival factors telescopes to ``S(tau, t)``, so the marginal retention of every
record follows ``p`` exactly, and records of age ``M`` are always gone.
"""

from __future__ import annotations

import json
import math
import shutil
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import TimeStepError
from .instructions import InstructionTriplet
from .scene import Scene, scene_from_dict, scene_to_dict

MANIFEST = "manifest.json"
RECORDS_DIR = "records"


@dataclass(frozen=True)
class BufferConfig:
    capacity: int = 100
    gamma: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.capacity, int) or self.capacity < 1:
            raise ValueError("capacity must be a positive integer")
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ValueError("gamma must be a finite non-negative number")


@dataclass(frozen=True)
class BufferRecord:
    birth_step: int
    scene: Scene
    triplets: tuple = ()


@dataclass
class EvictionReport:
    step: int
    inserted: int
    evicted: List[int] = field(default_factory=list)
    size: int = 0


def forget_probability(tau: int, t: int, config: BufferConfig) -> float:
    if tau > t:
        raise TimeStepError(f"birth step {tau} lies after current step {t}")
    age = t - tau
    m = config.capacity
    if age >= m:
        return 1.0
    if config.gamma == 0:
        return age / m
    g = config.gamma
    if g * m > 700.0:
        # exp(g*M) would overflow; divide numerator and denominator by it
        return min(math.exp(g * (age - m)) * -math.expm1(-g * age) / -math.expm1(-g * m), 1.0)
    return min(math.expm1(g * age) / math.expm1(g * m), 1.0)


def survival(tau: int, t: int, config: BufferConfig) -> float:
    return 1.0 - forget_probability(tau, t, config)


def deletion_probability(tau: int, t: int, config: BufferConfig) -> float:
    """Probability of deleting at step ``t`` a record that survived up to ``t - 1``."""
    prev = survival(tau, t - 1, config)
    if prev <= 0.0:
        return 1.0
    return min(max(1.0 - survival(tau, t, config) / prev, 0.0), 1.0)


class VolatileBuffer:
    def __init__(self, config: BufferConfig = BufferConfig()):
        self.config = config
        self.current_step = 0
        self._records: Dict[int, BufferRecord] = {}
        self._rng = np.random.default_rng(config.seed)
        self._deletion_cache: Dict[int, float] = {}

    def __len__(self) -> int:
        return len(self._records)

    @property
    def birth_steps(self) -> List[int]:
        return sorted(self._records)

    def _deletion_for_age(self, age: int) -> float:
        # depends only on age; cache per buffer
        if age not in self._deletion_cache:
            self._deletion_cache[age] = deletion_probability(0, age, self.config)
        return self._deletion_cache[age]

    def advance(self, new_record: BufferRecord) -> EvictionReport:
        t = self.current_step + 1
        if new_record.birth_step != t:
            raise TimeStepError(
                f"expected a record born at step {t}, got {new_record.birth_step}"
            )
        births = self.birth_steps
        evicted = []
        if births:
            draws = self._rng.random(len(births))
            for tau, u in zip(births, draws):
                if u < self._deletion_for_age(t - tau):
                    evicted.append(tau)
                    del self._records[tau]
        self.current_step = t
        self._records[t] = new_record
        return EvictionReport(step=t, inserted=t, evicted=evicted, size=len(self._records))

    def snapshot(self) -> List[BufferRecord]:
        return [self._records[k] for k in sorted(self._records)]

    # persistence

    def state(self) -> dict:
        return {
            "current_step": self.current_step,
            "config": asdict(self.config),
            "retained": self.birth_steps,
            "rng_state": self._rng.bit_generator.state,
        }

    def save(self, directory) -> None:
        """Write manifest plus one scene/triplet pair per retained record."""
        directory = Path(directory)
        rec_dir = directory / RECORDS_DIR
        rec_dir.mkdir(parents=True, exist_ok=True)
        keep = set()
        for tau, rec in self._records.items():
            scene_path = rec_dir / f"{tau:08d}.scene.json"
            trip_path = rec_dir / f"{tau:08d}.jsonl"
            keep.update({scene_path.name, trip_path.name})
            if scene_path.exists() and trip_path.exists():
                continue
            scene_path.write_text(json.dumps(scene_to_dict(rec.scene), sort_keys=True) + "\n")
            with open(trip_path, "w", encoding="utf-8") as fh:
                for trip in rec.triplets:
                    fh.write(json.dumps(trip.to_dict(), sort_keys=True) + "\n")
        for stale in rec_dir.iterdir():
            if stale.name not in keep:
                stale.unlink()
        tmp = directory / (MANIFEST + ".tmp")
        tmp.write_text(json.dumps(self.state(), sort_keys=True, indent=1) + "\n")
        tmp.replace(directory / MANIFEST)

    @classmethod
    def load(cls, directory) -> "VolatileBuffer":
        directory = Path(directory)
        state = json.loads((directory / MANIFEST).read_text())
        buf = cls(BufferConfig(**state["config"]))
        buf.current_step = state["current_step"]
        buf._rng.bit_generator.state = state["rng_state"]
        rec_dir = directory / RECORDS_DIR
        for tau in state["retained"]:
            scene = scene_from_dict(json.loads((rec_dir / f"{tau:08d}.scene.json").read_text()))
            with open(rec_dir / f"{tau:08d}.jsonl", encoding="utf-8") as fh:
                trips = tuple(InstructionTriplet.from_dict(json.loads(l)) for l in fh if l.strip())
            buf._records[tau] = BufferRecord(tau, scene, trips)
        return buf

    @staticmethod
    def clear(directory) -> None:
        directory = Path(directory)
        if directory.exists():
            shutil.rmtree(directory)


def snapshot(buffer: VolatileBuffer) -> List[BufferRecord]:
    return buffer.snapshot()


def advance(buffer: VolatileBuffer, new_record: BufferRecord) -> EvictionReport:
    return buffer.advance(new_record)
