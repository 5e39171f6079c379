"""Seeded synthetic tabletop scenes standing in for detector output."""

from __future__ import annotations

import random
from pathlib import Path
from typing import List, Tuple

from .scene import BBox, DetectedObject, Scene, Vocabulary, write_scene

CATEGORIES = (
    "cup", "can", "bowl", "box", "ball", "bottle", "plate", "spoon",
    "book", "apple", "banana", "coffee mug", "tennis ball", "remote",
)
COLORS = ("red", "blue", "yellow", "green", "white", "black", "orange", "light blue")
MATERIALS = ("wooden", "metal", "plastic", "glass")
ATTRIBUTES = COLORS + MATERIALS


def default_vocabularies() -> Tuple[Vocabulary, Vocabulary]:
    return Vocabulary("category", CATEGORIES), Vocabulary("attribute", ATTRIBUTES)


def make_scene(
    rng: random.Random,
    scene_id: str,
    n_objects: Tuple[int, int] = (5, 12),
    image_size: Tuple[int, int] = (640, 480),
    min_same_category_pairs: int = 2,
) -> Scene:
    width, height = image_size
    k = rng.randint(*n_objects)
    paired = rng.sample(CATEGORIES, min_same_category_pairs)
    cats = [c for c in paired for _ in range(2)]
    while len(cats) < k:
        cats.append(rng.choice(CATEGORIES))
    rng.shuffle(cats)
    objects = []
    for i, cat in enumerate(cats):
        w = rng.randint(24, 120)
        h = rng.randint(24, 120)
        x1 = rng.randint(0, width - w)
        y1 = rng.randint(0, height - h)
        attrs = {rng.choice(COLORS)}
        if rng.random() < 0.4:
            attrs.add(rng.choice(MATERIALS))
        objects.append(DetectedObject(i, cat, frozenset(attrs), BBox(x1, y1, x1 + w, y1 + h)))
    return Scene(scene_id, width, height, tuple(objects))


def make_scenes(n: int, seed: int = 0, **kwargs) -> List[Scene]:
    rng = random.Random(seed)
    return [make_scene(rng, f"scene-{i:05d}", **kwargs) for i in range(n)]


def write_corpus(directory, n: int, seed: int = 0, **kwargs) -> List[Path]:
    """Write scenes plus the two vocabulary files; returns the scene paths in order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cats, attrs = default_vocabularies()
    (directory / "categories.txt").write_text("\n".join(cats.tokens) + "\n", encoding="utf-8")
    (directory / "attributes.txt").write_text("\n".join(attrs.tokens) + "\n", encoding="utf-8")
    paths = []
    for scene in make_scenes(n, seed, **kwargs):
        path = directory / f"{scene.scene_id}.json"
        write_scene(scene, path)
        paths.append(path)
    return paths
