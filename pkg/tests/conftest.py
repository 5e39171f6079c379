import sys
from pathlib import Path

import pytest

from groundsynth.scene import BBox, DetectedObject, Scene, Vocabulary

CATEGORIES = ("cup", "can", "bowl", "box", "ball", "bottle", "plate", "coffee mug", "tennis ball")
ATTRIBUTES = ("red", "blue", "yellow", "green", "wooden", "metal", "light blue")


@pytest.fixture
def vocabs():
    return Vocabulary("category", CATEGORIES), Vocabulary("attribute", ATTRIBUTES)


@pytest.fixture
def vocab_files(tmp_path):
    cats = tmp_path / "categories.txt"
    attrs = tmp_path / "attributes.txt"
    cats.write_text("\n".join(CATEGORIES) + "\n")
    attrs.write_text("\n".join(ATTRIBUTES) + "\n")
    return cats, attrs


def obj(i, category, box, *attrs):
    return DetectedObject(i, category, frozenset(attrs), BBox(*box))


def scene(*objects, width=640, height=480, scene_id="s"):
    return Scene(scene_id, width, height, tuple(objects))


@pytest.fixture
def echo_cmd():
    return [sys.executable, "-m", "groundsynth.echo_adapter"]
