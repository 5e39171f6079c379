import json
import logging

import pytest

from conftest import obj, scene
from groundsynth.errors import (
    BoxOutOfBounds,
    DegenerateBox,
    DuplicateObjectId,
    EmptyVocabulary,
    SchemaError,
    UnknownAttribute,
    UnknownCategory,
    UnknownObject,
)
from groundsynth.scene import (
    BBox,
    load_vocabulary,
    parse_scene,
    related_objects,
    scene_from_dict,
    serialize_scene,
)
from groundsynth.synthetic import default_vocabularies, make_scenes


def test_load_vocabulary_reads_tokens_in_order(tmp_path):
    p = tmp_path / "v.txt"
    p.write_text("cup\nball\nbox\n")
    v = load_vocabulary(p, "category")
    assert v.kind == "category"
    assert v.tokens == ("cup", "ball", "box")


def test_load_vocabulary_dedupes_case_insensitively(tmp_path, caplog):
    p = tmp_path / "v.txt"
    p.write_text("Cup\ncup\n")
    with caplog.at_level(logging.WARNING):
        v = load_vocabulary(p, "category")
    assert v.tokens == ("cup",)
    assert "duplicate" in caplog.text


def test_load_vocabulary_empty_and_missing(tmp_path):
    p = tmp_path / "v.txt"
    p.write_text("\n\n")
    with pytest.raises(EmptyVocabulary):
        load_vocabulary(p, "attribute")
    with pytest.raises(FileNotFoundError):
        load_vocabulary(tmp_path / "nope.txt", "attribute")


def _doc(**over):
    doc = {
        "scene_id": "kitchen-1",
        "image_width": 640,
        "image_height": 480,
        "objects": [
            {"id": 0, "category": "cup", "attributes": ["red"], "box": [10, 10, 50, 60]},
            {"id": 1, "category": "bowl", "attributes": [], "box": [100, 100, 200, 180]},
        ],
    }
    doc.update(over)
    return doc


def _write(tmp_path, doc):
    p = tmp_path / "scene.json"
    p.write_text(json.dumps(doc))
    return p


def test_parse_scene_well_formed(tmp_path, vocabs):
    s = parse_scene(_write(tmp_path, _doc()), vocabs)
    assert len(s.objects) == 2
    assert s.get(0).attributes == {"red"}
    assert s.get(1).box == BBox(100, 100, 200, 180)


def test_parse_scene_degenerate_box(tmp_path, vocabs):
    doc = _doc()
    doc["objects"][0]["box"] = [10, 10, 10, 20]
    with pytest.raises(DegenerateBox):
        parse_scene(_write(tmp_path, doc), vocabs)


def test_parse_scene_unknown_tokens(tmp_path, vocabs):
    doc = _doc()
    doc["objects"][0]["category"] = "flibber"
    with pytest.raises(UnknownCategory):
        parse_scene(_write(tmp_path, doc), vocabs)
    doc = _doc()
    doc["objects"][0]["attributes"] = ["sparkly"]
    with pytest.raises(UnknownAttribute):
        parse_scene(_write(tmp_path, doc), vocabs)


@pytest.mark.parametrize(
    "mutate, exc",
    [
        (lambda d: d["objects"][0].update(box=[600, 400, 700, 470]), BoxOutOfBounds),
        (lambda d: d["objects"][1].update(id=0), DuplicateObjectId),
        (lambda d: d.pop("image_width"), SchemaError),
        (lambda d: d.update(objects=[]), SchemaError),
        (lambda d: d["objects"][0].update(box=[1, 2, 3]), SchemaError),
        (lambda d: d["objects"][0].update(box=[1, 2, "x", 4]), SchemaError),
        (lambda d: d.update(image_width="640"), SchemaError),
    ],
)
def test_parse_scene_schema_violations(tmp_path, vocabs, mutate, exc):
    doc = _doc()
    mutate(doc)
    with pytest.raises(exc):
        parse_scene(_write(tmp_path, doc), vocabs)


def test_parse_scene_invalid_json(tmp_path, vocabs):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(SchemaError):
        parse_scene(p, vocabs)


def test_serialize_round_trip_is_identity(tmp_path):
    vocabs = default_vocabularies()
    for s in make_scenes(30, seed=3):
        p = tmp_path / "s.json"
        p.write_text(serialize_scene(s))
        back = parse_scene(p, vocabs)
        assert back == s
        assert serialize_scene(back) == serialize_scene(s)


def test_related_objects_same_category_far_apart():
    s = scene(obj(0, "cup", (0, 0, 20, 20)), obj(1, "cup", (600, 440, 620, 460)))
    assert related_objects(s, 0) == {1}
    assert related_objects(s, 1) == {0}


def test_related_objects_single_object():
    assert related_objects(scene(obj(0, "bowl", (0, 0, 20, 20))), 0) == set()


def test_related_objects_nearby_rule():
    # 30x40 boxes have a 50 px diagonal; centers (100,100) and (130,100) are 30 apart
    a = obj(0, "cup", (85, 80, 115, 120))
    b = obj(1, "ball", (115, 80, 145, 120))
    far = obj(2, "box", (300, 300, 330, 340))
    s = scene(a, b, far)
    assert a.box.diagonal == 50 and a.box.center == (100, 100) and b.box.center == (130, 100)
    assert related_objects(s, 0, 1.0) == {1}
    assert related_objects(s, 0, 0.5) == set()


def test_related_objects_unknown_id():
    with pytest.raises(UnknownObject):
        related_objects(scene(obj(0, "cup", (0, 0, 5, 5))), 7)


def test_scene_objects_not_mutated():
    s = make_scenes(1, seed=1)[0]
    before = serialize_scene(s)
    for o in s.objects:
        related_objects(s, o.id)
    assert serialize_scene(s) == before


def test_scene_from_dict_without_vocab_check():
    doc = _doc()
    doc["objects"][0]["category"] = "flibber"
    assert scene_from_dict(doc).get(0).category == "flibber"
