"""Batch generation, the lifelong stream loop, evaluation and analysis runs."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from .adapters import ExternalAdapter, ground_external, open_adapter
from .buffer import BufferRecord, VolatileBuffer
from .config import PipelineConfig
from .errors import AdapterError, GroundSynthError, SceneError
from .evaluation import (
    AreaSample,
    EvalPair,
    EvalReport,
    distance_table,
    kde_density,
    precision_at,
)
from .grounding import GroundingQuery, ground_lexical
from .instructions import InstructionTriplet, generate_scene
from .plotting import plot_densities, plot_iou_histogram
from .scene import BBox, Scene, Vocabulary, parse_scene, scene_from_dict

log = logging.getLogger(__name__)

STREAM_MANIFEST = "stream.json"
STEP_LOG = "steps.jsonl"


def expand_scene_paths(items: Iterable) -> List[Path]:
    """Files are kept in the given order; directories contribute their sorted ``*.json`` files."""
    out: List[Path] = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            out.extend(sorted(q for q in p.glob("*.json") if q.name != STREAM_MANIFEST))
        else:
            out.append(p)
    return out


def _dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


# Worker state for process pools; set once per worker by the initializer.
_WORKER: Dict[str, object] = {}


def _init_worker(config: PipelineConfig, vocabs: Tuple[Vocabulary, Vocabulary]) -> None:
    _WORKER["config"] = config
    _WORKER["vocabs"] = vocabs


def _generate_one(path: str):
    """Returns (path, scene, picks, places) or (path, error message)."""
    config: PipelineConfig = _WORKER["config"]
    try:
        scene = parse_scene(path, _WORKER["vocabs"])
    except (SceneError, OSError) as exc:
        return path, None, str(exc), None
    picks, places = generate_scene(scene, config.generation())
    return path, scene, picks, places


def _generate_many(
    paths: Sequence[Path], config: PipelineConfig, vocabs, jobs: int = 1
) -> Iterator[tuple]:
    """Yields generation results in input order regardless of ``jobs``."""
    items = [str(p) for p in paths]
    if jobs <= 1 or len(items) < 2:
        _init_worker(config, vocabs)
        for item in items:
            yield _generate_one(item)
        return
    with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(config, vocabs)) as pool:
        yield from pool.map(_generate_one, items, chunksize=max(1, len(items) // (4 * jobs)))


def run_generate(scene_paths: Sequence, config: PipelineConfig, out_path, jobs: int = 1) -> dict:
    paths = expand_scene_paths(scene_paths)
    vocabs = config.vocabularies()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    per_scene = []
    failed = []
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for path, scene, picks, places in _generate_many(paths, config, vocabs, jobs):
            if scene is None:
                log.error("skipping %s: %s", path, picks)
                failed.append({"path": path, "error": picks})
                continue
            counts = {o.id: {"pick": 0, "place": 0} for o in scene.objects}
            for trip in list(picks) + list(places):
                fh.write(_dumps(trip.to_dict()) + "\n")
                counts[trip.object_id][trip.kind] += 1
            per_scene.append(
                {
                    "scene_id": scene.scene_id,
                    "pick": len(picks),
                    "place": len(places),
                    "objects": [{"id": k, **v} for k, v in counts.items()],
                }
            )
    if paths and not per_scene:
        raise SceneError(f"all {len(paths)} scene files failed to parse")
    return {
        "scenes": per_scene,
        "failed": failed,
        "totals": {
            "scenes": len(per_scene),
            "pick": sum(s["pick"] for s in per_scene),
            "place": sum(s["place"] for s in per_scene),
        },
    }


@dataclass
class StreamManifest:
    scenes: List[str]
    position: int = 0
    buffer_dir: str = "buffer"

    def __post_init__(self) -> None:
        if not 0 <= self.position <= len(self.scenes):
            raise ValueError("stream position outside the scene list")

    def save(self, directory: Path) -> None:
        tmp = directory / (STREAM_MANIFEST + ".tmp")
        tmp.write_text(json.dumps(asdict(self), indent=1) + "\n", encoding="utf-8")
        tmp.replace(directory / STREAM_MANIFEST)

    @classmethod
    def load(cls, directory: Path) -> "StreamManifest":
        return cls(**json.loads((directory / STREAM_MANIFEST).read_text(encoding="utf-8")))


def export_corpus(buffer: VolatileBuffer, path: Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in buffer.snapshot():
            for trip in rec.triplets:
                fh.write(_dumps(trip.to_dict()) + "\n")
                n += 1
    return n


def run_stream(
    scene_paths: Optional[Sequence],
    config: PipelineConfig,
    out_dir,
    jobs: int = 1,
    stop_after: Optional[int] = None,
) -> List[dict]:
    """Feed scenes one step at a time through generation and the buffer.

    State lives in ``out_dir``: an existing stream manifest there is resumed, in which
    case ``scene_paths`` may be omitted (when given it must match the manifest).
    ``stop_after`` processes at most that many scenes, then returns with state saved.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus_dir = out_dir / "corpus"
    if (out_dir / STREAM_MANIFEST).exists():
        manifest = StreamManifest.load(out_dir)
        if scene_paths:
            given = [str(p) for p in expand_scene_paths(scene_paths)]
            if given != manifest.scenes:
                raise GroundSynthError(f"{out_dir} holds a stream over different scenes")
        buffer = VolatileBuffer.load(out_dir / manifest.buffer_dir)
        log.info("resuming stream at position %d, step %d", manifest.position, buffer.current_step)
    else:
        manifest = StreamManifest([str(p) for p in expand_scene_paths(scene_paths or [])])
        buffer = VolatileBuffer(config.buffer())
        (out_dir / STEP_LOG).write_text("", encoding="utf-8")
    buffer_dir = out_dir / manifest.buffer_dir
    vocabs = config.vocabularies()
    checkpoints = set(config.checkpoints)

    todo = manifest.scenes[manifest.position:]
    if stop_after is not None:
        todo = todo[:stop_after]
    logs = []
    with open(out_dir / STEP_LOG, "a", encoding="utf-8", newline="\n") as log_fh:
        for path, scene, picks, places in _generate_many(todo, config, vocabs, jobs):
            manifest.position += 1
            if scene is None:
                log.error("skipping %s: %s", path, picks)
                entry = {"path": path, "skipped": True, "error": picks}
            else:
                t = buffer.current_step + 1
                record = BufferRecord(t, scene.at_step(t), tuple(picks) + tuple(places))
                report = buffer.advance(record)
                entry = {
                    "step": t,
                    "scene_id": scene.scene_id,
                    "inserted": report.inserted,
                    "evicted": report.evicted,
                    "buffer_size": report.size,
                    "pick": len(picks),
                    "place": len(places),
                }
                if t in checkpoints:
                    corpus_dir.mkdir(exist_ok=True)
                    entry["corpus"] = export_corpus(buffer, corpus_dir / f"step_{t:05d}.jsonl")
                buffer.save(buffer_dir)
            log_fh.write(_dumps(entry) + "\n")
            log_fh.flush()
            manifest.save(out_dir)
            logs.append(entry)
    if not (out_dir / STREAM_MANIFEST).exists():
        buffer.save(buffer_dir)
        manifest.save(out_dir)
    return logs


def _read_jsonl(path) -> List[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise SceneError(f"{path}:{i + 1}: invalid JSON ({exc})") from exc
    return out


def load_scene_index(scene_paths: Sequence, vocabs) -> Dict[str, Scene]:
    index = {}
    for p in expand_scene_paths(scene_paths):
        scene = parse_scene(p, vocabs)
        index[scene.scene_id] = scene
    return index


def _resolve_scene(rec: dict, scenes: Dict[str, Scene], vocabs) -> Scene:
    if "scene" in rec:
        return scene_from_dict(rec["scene"], vocabs)
    sid = rec.get("scene_id")
    if sid not in scenes:
        raise SceneError(f"unknown scene {sid!r}; pass its file with --scenes")
    return scenes[sid]


def run_eval(
    gold_path,
    config: PipelineConfig,
    out_path=None,
    scene_paths: Sequence = (),
    predictions_path=None,
    adapter: Optional[ExternalAdapter] = None,
    figure: bool = False,
) -> EvalReport:
    """Score predictions against gold boxes.

    Gold records either carry ``predicted_box`` already, or are queries
    (``instruction``/``text``, ``kind``, ``gold_box``/``target_box``, scene inline or by
    ``scene_id``). Queries are answered from ``predictions_path`` when given, otherwise
    by ``adapter``, otherwise by the lexical grounder. Failed items score IoU 0 and are
    listed under ``flagged``.
    """
    records = _read_jsonl(gold_path)
    vocabs = config.vocabularies()
    scenes = load_scene_index(scene_paths, vocabs) if scene_paths else {}
    predictions = None
    if predictions_path is not None:
        predictions = {str(r["id"]): r for r in _read_jsonl(predictions_path)}
    own_adapter = False
    if adapter is None and predictions is None and config.adapter:
        adapter = open_adapter(config.adapter, config.adapter_timeout)
        own_adapter = True
    grounder = config.grounder(vocabs)
    pairs: List[EvalPair] = []
    flagged: Dict[str, str] = {}
    try:
        for i, rec in enumerate(records):
            rid = str(rec.get("id", i))
            gold = BBox.from_seq(rec["gold_box"] if "gold_box" in rec else rec["target_box"])
            if "predicted_box" in rec:
                pairs.append(EvalPair(rid, gold, BBox.from_seq(rec["predicted_box"])))
                continue
            if predictions is not None:
                pred = predictions.get(rid)
                if pred is None:
                    flagged[rid] = "MissingPrediction"
                    pairs.append(EvalPair(rid, gold, None))
                else:
                    pairs.append(EvalPair(rid, gold, BBox.from_seq(pred.get("predicted_box", pred.get("box")))))
                continue
            scene = _resolve_scene(rec, scenes, vocabs)
            query = GroundingQuery(scene, rec.get("instruction", rec.get("text", "")), rec["kind"], rid)
            try:
                if adapter is not None:
                    result = ground_external(query, adapter)
                else:
                    result = ground_lexical(query, grounder)
            except (AdapterError, GroundSynthError) as exc:
                flagged[rid] = type(exc).__name__
                pairs.append(EvalPair(rid, gold, None))
                continue
            if "clamped" in result.flags:
                flagged[rid] = "clamped"
            pairs.append(EvalPair(rid, gold, result.box))
    finally:
        if own_adapter:
            adapter.close()
    report = precision_at(pairs, config.threshold, flagged)
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
        if figure:
            plot_iou_histogram([v for _, v in report.ious], report.threshold, out_path.with_suffix(".png"))
    return report


def _prediction_sample(path: Path, scenes: Dict[str, Scene]) -> AreaSample:
    triples = []
    for rec in _read_jsonl(path):
        box = BBox.from_seq(rec.get("predicted_box", rec.get("box")))
        if "image_width" in rec and "image_height" in rec:
            w, h = rec["image_width"], rec["image_height"]
        elif rec.get("scene_id") in scenes:
            w, h = scenes[rec["scene_id"]].size
        else:
            raise SceneError(f"{path}: cannot find image size for record {rec.get('id')!r}")
        triples.append((box, w, h))
    return AreaSample.from_boxes(triples, path.stem)


def run_analyze(
    scene_paths: Sequence,
    prediction_paths: Sequence,
    config: PipelineConfig,
    out_dir,
    reference_label: str = "all",
) -> dict:
    """Densities of box sizes (percent of image area) for every object in the scenes and
    for each prediction file, plus the pairwise Wasserstein distance table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vocabs = config.vocabularies()
    scenes = load_scene_index(scene_paths, vocabs)
    if not scenes:
        raise SceneError("analysis needs at least one scene")
    samples = [
        AreaSample.from_boxes(
            ((o.box, s.image_width, s.image_height) for s in scenes.values() for o in s.objects),
            reference_label,
        )
    ]
    for p in prediction_paths:
        sample = _prediction_sample(Path(p), scenes)
        if not sample.values:
            log.warning("prediction file %s is empty; skipped", p)
            continue
        samples.append(sample)

    hi = max(max(s.values) for s in samples)
    grid = (0.0, hi * 1.25 + 1.0, 512)
    curves = []
    for s in samples:
        if len(s.values) < 2:
            log.warning("sample %s has fewer than two boxes; no density", s.label)
            continue
        curve = kde_density(s, config.bandwidth_factor, grid)
        curves.append(curve)
        with open(out_dir / f"density_{s.label}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["grid", "value"])
            for x, y in zip(curve.grid, curve.values):
                w.writerow([repr(float(x)), repr(float(y))])

    labels = [s.label for s in samples]
    table = distance_table(samples)
    with open(out_dir / "distances.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + labels)
        for label, row in zip(labels, table):
            w.writerow([label] + [repr(v) for v in row])
    to_ref = {label: table[i][0] for i, label in enumerate(labels)}
    figure = plot_densities(curves, out_dir / "densities.png", reference_label, to_ref)
    summary = {
        "labels": labels,
        "sizes": {s.label: len(s.values) for s in samples},
        "distances": {a: dict(zip(labels, row)) for a, row in zip(labels, table)},
        "figure": figure.name,
    }
    (out_dir / "analysis.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return summary


def validate_scenes(scene_paths: Sequence, vocabs) -> List[Tuple[str, Optional[str]]]:
    results = []
    for p in expand_scene_paths(scene_paths):
        try:
            parse_scene(p, vocabs)
            results.append((str(p), None))
        except (SceneError, OSError) as exc:
            results.append((str(p), f"{type(exc).__name__}: {exc}"))
    return results
