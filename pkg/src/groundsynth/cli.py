"""Command-line entry point: ``groundsynth <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

from .config import load_config
from .errors import AdapterError, ConfigError, GroundSynthError, SceneError, VocabularyError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_ADAPTER = 4
EXIT_IO = 5

log = logging.getLogger("groundsynth")


def _checkpoints(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated steps, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config file (YAML or JSON)")
    common.add_argument("--seed", type=int, help="master seed, overrides the config")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for generation")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="groundsynth", description="Synthetic pick-and-place grounding data toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write instruction triplets for scenes")
    p.add_argument("--scenes", nargs="+", required=True, help="scene files or directories")
    p.add_argument("--out", required=True, help="output JSONL")

    p = sub.add_parser("stream", parents=[common], help="run (or resume) the buffered scene stream")
    p.add_argument("--scenes", nargs="+", help="scene files or directories (omit to resume)")
    p.add_argument("--out", required=True, help="stream state directory")
    p.add_argument("--checkpoints", type=_checkpoints, help="steps to export corpora at, e.g. 8,33,135,540")
    p.add_argument("--stop-after", type=int, help="process at most this many scenes, then stop")

    p = sub.add_parser("eval", parents=[common], help="precision of grounding predictions")
    p.add_argument("--gold", required=True, help="gold JSONL (queries or id/gold_box/predicted_box pairs)")
    p.add_argument("--scenes", nargs="*", default=[], help="scene files referenced by scene_id")
    p.add_argument("--predictions", help="JSONL of id/predicted_box")
    p.add_argument("--adapter", help="external grounder: a command, or tcp://host:port")
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--figure", action="store_true", help="also write an IoU histogram next to the report")

    p = sub.add_parser("analyze", parents=[common], help="box-size densities and distances")
    p.add_argument("--scenes", nargs="+", required=True)
    p.add_argument("--predictions", nargs="*", default=[], help="prediction JSONL files")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("validate", parents=[common], help="schema-check scene files and config")
    p.add_argument("--scenes", nargs="*", default=[])

    p = sub.add_parser("synth", parents=[common], help="write a seeded synthetic scene corpus")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--out", required=True)
    return ap


def _run(args) -> int:
    from . import pipeline, synthetic

    config = load_config(args.config).with_overrides(
        seed=args.seed,
        checkpoints=getattr(args, "checkpoints", None),
        adapter=getattr(args, "adapter", None),
        threshold=getattr(args, "threshold", None),
    )
    if args.command == "generate":
        summary = pipeline.run_generate(args.scenes, config, args.out, args.jobs)
        print(json.dumps(summary["totals"], sort_keys=True))
        if summary["failed"]:
            log.warning("%d scene files failed", len(summary["failed"]))
    elif args.command == "stream":
        logs = pipeline.run_stream(args.scenes, config, args.out, args.jobs, args.stop_after)
        for entry in logs:
            if "step" in entry:
                print(f"step {entry['step']:>5}  inserted={entry['inserted']}  "
                      f"evicted={len(entry['evicted'])}  size={entry['buffer_size']}")
    elif args.command == "eval":
        report = pipeline.run_eval(
            args.gold, config, args.out, args.scenes, args.predictions, figure=args.figure
        )
        print(f"n={report.n} precision@{report.threshold}={report.precision_at_threshold:.4f} "
              f"flagged={len(report.flagged)}")
    elif args.command == "analyze":
        summary = pipeline.run_analyze(args.scenes, args.predictions, config, args.out)
        for label, row in summary["distances"].items():
            print(label, " ".join(f"{k}={v:.4f}" for k, v in row.items()))
    elif args.command == "validate":
        vocabs = config.vocabularies()
        bad = 0
        for path, err in pipeline.validate_scenes(args.scenes, vocabs):
            print(f"{'ok  ' if err is None else 'FAIL'} {path}" + (f"  {err}" if err else ""))
            bad += err is not None
        if bad:
            return EXIT_PARSE
    elif args.command == "synth":
        paths = synthetic.write_corpus(args.out, args.n, config.seed)
        print(f"wrote {len(paths)} scenes to {args.out}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _run(args)
    except (ConfigError, VocabularyError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except SceneError as exc:
        log.error("parse error: %s", exc)
        return EXIT_PARSE
    except AdapterError as exc:
        log.error("adapter error: %s", exc)
        return EXIT_ADAPTER
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except GroundSynthError as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
