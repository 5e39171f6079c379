"""Test double for the external grounding protocol.

Run as ``python -m groundsynth.echo_adapter [--mode MODE]``. Modes:

  first      answer with the first object's box (default)
  fixed      answer with ``--box``
  oversize   answer with a box larger than the image
  silent     read requests, never answer
  malformed  answer with a line that is not JSON
"""

import argparse
import json
import sys
import time


def respond(request: dict, mode: str = "first", box=None) -> str:
    if mode == "malformed":
        return "this is not json"
    scene = request.get("scene") or {}
    if mode == "fixed":
        out = list(box)
    elif mode == "oversize":
        out = [-10, -10, scene.get("image_width", 1) + 10, scene.get("image_height", 1) + 10]
    else:
        out = scene["objects"][0]["box"]
    return json.dumps({"id": request.get("id"), "box": out, "confidence": 1.0})


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--mode", default="first",
                    choices=["first", "fixed", "oversize", "silent", "malformed"])
    ap.add_argument("--box", type=float, nargs=4, default=[0, 0, 1, 1])
    args = ap.parse_args(argv)
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        if args.mode == "silent":
            time.sleep(0.01)
            continue
        request = json.loads(line)
        sys.stdout.write(respond(request, args.mode, args.box) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
