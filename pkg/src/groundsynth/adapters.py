"""Line-delimited JSON protocol for external grounding models.

Request:  {"id": str, "kind": "pick"|"place", "instruction": str, "scene": <scene>}
Response: {"id": str, "box": [x1, y1, x2, y2], "confidence": float}

One document per line, UTF-8. Responses are matched to requests by id.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import queue
import shlex
import socket
import subprocess
import threading
from typing import Any, Dict, Optional, Sequence, Union

from .errors import AdapterError, AdapterTimeout, MalformedResponse
from .grounding import GroundingQuery, GroundingResult
from .scene import BBox, scene_to_dict

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0
_EOF = object()


class ExternalAdapter:
    """Base class: owns a reader thread feeding response lines into a queue."""

    def __init__(self, timeout: float = DEFAULT_TIMEOUT):
        self.timeout = timeout
        self._lines: "queue.Queue[Any]" = queue.Queue()
        self._pending: Dict[str, Dict[str, Any]] = {}
        self._ids = itertools.count()
        self._lock = threading.Lock()
        self._reader: Optional[threading.Thread] = None

    # subclasses provide the byte streams
    def _readline(self) -> str:
        raise NotImplementedError

    def _write(self, line: str) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def _start_reader(self) -> None:
        def pump():
            try:
                while True:
                    line = self._readline()
                    if not line:
                        break
                    self._lines.put(line)
            except (OSError, ValueError):
                pass
            finally:
                self._lines.put(_EOF)

        self._reader = threading.Thread(target=pump, daemon=True)
        self._reader.start()

    def next_id(self) -> str:
        return f"req-{next(self._ids)}"

    def request(self, doc: Dict[str, Any], timeout: Optional[float] = None) -> Dict[str, Any]:
        """Send one request and block until the response with the same id arrives."""
        req_id = doc["id"]
        limit = self.timeout if timeout is None else timeout
        with self._lock:
            try:
                self._write(json.dumps(doc, separators=(",", ":")) + "\n")
            except (OSError, ValueError) as exc:
                raise AdapterError(f"cannot write to adapter: {exc}") from exc
            if req_id in self._pending:
                return self._pending.pop(req_id)
            while True:
                try:
                    line = self._lines.get(timeout=limit)
                except queue.Empty:
                    raise AdapterTimeout(f"no response to {req_id!r} within {limit} s") from None
                if line is _EOF:
                    self._lines.put(_EOF)
                    raise AdapterError("adapter closed its output stream")
                try:
                    resp = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise MalformedResponse(f"response is not JSON: {line[:80]!r}") from exc
                if not isinstance(resp, dict) or not isinstance(resp.get("id"), str):
                    raise MalformedResponse(f"response lacks a string id: {line[:80]!r}")
                if resp["id"] == req_id:
                    return resp
                self._pending[resp["id"]] = resp

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class SubprocessAdapter(ExternalAdapter):
    def __init__(self, command: Union[str, Sequence[str]], timeout: float = DEFAULT_TIMEOUT):
        super().__init__(timeout)
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self.proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise AdapterError(f"cannot start adapter {argv!r}: {exc}") from exc
        self._start_reader()

    def _readline(self) -> str:
        return self.proc.stdout.readline()

    def _write(self, line: str) -> None:
        self.proc.stdin.write(line)
        self.proc.stdin.flush()

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


class SocketAdapter(ExternalAdapter):
    def __init__(self, host: str, port: int, timeout: float = DEFAULT_TIMEOUT):
        super().__init__(timeout)
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise AdapterError(f"cannot connect to adapter at {host}:{port}: {exc}") from exc
        self.sock.settimeout(None)
        self._rfile = self.sock.makefile("r", encoding="utf-8", newline="\n")
        self._wfile = self.sock.makefile("w", encoding="utf-8", newline="\n")
        self._start_reader()

    def _readline(self) -> str:
        return self._rfile.readline()

    def _write(self, line: str) -> None:
        self._wfile.write(line)
        self._wfile.flush()

    def close(self) -> None:
        # shut down first so the reader thread's blocking readline returns
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        if self._reader is not None:
            self._reader.join(timeout=2)
        for f in (self._wfile, self._rfile):
            try:
                f.close()
            except OSError:
                pass
        self.sock.close()


def open_adapter(endpoint: str, timeout: float = DEFAULT_TIMEOUT) -> ExternalAdapter:
    """``tcp://host:port`` connects to a socket; anything else is run as a command."""
    if endpoint.startswith("tcp://"):
        host, _, port = endpoint[len("tcp://"):].rpartition(":")
        if not host or not port.isdigit():
            raise AdapterError(f"bad socket endpoint {endpoint!r}")
        return SocketAdapter(host, int(port), timeout)
    return SubprocessAdapter(endpoint, timeout)


def _clamp_box(values, width: int, height: int):
    x1, y1, x2, y2 = values
    c = (
        min(max(x1, 0.0), width),
        min(max(y1, 0.0), height),
        min(max(x2, 0.0), width),
        min(max(y2, 0.0), height),
    )
    return c, c != (x1, y1, x2, y2)


def ground_external(
    query: GroundingQuery, adapter: ExternalAdapter, timeout: Optional[float] = None
) -> GroundingResult:
    req_id = query.id if query.id is not None else adapter.next_id()
    resp = adapter.request(
        {
            "id": req_id,
            "kind": query.kind,
            "instruction": query.instruction,
            "scene": scene_to_dict(query.scene),
        },
        timeout,
    )
    box = resp.get("box")
    conf = resp.get("confidence")
    if (
        not isinstance(box, list)
        or len(box) != 4
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in box)
        or not all(math.isfinite(v) for v in box)
    ):
        raise MalformedResponse(f"response {req_id!r} has no valid box: {box!r}")
    if not isinstance(conf, (int, float)) or isinstance(conf, bool) or not math.isfinite(conf):
        raise MalformedResponse(f"response {req_id!r} has no valid confidence: {conf!r}")
    coords, clamped = _clamp_box([float(v) for v in box], query.scene.image_width, query.scene.image_height)
    if not (coords[0] < coords[2] and coords[1] < coords[3]):
        raise MalformedResponse(f"response {req_id!r} box is empty inside the image: {box!r}")
    flags = ("clamped",) if clamped else ()
    if clamped:
        log.warning("adapter box %s for %s clamped to image bounds", box, req_id)
    return GroundingResult(BBox(*coords), min(max(float(conf), 0.0), 1.0), None, flags)
