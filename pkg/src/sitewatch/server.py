"""Long-running mode: TCP line listeners feeding one processing thread."""
from __future__ import annotations

import logging
import socketserver
import threading
from typing import Callable, List, Optional

from .engine import Engine
from .ingestion import parse_weather_line
from .pipeline import MalformedEvent, QueueFull

log = logging.getLogger(__name__)


def event_reply(engine: Engine, line: str) -> str:
    """Protocol response for one event line."""
    try:
        event = engine.submit_line(line)
    except MalformedEvent as exc:
        log.warning("event dropped: %s", exc.reason)
        return f"err malformed {exc.reason}"
    except QueueFull:
        return "err backpressure"
    return f"ok {event.id}"


def weather_reply(engine: Engine, line: str) -> str:
    try:
        cell = parse_weather_line(line, engine.clock)
    except ValueError as exc:
        engine.note_weather_skipped()
        log.warning("weather line dropped: %s", exc)
        return f"err malformed {exc}"
    engine.add_weather([cell])
    return "ok"


class _LineHandler(socketserver.StreamRequestHandler):
    def handle(self):
        reply: Callable[[str], str] = self.server.reply
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace").strip()
            if not line or line.startswith("#"):
                continue
            self.wfile.write((reply(line) + "\n").encode("utf-8"))
            self.wfile.flush()


class LineServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, host: str, port: int, reply: Callable[[str], str]):
        super().__init__((host, port), _LineHandler)
        self.reply = reply


class Runtime:
    """Owns the listeners and the single processing thread around an Engine."""

    def __init__(self, engine: Engine, host: str = "127.0.0.1", batch_seconds: Optional[float] = None):
        self.engine = engine
        self.host = host
        self.batch_seconds = batch_seconds if batch_seconds is not None else engine.cfg.batch_seconds
        self.servers: List[LineServer] = []
        self._threads: List[threading.Thread] = []
        self._stop = threading.Event()
        self._stopped = False
        self._consumer: Optional[threading.Thread] = None

    @property
    def ports(self) -> List[int]:
        return [s.server_address[1] for s in self.servers]

    def start(self, event_port: Optional[int] = None, weather_port: Optional[int] = None):
        if event_port is not None:
            self._listen(event_port, lambda line: event_reply(self.engine, line))
        if weather_port is not None:
            self._listen(weather_port, lambda line: weather_reply(self.engine, line))
        self._consumer = threading.Thread(target=self._run, name="sitewatch-consumer", daemon=True)
        self._consumer.start()
        return self

    def _listen(self, port: int, reply):
        server = LineServer(self.host, port, reply)
        t = threading.Thread(target=server.serve_forever, name=f"sitewatch-listen-{port}", daemon=True)
        t.start()
        self.servers.append(server)
        self._threads.append(t)
        log.info("listening on %s:%d", self.host, server.server_address[1])

    def _run(self):
        while not self._stop.wait(self.batch_seconds):
            try:
                self.engine.step(close_idle=True)
            except Exception:
                log.exception("batch failed")

    def stop(self):
        """Stop intake, then drain: every accepted event reaches the sinks."""
        if self._stopped:
            return
        self._stopped = True
        for server in self.servers:
            server.shutdown()
            server.server_close()
        self._stop.set()
        if self._consumer is not None:
            self._consumer.join()
        self.engine.step()
        self.engine.finish()
