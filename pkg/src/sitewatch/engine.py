"""Process wiring: knowledge loading, one-shot checks, and the batch engine."""
from __future__ import annotations

import logging
import re
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .config import ConfigError, EngineConfig
from .decision import (
    ConfidenceCheck,
    CoverageRule,
    RecordError,
    StakeholderProfile,
    TriggeredReaction,
    evaluate_rule,
    parse_profiles,
    parse_rules,
    resolve_assignments,
)
from .ingestion import WeatherCell, cell_to_invariant, parse_weather_feed, tick_from_wall_clock
from .invariant import Invariant, InvariantSyntaxError, ArityError, parse_model
from .notification import (
    CommandLineError,
    DeviceBinding,
    DeviceRegistry,
    bind_devices,
    parse_registry,
    render_xml,
)
from .pipeline import (
    INCIDENT_CATEGORIES,
    CoalescedEvent,
    Coalescer,
    DispatchContext,
    EventQueue,
    EventRecord,
    HandlerRegistry,
    IdSequencer,
    MalformedEvent,
    QueueFull,
    dispatch,
    dispatch_order,
    incident_for,
    parse_event_line,
)
from .reasoning import SpatialSnapshot, UnsupportedForm, extract_snapshot

log = logging.getLogger(__name__)

BROADCAST = "broadcast"


class ModelError(ValueError):
    def __init__(self, path, lineno: int, detail: str):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {detail}")


@dataclass(frozen=True)
class Knowledge:
    """Immutable model/rule/profile/registry snapshot; swapped whole, never edited."""

    model: Tuple[Invariant, ...] = ()
    sources: Tuple[Tuple[str, int], ...] = ()
    rules: Tuple[CoverageRule, ...] = ()
    profiles: Tuple[StakeholderProfile, ...] = ()
    registry: DeviceRegistry = field(default_factory=DeviceRegistry.single)

    def snapshot(self, t: int, extra: Sequence[Invariant] = ()) -> SpatialSnapshot:
        try:
            return extract_snapshot(list(self.model) + list(extra), t)
        except UnsupportedForm as exc:
            if exc.term_index < len(self.sources):
                path, lineno = self.sources[exc.term_index]
                raise ModelError(path, lineno, exc.detail) from None
            raise

    def profile(self, pid: str) -> Optional[StakeholderProfile]:
        return next((p for p in self.profiles if p.id == pid), None)


def _read(path: Path, what: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc.strerror}") from None


def load_knowledge(cfg: EngineConfig) -> Knowledge:
    model, sources = [], []
    for path in cfg.model_files:
        try:
            for lineno, term in parse_model(_read(path, "model file")):
                model.append(term)
                sources.append((str(path), lineno))
        except (InvariantSyntaxError, ArityError) as exc:
            lineno = _failing_line(_read(path, "model file"))
            raise ModelError(path, lineno, str(exc)) from None
    try:
        rules = parse_rules(_read(cfg.rule_file, "rule file"))
    except RecordError as exc:
        raise ConfigError(f"{cfg.rule_file}: {exc}") from None
    profiles: List[StakeholderProfile] = []
    if cfg.profile_file is not None:
        try:
            profiles = parse_profiles(_read(cfg.profile_file, "profile file"))
        except RecordError as exc:
            raise ConfigError(f"{cfg.profile_file}: {exc}") from None
    registry = DeviceRegistry.single()
    if cfg.registry_file is not None:
        try:
            registry = parse_registry(_read(cfg.registry_file, "registry file"))
        except (CommandLineError, ValueError) as exc:
            raise ConfigError(f"{cfg.registry_file}: {exc}") from None
    known = {p.id for p in profiles}
    for rule in rules:
        missing = [n for n in rule.notify if n not in known]
        if missing:
            raise ConfigError(f"rule {rule.id} notifies unknown profiles {missing}")
    knowledge = Knowledge(tuple(model), tuple(sources), tuple(rules), tuple(profiles), registry)
    knowledge.snapshot(0)  # surfaces unsupported terms with file and line at load time
    return knowledge


def _failing_line(text: str) -> int:
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            parse_model(stripped)
        except ValueError:
            return lineno
    return 0


def reaction_bindings(reaction: TriggeredReaction, knowledge: Knowledge) -> List[DeviceBinding]:
    """Template commands with a fixed device keep it; the rest go to notified profiles."""
    targets = [knowledge.profile(pid) for pid in reaction.notify]
    out: List[DeviceBinding] = []
    for b in reaction.bindings:
        if b.device is not None or not targets:
            out.append(b)
        else:
            out.extend(bind_devices([b.command], targets, knowledge.registry))
    return out


def check(knowledge: Knowledge, at_tick: int) -> Tuple[List[TriggeredReaction], List[DeviceBinding]]:
    snapshot = knowledge.snapshot(at_tick)
    fired = [r for r in (evaluate_rule(rule, snapshot) for rule in knowledge.rules) if r is not None]
    bindings = [b for r in fired for b in reaction_bindings(r, knowledge)]
    return fired, bindings


# -- output sinks --------------------------------------------------------------

_UNSAFE = re.compile(r"[^A-Za-z0-9._-]")


def device_file_name(device: Optional[str]) -> str:
    name = BROADCAST if device is None else _UNSAFE.sub("_", device) or "_"
    return f"{name}.xml"


def group_by_device(bindings: Iterable[DeviceBinding]) -> Dict[Optional[str], List[DeviceBinding]]:
    out: Dict[Optional[str], List[DeviceBinding]] = {}
    for b in bindings:
        out.setdefault(b.device, []).append(b)
    return out


class DirectorySink:
    """Appends one ``<output>`` document per batch to ``<out_dir>/<device>.xml``."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self._lock = threading.Lock()

    def reset(self):
        if self.out_dir.is_dir():
            for p in self.out_dir.glob("*.xml"):
                p.unlink()

    def emit(self, bindings: Sequence[DeviceBinding]):
        if not bindings:
            return
        with self._lock:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            for device, group in sorted(group_by_device(bindings).items(), key=lambda kv: device_file_name(kv[0])):
                with open(self.out_dir / device_file_name(device), "a", encoding="utf-8") as fh:
                    fh.write(render_xml(group))


class MemorySink:
    def __init__(self):
        self.batches: List[List[DeviceBinding]] = []

    def emit(self, bindings: Sequence[DeviceBinding]):
        if bindings:
            self.batches.append(list(bindings))


# -- batch engine ----------------------------------------------------------------


@dataclass
class Stats:
    events_in: int = 0
    malformed: int = 0
    rejected: int = 0
    weather_cells: int = 0
    weather_skipped: int = 0
    coalesced_groups: int = 0
    rules_fired: int = 0
    commands_out: int = 0

    def summary(self) -> str:
        return " ".join(f"{k}={v}" for k, v in vars(self).items())


class Engine:
    """Queue, coalesce, dispatch and evaluate rules one batch at a time.

    Producers (``submit_line``, ``submit``, ``add_weather``) may run on any
    thread; ``step`` and ``finish`` belong to a single consumer thread.
    """

    def __init__(self, knowledge: Knowledge, cfg: EngineConfig, sink=None,
                 handlers: Optional[HandlerRegistry] = None):
        self.knowledge = knowledge
        self.cfg = cfg
        self.sink = sink if sink is not None else MemorySink()
        self.handlers = handlers or HandlerRegistry.default()
        self.queue = EventQueue(cfg.queue_capacity)
        self.coalescer = Coalescer(cfg.coalesce_window_ticks)
        self.ids = IdSequencer()
        self.confidence = ConfidenceCheck(cfg.confidence_k, cfg.confidence_radius, cfg.confidence_window)
        self.stats = Stats()
        self._recent: deque = deque()
        self._weather: Tuple[Tuple[WeatherCell, Invariant], ...] = ()
        self._active_rules: set = set()
        self._lock = threading.Lock()
        self.now: Optional[int] = None

    def swap_knowledge(self, knowledge: Knowledge):
        self.knowledge = knowledge

    def clock(self, iso: str) -> int:
        return tick_from_wall_clock(iso, self.cfg.epoch, self.cfg.tick_seconds)

    def _observe(self, tick: int):
        with self._lock:
            if self.now is None or tick > self.now:
                self.now = tick

    # producers

    def submit(self, event: EventRecord):
        self.queue.enqueue(event)
        with self._lock:
            self.stats.events_in += 1
        self._observe(event.timestamp)

    def submit_line(self, line: str) -> EventRecord:
        try:
            event = parse_event_line(line, self.ids)
        except MalformedEvent:
            with self._lock:
                self.stats.malformed += 1
            raise
        try:
            self.submit(event)
        except QueueFull:
            with self._lock:
                self.stats.rejected += 1
            raise
        return event

    def add_weather(self, cells: Iterable[WeatherCell]):
        new = tuple((c, cell_to_invariant(c, self.cfg.horizon_ticks)) for c in cells)
        with self._lock:
            self._weather = self._weather + new
            self.stats.weather_cells += len(new)
        for c in new:
            self._observe(c[0].tick)

    def note_weather_skipped(self, n: int = 1):
        with self._lock:
            self.stats.weather_skipped += n

    # consumer

    def _active_weather(self, now: int) -> List[Invariant]:
        h = self.cfg.horizon_ticks
        with self._lock:
            live = tuple(cw for cw in self._weather if cw[0].tick + h - 1 >= now)
            self._weather = live
        return [inv for _, inv in live]

    def _remember(self, events: Sequence[EventRecord], now: int):
        self._recent.extend(events)
        horizon = now - self.cfg.confidence_window
        while self._recent and self._recent[0].timestamp < horizon:
            self._recent.popleft()

    def _dispatch(self, groups: Sequence[CoalescedEvent]) -> List[DeviceBinding]:
        knowledge = self.knowledge
        ordered = dispatch_order(groups)
        incidents = [incident_for(g) for g in ordered if g.representative.category in INCIDENT_CATEGORIES]
        ctx = DispatchContext(
            profiles=knowledge.profiles,
            registry=knowledge.registry,
            assignments=resolve_assignments(incidents, knowledge.profiles),
            confidence=self.confidence,
            recent=tuple(self._recent),
        )
        out: List[DeviceBinding] = []
        for g in ordered:
            out.extend(dispatch(g, self.handlers, ctx))
        self.stats.coalesced_groups += len(groups)
        return out

    def _evaluate_rules(self, now: int) -> List[DeviceBinding]:
        knowledge = self.knowledge
        if not knowledge.rules:
            return []
        snapshot = knowledge.snapshot(now, self._active_weather(now))
        out: List[DeviceBinding] = []
        for rule in knowledge.rules:
            fired = evaluate_rule(rule, snapshot)
            if fired is None:
                self._active_rules.discard(rule.id)
            elif rule.id not in self._active_rules:
                # rising edge only: a rule that stays satisfied fires once
                self._active_rules.add(rule.id)
                self.stats.rules_fired += 1
                out.extend(reaction_bindings(fired, knowledge))
        return out

    def step(self, now: Optional[int] = None, close_idle: bool = False) -> List[DeviceBinding]:
        """Process everything queued as one batch at tick ``now``."""
        if now is None:
            now = self.now
        batch = self.queue.drain()
        batch.sort(key=lambda e: (e.timestamp, e.id))
        self.coalescer.feed(batch)
        if now is not None:
            self._remember(batch, now)
        closed = self.coalescer.advance(now) if now is not None else []
        if close_idle:
            closed += self.coalescer.close_idle()
        out = self._dispatch(closed) if closed else []
        if now is not None:
            out += self._evaluate_rules(now)
        self._emit(out)
        return out

    def finish(self) -> List[DeviceBinding]:
        """Drain the queue and close every open group (shutdown barrier)."""
        batch = self.queue.drain()
        batch.sort(key=lambda e: (e.timestamp, e.id))
        self.coalescer.feed(batch)
        closed = self.coalescer.flush()
        out = self._dispatch(closed) if closed else []
        self._emit(out)
        return out

    def _emit(self, bindings: List[DeviceBinding]):
        self.stats.commands_out += len(bindings)
        self.sink.emit(bindings)


@dataclass
class ReplayResult:
    stats: Stats
    bindings: List[DeviceBinding]


def replay(knowledge: Knowledge, cfg: EngineConfig, events_text: str, weather_text: str, sink=None,
           handlers: Optional[HandlerRegistry] = None) -> ReplayResult:
    """Merge weather and events by tick and run the engine deterministically."""
    engine = Engine(knowledge, cfg, sink, handlers)
    events: List[EventRecord] = []
    for lineno, line in enumerate(events_text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            events.append(parse_event_line(stripped, engine.ids))
        except MalformedEvent as exc:
            engine.stats.malformed += 1
            log.warning("event line %d dropped: %s", lineno, exc.reason)
    cells, skipped = parse_weather_feed(weather_text, engine.clock)
    engine.stats.weather_skipped = skipped

    by_tick_events: Dict[int, List[EventRecord]] = {}
    for e in events:
        by_tick_events.setdefault(e.timestamp, []).append(e)
    by_tick_cells: Dict[int, List[WeatherCell]] = {}
    for c in cells:
        by_tick_cells.setdefault(c.tick, []).append(c)

    emitted: List[DeviceBinding] = []
    for tick in sorted(set(by_tick_events) | set(by_tick_cells)):
        engine.add_weather(by_tick_cells.get(tick, ()))
        for e in by_tick_events.get(tick, ()):
            try:
                engine.submit(e)
            except QueueFull:
                # replay owns the clock, so relieve the queue instead of dropping
                emitted += engine.step(tick)
                engine.submit(e)
        emitted += engine.step(tick)
    emitted += engine.finish()
    return ReplayResult(engine.stats, emitted)
