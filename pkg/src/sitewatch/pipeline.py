"""Event intake, priority queue, flood coalescing and handler dispatch."""
from __future__ import annotations

import heapq
import logging
import shlex
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .decision import (
    ConfidenceCheck,
    Incident,
    StakeholderProfile,
    event_location,
    match_experts,
)
from .notification import (
    DeviceBinding,
    DeviceRegistry,
    Display,
    EventBanner,
    MapView,
    bind_devices,
)

log = logging.getLogger(__name__)

DEFAULT_QUEUE_CAPACITY = 10_000
DEFAULT_COALESCE_WINDOW = 5
INCIDENT_CATEGORIES = frozenset({"alarm", "help-request", "consulting-request"})


@dataclass(frozen=True)
class EventRecord:
    id: str
    source: str
    timestamp: int
    category: str
    severity: int = 1
    payload: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        if not 0 <= self.severity <= 3:
            raise ValueError(f"severity {self.severity} outside [0, 3]")
        object.__setattr__(self, "payload", tuple(self.payload))

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        for k, v in self.payload:
            if k == key:
                return v
        return default


class MalformedEvent(ValueError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class IdSequencer:
    """Assigns ``<source>-<n>`` ids, numbering each source from 1."""

    def __init__(self):
        self._counts: Dict[str, int] = defaultdict(int)
        self._lock = threading.Lock()

    def next(self, source: str) -> str:
        with self._lock:
            self._counts[source] += 1
            n = self._counts[source]
        # zero-padded so lexicographic id order matches intake order per source
        return f"{source}-{n:06d}"


def parse_event_line(line: str, ids: Optional[IdSequencer] = None) -> EventRecord:
    """Parse ``evt src=<id> t=<int> cat=<word> [sev=<0-3>] [key="value"]...``."""
    if "\n" in line.rstrip("\r\n"):
        raise MalformedEvent("embedded newline")
    try:
        tokens = shlex.split(line)
    except ValueError as exc:
        raise MalformedEvent(f"bad quoting: {exc}") from None
    if not tokens or tokens[0] != "evt":
        raise MalformedEvent("record must start with 'evt'")
    fields: Dict[str, str] = {}
    payload = []
    for tok in tokens[1:]:
        key, sep, value = tok.partition("=")
        if not sep or not key:
            raise MalformedEvent(f"expected key=value, got {tok!r}")
        if key in ("src", "t", "cat", "sev"):
            if key in fields:
                raise MalformedEvent(f"duplicate {key}")
            fields[key] = value
        else:
            payload.append((key, value))
    for key in ("src", "t", "cat"):
        if not fields.get(key):
            raise MalformedEvent(f"missing {key}")
    try:
        timestamp = int(fields["t"])
    except ValueError:
        raise MalformedEvent(f"t is not an integer: {fields['t']!r}") from None
    try:
        severity = int(fields.get("sev", "1"))
    except ValueError:
        raise MalformedEvent(f"sev is not an integer: {fields['sev']!r}") from None
    if not 0 <= severity <= 3:
        raise MalformedEvent(f"sev {severity} outside 0-3")
    ids = ids or IdSequencer()
    return EventRecord(ids.next(fields["src"]), fields["src"], timestamp, fields["cat"], severity, tuple(payload))


def priority_key(e: EventRecord):
    return (-e.severity, e.timestamp, e.id)


class QueueFull(RuntimeError):
    def __init__(self, capacity: int):
        self.capacity = capacity
        super().__init__(f"event queue full (capacity {capacity})")


class EventQueue:
    """Bounded priority queue: severity desc, then timestamp asc, then id asc.

    Safe for many producers; dequeueing assumes a single consumer.
    """

    def __init__(self, capacity: int = DEFAULT_QUEUE_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._heap: list = []
        self._lock = threading.Lock()
        self._not_empty = threading.Condition(self._lock)

    def __len__(self):
        with self._lock:
            return len(self._heap)

    def enqueue(self, event: EventRecord):
        with self._lock:
            if len(self._heap) >= self.capacity:
                raise QueueFull(self.capacity)
            heapq.heappush(self._heap, (priority_key(event), event))
            self._not_empty.notify()

    def dequeue_batch(self, n: int) -> List[EventRecord]:
        with self._lock:
            k = min(n, len(self._heap))
            return [heapq.heappop(self._heap)[1] for _ in range(k)]

    def drain(self) -> List[EventRecord]:
        return self.dequeue_batch(self.capacity)

    def wait(self, timeout: float) -> bool:
        with self._lock:
            if self._heap:
                return True
            return self._not_empty.wait(timeout)


@dataclass(frozen=True)
class CoalescedEvent:
    representative: EventRecord
    count: int
    first_tick: int
    last_tick: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.first_tick > self.last_tick:
            raise ValueError("first_tick after last_tick")


@dataclass
class _Group:
    representative: EventRecord
    count: int
    first_tick: int
    last_tick: int
    order: int
    touched: int = 0

    def add(self, e: EventRecord):
        self.count += 1
        self.last_tick = max(self.last_tick, e.timestamp)
        if e.severity > self.representative.severity:
            self.representative = e

    def freeze(self) -> CoalescedEvent:
        return CoalescedEvent(self.representative, self.count, self.first_tick, self.last_tick)


class Coalescer:
    """Streaming form of :func:`coalesce`.

    Groups stay open until no later event can join them. Feeding a stream in
    timestamp order and then flushing gives the same groups as coalescing
    the whole stream at once.
    """

    def __init__(self, window_ticks: int = DEFAULT_COALESCE_WINDOW):
        if window_ticks < 0:
            raise ValueError("window_ticks must be >= 0")
        self.window = window_ticks
        self._open: Dict[Tuple[str, str], _Group] = {}
        self._closed: List[_Group] = []
        self._seq = 0
        self._cycle = 0

    def feed(self, events: Iterable[EventRecord]):
        for e in events:
            key = (e.source, e.category)
            group = self._open.get(key)
            if group is not None and 0 <= e.timestamp - group.first_tick <= self.window:
                group.add(e)
                group.touched = self._cycle
                continue
            if group is not None:
                self._closed.append(group)
            self._open[key] = _Group(e, 1, e.timestamp, e.timestamp, self._seq, self._cycle)
            self._seq += 1

    def advance(self, now: int) -> List[CoalescedEvent]:
        """Close groups that no event at tick >= ``now`` could still join."""
        for key, group in list(self._open.items()):
            if now - group.first_tick > self.window:
                self._closed.append(self._open.pop(key))
        return self._take()

    def close_idle(self) -> List[CoalescedEvent]:
        """Close groups that received nothing since the previous call."""
        for key, group in list(self._open.items()):
            if group.touched < self._cycle:
                self._closed.append(self._open.pop(key))
        self._cycle += 1
        return self._take()

    def flush(self) -> List[CoalescedEvent]:
        self._closed.extend(self._open.values())
        self._open.clear()
        return self._take()

    @property
    def pending(self) -> int:
        return len(self._open)

    def _take(self) -> List[CoalescedEvent]:
        done = sorted(self._closed, key=lambda g: g.order)
        self._closed = []
        return [g.freeze() for g in done]


def coalesce(window: Sequence[EventRecord], window_ticks: int = DEFAULT_COALESCE_WINDOW) -> List[CoalescedEvent]:
    """Merge like events (same source and category) that start within ``window_ticks``.

    ``window`` must be sorted by timestamp. A group absorbs every later event
    of its key whose timestamp is at most ``window_ticks`` past the group's
    first event; the representative is the most severe member (earliest on
    ties). Groups come back in order of their first event.
    """
    c = Coalescer(window_ticks)
    c.feed(window)
    return c.flush()


def dispatch_order(groups: Iterable[CoalescedEvent]) -> List[CoalescedEvent]:
    return sorted(groups, key=lambda g: (-g.representative.severity, g.first_tick, g.representative.id))


# -- dispatch -------------------------------------------------------------------


class HandlerFailure(RuntimeError):
    def __init__(self, category: str, detail: str):
        self.category = category
        self.detail = detail
        super().__init__(f"handler for {category!r} failed: {detail}")


@dataclass
class DispatchContext:
    profiles: Sequence[StakeholderProfile] = ()
    registry: DeviceRegistry = field(default_factory=DeviceRegistry.single)
    # event id -> pre-resolved expert (None = nobody free); missing key = match on the spot
    assignments: Mapping[str, Optional[StakeholderProfile]] = field(default_factory=dict)
    confidence: ConfidenceCheck = field(default_factory=ConfidenceCheck)
    recent: Sequence[EventRecord] = ()


Handler = Callable[[CoalescedEvent, DispatchContext], List[DeviceBinding]]


def incident_for(group: CoalescedEvent) -> Incident:
    rep = group.representative
    return Incident(
        event_id=rep.id,
        location=event_location(rep) or (0, 0),
        required_capability=rep.get("need", rep.category),
        time=group.first_tick,
    )


def expert_handler(group: CoalescedEvent, ctx: DispatchContext) -> List[DeviceBinding]:
    """Banner plus the best expert's profile, on that expert's device."""
    rep = group.representative
    if not ctx.confidence.passes(rep, event_location(rep), ctx.recent):
        return [DeviceBinding(EventBanner(f"{rep.category}-unconfirmed", rep.id))]
    incident = incident_for(group)
    if rep.id in ctx.assignments:
        expert = ctx.assignments[rep.id]
    else:
        ranked = match_experts(incident, ctx.profiles)
        expert = ranked[0] if ranked else None
    commands = [EventBanner(rep.category, rep.id)]
    if expert is not None:
        commands.append(Display(expert.id))
    if rep.get("lat") is not None and rep.get("long") is not None:
        commands.append(MapView(rep.get("lat"), rep.get("long"), rep.get("zoom", "15z")))
    return bind_devices(commands, [expert] if expert is not None else [], ctx.registry)


def fallback_handler(group: CoalescedEvent, ctx: DispatchContext) -> List[DeviceBinding]:
    rep = group.representative
    return [DeviceBinding(EventBanner(rep.category, rep.id))]


@dataclass(frozen=True)
class HandlerRegistry:
    handlers: Mapping[str, Handler]
    fallback: Handler = fallback_handler

    @classmethod
    def default(cls) -> "HandlerRegistry":
        return cls({cat: expert_handler for cat in sorted(INCIDENT_CATEGORIES)})

    def lookup(self, category: str) -> Handler:
        return self.handlers.get(category, self.fallback)


def dispatch(group: CoalescedEvent, registry: HandlerRegistry, ctx: Optional[DispatchContext] = None) -> List[DeviceBinding]:
    """Run the category's handler; failures become a ``handler-error`` banner."""
    ctx = ctx or DispatchContext()
    rep = group.representative
    try:
        return list(registry.lookup(rep.category)(group, ctx))
    except Exception as exc:
        failure = HandlerFailure(rep.category, f"{type(exc).__name__}: {exc}")
        log.error("%s (event %s)", failure, rep.id)
        return [DeviceBinding(EventBanner("handler-error", rep.id))]
