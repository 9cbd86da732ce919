"""Coverage rules, expert matching and incident assignment."""
from __future__ import annotations

import shlex
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from .invariant import OccupyBox, TimeInterval
from .notification import (
    CompositeImage,
    DeviceBinding,
    Text,
    VisualizationCommand,
    command_from_fields,
    overlay_from_fields,
    with_overlay,
)
from .reasoning import SpatialSnapshot, coverage

Point = Tuple[int, int]


@dataclass(frozen=True)
class ReactionTemplate:
    label: str
    commands: Tuple[DeviceBinding, ...] = ()

    def instantiate(self, values: Mapping[str, str]) -> Tuple[DeviceBinding, ...]:
        return tuple(replace(b, command=_fill(b.command, values)) for b in self.commands)


def _sub(text: str, values: Mapping[str, str]) -> str:
    for key, value in values.items():
        text = text.replace("{" + key + "}", value)
    return text


def _fill(cmd: VisualizationCommand, values: Mapping[str, str]) -> VisualizationCommand:
    changes = {k: _sub(v, values) for k, v in vars(cmd).items() if isinstance(v, str)}
    if isinstance(cmd, CompositeImage):
        changes["overlays"] = tuple(
            replace(ov, text=_sub(ov.text, values)) if isinstance(ov, Text) else ov for ov in cmd.overlays
        )
    return replace(cmd, **changes)


@dataclass(frozen=True)
class CoverageRule:
    id: str
    t1: int
    t2: int
    owner: str
    areas: Tuple[OccupyBox, ...]
    threshold: Fraction
    reaction: ReactionTemplate
    notify: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.t1 > self.t2:
            raise ValueError(f"rule {self.id}: window start {self.t1} after end {self.t2}")
        if not self.areas:
            raise ValueError(f"rule {self.id}: needs at least one area")
        object.__setattr__(self, "areas", tuple(self.areas))
        object.__setattr__(self, "threshold", Fraction(self.threshold))
        if not 0 <= self.threshold <= 1:
            raise ValueError(f"rule {self.id}: threshold must lie in [0, 1]")


@dataclass(frozen=True)
class TriggeredReaction:
    rule_id: str
    label: str
    time: int
    coverages: Tuple[Fraction, ...]
    bindings: Tuple[DeviceBinding, ...]
    notify: Tuple[str, ...] = ()


def format_areas(areas: Iterable[OccupyBox]) -> str:
    return ";".join(",".join(str(v) for v in a.corners) for a in areas)


def rule_coverages(rule: CoverageRule, snapshot: SpatialSnapshot) -> Tuple[Fraction, ...]:
    return tuple(coverage(snapshot, rule.owner, area) for area in rule.areas)


def evaluate_rule(rule: CoverageRule, snapshot: SpatialSnapshot) -> Optional[TriggeredReaction]:
    """Fire when the snapshot lies in the window and every area meets the threshold."""
    if not rule.t1 <= snapshot.time <= rule.t2:
        return None
    covs = rule_coverages(rule, snapshot)
    if not all(c >= rule.threshold for c in covs):
        return None
    values = {"time": str(snapshot.time), "rule-id": rule.id, "areas": format_areas(rule.areas)}
    return TriggeredReaction(
        rule.id, rule.reaction.label, snapshot.time, covs, rule.reaction.instantiate(values), rule.notify
    )


@dataclass(frozen=True)
class StakeholderProfile:
    id: str
    capabilities: FrozenSet[str]
    availability: Tuple[TimeInterval, ...]
    location: Point
    device: str

    def __post_init__(self):
        object.__setattr__(self, "capabilities", frozenset(self.capabilities))
        spans = tuple(sorted(self.availability, key=lambda iv: (iv.t1, iv.t2)))
        for a, b in zip(spans, spans[1:]):
            if b.t1 <= a.t2:
                raise ValueError(f"profile {self.id}: availability intervals overlap")
        object.__setattr__(self, "availability", spans)
        object.__setattr__(self, "location", tuple(self.location))

    def available_at(self, t: int) -> bool:
        return any(iv.contains(t) for iv in self.availability)


@dataclass(frozen=True)
class Incident:
    event_id: str
    location: Point
    required_capability: str
    time: int


def _sq_distance(a: Point, b: Point) -> int:
    return (a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2


def match_experts(incident: Incident, profiles: Sequence[StakeholderProfile]) -> List[StakeholderProfile]:
    """Capable, available profiles nearest first; ties by id."""
    eligible = [
        p for p in profiles
        if incident.required_capability in p.capabilities and p.available_at(incident.time)
    ]
    # squared distance keeps the comparison exact and has the same order as Euclidean
    return sorted(eligible, key=lambda p: (_sq_distance(p.location, incident.location), p.id))


def resolve_assignments(
    incidents: Sequence[Incident], profiles: Sequence[StakeholderProfile]
) -> Dict[str, Optional[StakeholderProfile]]:
    """Greedy in (time, event id) order; each expert serves at most one incident."""
    taken = set()
    out: Dict[str, Optional[StakeholderProfile]] = {}
    for inc in sorted(incidents, key=lambda i: (i.time, i.event_id)):
        chosen = next((p for p in match_experts(inc, profiles) if p.id not in taken), None)
        if chosen is not None:
            taken.add(chosen.id)
        out[inc.event_id] = chosen
    return out


@dataclass(frozen=True)
class ConfidenceCheck:
    """Corroboration hook: at least ``k`` events within ``radius`` and ``window`` ticks.

    The event under test counts toward ``k``, so the default ``k=1`` passes
    everything. Events without a location only corroborate events from the
    same source.
    """

    k: int = 1
    radius: float = 0.0
    window: int = 0

    def passes(self, event, location: Optional[Point], recent: Iterable) -> bool:
        if self.k <= 1:
            return True
        count = 1
        r2 = self.radius * self.radius
        for other in recent:
            if other.id == event.id or not 0 <= event.timestamp - other.timestamp <= self.window:
                continue
            other_loc = event_location(other)
            if location is not None and other_loc is not None:
                near = _sq_distance(location, other_loc) <= r2
            else:
                near = other.source == event.source
            if near:
                count += 1
                if count >= self.k:
                    return True
        return count >= self.k


def event_location(event) -> Optional[Point]:
    payload = dict(event.payload)
    try:
        return (int(payload["x"]), int(payload["y"]))
    except (KeyError, ValueError):
        return None


# -- rule and profile files ---------------------------------------------------
#
#   rule id=r1 window=0..100 owner=cloud area=0,0,9,9;20,0,29,9 threshold=0.5
#        reaction="critical solar energy level" [notify=bob,eric]
#   cmd rule=r1 type=map lat=-38.1771269 long=146.3428259 zoom=15z [device=..]
#   overlay rule=r1 type=text text="Coverage in {areas}" x=10 y=10
#
#   profile id=bob caps=electrical,alarm avail=0..100;200..300 loc=10,20 device=vxportal2


class RecordError(ValueError):
    def __init__(self, lineno: int, detail: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {detail}")


def _records(text: str):
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            tokens = shlex.split(stripped)
        except ValueError as exc:
            raise RecordError(lineno, str(exc)) from None
        fields = {}
        for tok in tokens[1:]:
            key, sep, value = tok.partition("=")
            if not sep or not key:
                raise RecordError(lineno, f"expected key=value, got {tok!r}")
            fields[key] = value
        yield lineno, tokens[0], fields


def _range(text: str) -> Tuple[int, int]:
    lo, sep, hi = text.partition("..")
    if not sep:
        raise ValueError(f"expected <t1>..<t2>, got {text!r}")
    return int(lo), int(hi)


def _box(text: str) -> OccupyBox:
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 4:
        raise ValueError(f"box needs 4 integers, got {text!r}")
    return OccupyBox(*parts)


def parse_rules(text: str) -> List[CoverageRule]:
    rules: Dict[str, dict] = {}
    for lineno, head, f in _records(text):
        try:
            if head == "rule":
                rid = f["id"]
                if rid in rules:
                    raise ValueError(f"duplicate rule id {rid!r}")
                t1, t2 = _range(f["window"])
                rules[rid] = dict(
                    id=rid, t1=t1, t2=t2, owner=f["owner"],
                    areas=tuple(_box(a) for a in f["area"].split(";") if a),
                    threshold=Fraction(f["threshold"]),
                    label=f.get("reaction", rid),
                    notify=tuple(n for n in f.get("notify", "").split(",") if n),
                    commands=[],
                    lineno=lineno,
                )
            elif head in ("cmd", "overlay"):
                rule = rules.get(f.pop("rule", None))
                if rule is None:
                    raise ValueError(f"{head} refers to an unknown rule")
                if head == "cmd":
                    device = f.pop("device", None)
                    rule["commands"].append(DeviceBinding(command_from_fields(f), device))
                else:
                    if not rule["commands"]:
                        raise ValueError("overlay without a preceding composite_image")
                    rule["commands"][-1] = with_overlay(rule["commands"][-1], overlay_from_fields(f))
            else:
                raise ValueError(f"unknown record {head!r}")
        except KeyError as exc:
            raise RecordError(lineno, f"missing field {exc.args[0]}") from None
        except ValueError as exc:
            raise RecordError(lineno, str(exc)) from None
    out = []
    for r in rules.values():
        lineno = r.pop("lineno")
        reaction = ReactionTemplate(r.pop("label"), tuple(r.pop("commands")))
        try:
            out.append(CoverageRule(reaction=reaction, **r))
        except ValueError as exc:
            raise RecordError(lineno, str(exc)) from None
    return out


def parse_profiles(text: str) -> List[StakeholderProfile]:
    out = []
    for lineno, head, f in _records(text):
        try:
            if head != "profile":
                raise ValueError(f"unknown record {head!r}")
            avail = tuple(TimeInterval(*_range(s)) for s in f.get("avail", "").split(";") if s)
            x, y = (int(v) for v in f["loc"].split(","))
            out.append(StakeholderProfile(
                id=f["id"],
                capabilities=frozenset(c for c in f.get("caps", "").split(",") if c),
                availability=avail,
                location=(x, y),
                device=f["device"],
            ))
        except KeyError as exc:
            raise RecordError(lineno, f"missing field {exc.args[0]}") from None
        except ValueError as exc:
            raise RecordError(lineno, str(exc)) from None
    return out
