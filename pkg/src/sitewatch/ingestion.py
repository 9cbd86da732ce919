"""Weather feed parsing and conversion of feed data into invariant terms."""
from __future__ import annotations

import logging
import shlex
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Callable, Iterable, List, Optional, Tuple, Union

from .invariant import And, Implies, Invariant, OccupyBox, OwnerAtom, TimeInterval

log = logging.getLogger(__name__)


class TimestampError(ValueError):
    pass


@dataclass(frozen=True)
class WeatherCell:
    tick: int
    kind: str
    box: OccupyBox
    intensity: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError(f"intensity {self.intensity} outside [0, 1]")


def _parse_iso(text: str) -> datetime:
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(s)
    except ValueError:
        raise TimestampError(f"not an ISO-8601 timestamp: {text!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt


def tick_from_wall_clock(timestamp: str, epoch: str, tick_seconds: int) -> int:
    """Whole ticks elapsed since ``epoch``, floored (negative before the epoch)."""
    if tick_seconds < 1:
        raise ValueError("tick_seconds must be >= 1")
    return (_parse_iso(timestamp) - _parse_iso(epoch)) // timedelta(seconds=tick_seconds)


def parse_weather_line(line: str, clock: Optional[Callable[[str], int]] = None) -> WeatherCell:
    """Parse ``wx t=<int> kind=<word> box=x1,y1,x2,y2 [intensity=<0..1>]``.

    With a ``clock``, ``at=<ISO timestamp>`` may stand in for ``t=``.
    """
    tokens = shlex.split(line)
    if not tokens or tokens[0] != "wx":
        raise ValueError("record must start with 'wx'")
    fields = {}
    for tok in tokens[1:]:
        key, sep, value = tok.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {tok!r}")
        fields[key] = value
    if "t" in fields:
        tick = int(fields["t"])
    elif "at" in fields and clock is not None:
        tick = clock(fields["at"])
    else:
        raise ValueError("missing t")
    if "kind" not in fields:
        raise ValueError("missing kind")
    if "box" not in fields:
        raise ValueError("missing box")
    corners = [int(v) for v in fields["box"].split(",")]
    if len(corners) != 4:
        raise ValueError("box needs four integers")
    return WeatherCell(tick, fields["kind"], OccupyBox(*corners), float(fields.get("intensity", 1.0)))


def parse_weather_feed(
    lines: Union[str, Iterable[str]], clock: Optional[Callable[[str], int]] = None
) -> Tuple[List[WeatherCell], int]:
    """Parse a feed, skipping malformed lines. Returns (cells, skipped count)."""
    if isinstance(lines, str):
        lines = lines.splitlines()
    cells, skipped = [], 0
    for lineno, line in enumerate(lines, 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            cells.append(parse_weather_line(stripped, clock))
        except ValueError as exc:
            skipped += 1
            log.warning("weather line %d skipped: %s", lineno, exc)
    return cells, skipped


def cell_to_invariant(cell: WeatherCell, horizon_ticks: int) -> Invariant:
    return Implies(
        And(TimeInterval(cell.tick, cell.tick + horizon_ticks - 1), OwnerAtom(cell.kind)),
        cell.box,
    )


def cells_to_invariants(cells: Iterable[WeatherCell], horizon_ticks: int) -> List[Invariant]:
    """Each cell holds from its tick until the next expected feed."""
    if horizon_ticks < 1:
        raise ValueError("horizon_ticks must be >= 1")
    return [cell_to_invariant(c, horizon_ticks) for c in cells]
