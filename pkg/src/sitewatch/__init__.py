"""Decision support for remote facilities over spatio-temporal invariant models."""

from .invariant import (
    FALSE,
    TRUE,
    And,
    AtomContext,
    Edge,
    EventAtom,
    Implies,
    Invariant,
    Not,
    Occupy3DBox,
    OccupyBox,
    OccupyPoint,
    Or,
    OwnerAtom,
    TimeInterval,
    TimePoint,
    Transition,
    Truth,
    holds_at,
    parse_invariant,
    serialize_invariant,
    simplify,
)

__version__ = "0.1.0"
