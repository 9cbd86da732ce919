"""Filtering, snapshot extraction and lattice geometry over invariant terms."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import FrozenSet, Iterable, List, Sequence, Tuple

from .invariant import (
    FALSE,
    TRUE,
    And,
    AtomContext,
    Implies,
    Invariant,
    OccupyBox,
    OccupyPoint,
    Or,
    OwnerAtom,
    TimeInterval,
    TimePoint,
    TrueAtom,
    Truth,
    holds_at,
    simplify,
    transform,
    walk,
)

DEFAULT_DECOMPOSITION_CAP = 10**7

PointSet = FrozenSet[Tuple[int, int]]


class PreconditionError(ValueError):
    pass


class UnsupportedForm(ValueError):
    def __init__(self, term_index: int, detail: str = ""):
        self.term_index = term_index
        self.detail = detail
        msg = f"term {term_index} is outside the supported model fragment"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class CapExceeded(ValueError):
    def __init__(self, required: int, cap: int):
        self.required = required
        self.cap = cap
        super().__init__(f"decomposition needs {required} points, cap is {cap}")


@dataclass(frozen=True)
class SpatialSnapshot:
    time: int
    owned_boxes: Tuple[Tuple[str, OccupyBox], ...] = ()

    def __post_init__(self):
        canon = sorted(set(self.owned_boxes), key=lambda ob: (ob[0], ob[1].corners))
        object.__setattr__(self, "owned_boxes", tuple(canon))

    def boxes_of(self, owner: str) -> List[OccupyBox]:
        return [box for o, box in self.owned_boxes if o == owner]


def filter_by_time(inv: Invariant, t: int) -> Invariant:
    """Resolve every temporal atom at tick ``t`` and simplify."""

    def resolve(node):
        if isinstance(node, TimePoint):
            return TRUE if node.t == t else FALSE
        if isinstance(node, TimeInterval):
            return TRUE if node.contains(t) else FALSE
        return None

    return simplify(transform(inv, resolve))


def filter_by_owner(inv: Invariant, label: str) -> Invariant:
    if any(isinstance(n, (TimePoint, TimeInterval)) for n in walk(inv)):
        raise PreconditionError("temporal atoms remain; apply filter_by_time first")

    def resolve(node):
        if isinstance(node, OwnerAtom):
            return TRUE if node.label == label else FALSE
        return None

    return simplify(transform(inv, resolve))


def _conjuncts(inv: Invariant) -> List[Invariant]:
    if isinstance(inv, And):
        return _conjuncts(inv.lhs) + _conjuncts(inv.rhs)
    return [inv]


def _is_temporal(inv: Invariant) -> bool:
    if isinstance(inv, (TimePoint, TimeInterval, TrueAtom)):
        return True
    if isinstance(inv, (And, Or)):
        return _is_temporal(inv.lhs) and _is_temporal(inv.rhs)
    return False


def _implication_boxes(inv: Invariant, t: int) -> List[Tuple[str, OccupyBox]]:
    """Owned boxes asserted by one guarded implication, or raise ValueError."""
    if not isinstance(inv, Implies):
        raise ValueError(f"expected IMPLIES, got {type(inv).__name__}")
    owners = []
    temporal = []
    for part in _conjuncts(inv.lhs):
        if isinstance(part, OwnerAtom):
            owners.append(part.label)
        elif _is_temporal(part):
            temporal.append(part)
        else:
            raise ValueError(f"guard conjunct {type(part).__name__} is not temporal or an owner")
    if len(owners) != 1:
        raise ValueError(f"guard must name exactly one owner, found {len(owners)}")
    boxes = []
    for part in _conjuncts(inv.rhs):
        if isinstance(part, OccupyBox):
            boxes.append(part)
        elif isinstance(part, OccupyPoint):
            boxes.append(OccupyBox(part.x, part.y, part.x, part.y))
        else:
            raise ValueError(f"consequent {type(part).__name__} is not a box or point")
    ctx = AtomContext(time=t)
    if all(holds_at(g, ctx) is Truth.TRUE for g in temporal):
        return [(owners[0], box) for box in boxes]
    return []


def extract_snapshot(model: Sequence[Invariant], t: int) -> SpatialSnapshot:
    """Collect the (owner, box) facts whose temporal guards hold at ``t``.

    Each term must be ``IMPLIES(AND(<temporal>, Owner(..)), <boxes>)`` or a
    conjunction of such; ``TRUE()`` contributes nothing. Anything else raises
    UnsupportedForm with the term's index.
    """
    found = []
    for index, term in enumerate(model):
        for part in _conjuncts(term):
            if isinstance(part, TrueAtom):
                continue
            try:
                found.extend(_implication_boxes(part, t))
            except ValueError as exc:
                raise UnsupportedForm(index, str(exc)) from None
    return SpatialSnapshot(time=t, owned_boxes=tuple(found))


def decompose_to_points(box: OccupyBox, cap: int = DEFAULT_DECOMPOSITION_CAP) -> PointSet:
    required = box.lattice_size
    if required > cap:
        raise CapExceeded(required, cap)
    return frozenset(
        (x, y) for x in range(box.x1, box.x2 + 1) for y in range(box.y1, box.y2 + 1)
    )


def boxes_overlap(a: OccupyBox, b: OccupyBox) -> bool:
    # inclusive bounds: shared edges and corners count
    return a.x1 <= b.x2 and b.x1 <= a.x2 and a.y1 <= b.y2 and b.y1 <= a.y2


def _clip(box: OccupyBox, area: OccupyBox):
    if not boxes_overlap(box, area):
        return None
    return (max(box.x1, area.x1), max(box.y1, area.y1), min(box.x2, area.x2), min(box.y2, area.y2))


def union_lattice_count(boxes: Iterable[Tuple[int, int, int, int]]) -> int:
    """Number of lattice points in the union of inclusive boxes.

    Coordinate-compressed sweep over half-open cells, so overlaps are
    counted once and the cost does not depend on box area.
    """
    rects = [(x1, y1, x2 + 1, y2 + 1) for x1, y1, x2, y2 in boxes]
    if not rects:
        return 0
    xs = sorted({r[0] for r in rects} | {r[2] for r in rects})
    total = 0
    for xa, xb in zip(xs, xs[1:]):
        spans = sorted((r[1], r[3]) for r in rects if r[0] <= xa and r[2] >= xb)
        covered = 0
        cur_lo = cur_hi = None
        for lo, hi in spans:
            if cur_hi is None or lo > cur_hi:
                if cur_hi is not None:
                    covered += cur_hi - cur_lo
                cur_lo, cur_hi = lo, hi
            else:
                cur_hi = max(cur_hi, hi)
        if cur_hi is not None:
            covered += cur_hi - cur_lo
        total += covered * (xb - xa)
    return total


def coverage(snapshot: SpatialSnapshot, owner: str, area: OccupyBox) -> Fraction:
    """Exact fraction of ``area``'s lattice points inside any of ``owner``'s boxes."""
    clipped = [c for c in (_clip(b, area) for b in snapshot.boxes_of(owner)) if c is not None]
    return Fraction(union_lattice_count(clipped), area.lattice_size)
