"""Random generators shared by the property and acceptance tests."""
import random
from decimal import Decimal

from hypothesis import strategies as st

from sitewatch.invariant import (
    FALSE,
    TRUE,
    And,
    AtomContext,
    Edge,
    EventAtom,
    Implies,
    Not,
    Occupy3DBox,
    OccupyBox,
    OccupyPoint,
    Or,
    OwnerAtom,
    TimeInterval,
    TimePoint,
    Transition,
)
from sitewatch.notification import (
    CompositeImage,
    DeviceBinding,
    Display,
    EarthView,
    EventBanner,
    MapView,
    Rect,
    Text,
)

LABELS = ["A", "B", "cloud", 'q"uote', "back\\slash"]
SMALL = 6


def random_atom(rng: random.Random):
    kind = rng.randrange(12)
    if kind == 0:
        return TRUE
    if kind == 1:
        return FALSE
    if kind == 2:
        return TimePoint(rng.randint(0, SMALL))
    if kind == 3:
        return TimeInterval(rng.randint(0, SMALL), rng.randint(0, SMALL))
    if kind == 4:
        return EventAtom(rng.choice(LABELS))
    if kind == 5:
        return OwnerAtom(rng.choice(LABELS))
    if kind == 6:
        return OccupyPoint(rng.randint(0, SMALL), rng.randint(0, SMALL))
    if kind in (7, 8):
        return OccupyBox(*(rng.randint(-2, SMALL) for _ in range(4)))
    if kind == 9:
        return Occupy3DBox(*(rng.randint(0, SMALL) for _ in range(6)))
    if kind == 10:
        return Edge(rng.choice(LABELS), rng.choice(LABELS))
    return Transition(rng.choice(LABELS), rng.choice(LABELS), rng.choice(LABELS))


def random_term(rng: random.Random, depth: int = 5):
    if depth == 0 or rng.random() < 0.25:
        return random_atom(rng)
    kind = rng.randrange(4)
    if kind == 0:
        return Not(random_term(rng, depth - 1))
    cls = (And, Or, Implies)[kind - 1]
    return cls(random_term(rng, depth - 1), random_term(rng, depth - 1))


def random_context(rng: random.Random) -> AtomContext:
    point = None if rng.random() < 0.2 else (rng.randint(-1, SMALL + 1), rng.randint(-1, SMALL + 1))
    return AtomContext(
        time=rng.randint(-1, SMALL + 1),
        point=point,
        owners=frozenset(l for l in LABELS if rng.random() < 0.4),
        events=frozenset(l for l in LABELS if rng.random() < 0.4),
    )


def random_box(rng: random.Random, lo: int = 0, hi: int = 60, max_side: int = 50) -> OccupyBox:
    x1 = rng.randint(lo, hi)
    y1 = rng.randint(lo, hi)
    return OccupyBox(x1, y1, x1 + rng.randint(0, max_side - 1), y1 + rng.randint(0, max_side - 1))


# -- commands -----------------------------------------------------------------

WORDS = ["gridsubstation.jpg", "bob", "robot1", "Incident at Grid Substation", "a&b <c> \"d\"", "15z", "100m", ""]


def _coord(rng: random.Random, bound: int) -> Decimal:
    return Decimal(rng.randint(-bound * 10**7, bound * 10**7)).scaleb(-7)


def random_command(rng: random.Random):
    kind = rng.randrange(5)
    if kind == 0:
        return EventBanner(rng.choice(WORDS), str(rng.randint(0, 9999)))
    if kind == 1:
        return Display(rng.choice(WORDS))
    if kind == 2:
        overlays = []
        for _ in range(rng.randint(0, 3)):
            if rng.random() < 0.5:
                overlays.append(Rect(*(rng.randint(0, 2000) for _ in range(4))))
            else:
                color = rng.choice([None, "red", "blue"])
                overlays.append(Text(rng.choice(WORDS), rng.randint(0, 2000), rng.randint(0, 2000), color))
        return CompositeImage(rng.choice(WORDS), tuple(overlays))
    lat, long = _coord(rng, 90), _coord(rng, 180)
    if kind == 3:
        return MapView(lat, long, f"{rng.randint(1, 20)}z")
    return EarthView(lat, long, f"{rng.randint(1, 900)}m")


def random_bindings(rng: random.Random, max_len: int = 8):
    devices = [None, "vxlab", "vxportal2", "vxportal6", "amritlab"]
    return [DeviceBinding(random_command(rng), rng.choice(devices)) for _ in range(rng.randint(0, max_len))]


# -- hypothesis strategies ------------------------------------------------------------

seeds = st.integers(min_value=0, max_value=2**32 - 1)
_ints = st.integers(min_value=-2, max_value=SMALL)
_labels = st.sampled_from(LABELS)

atoms = st.one_of(
    st.just(TRUE),
    st.just(FALSE),
    st.builds(TimePoint, _ints),
    st.builds(TimeInterval, _ints, _ints),
    st.builds(EventAtom, _labels),
    st.builds(OwnerAtom, _labels),
    st.builds(OccupyPoint, _ints, _ints),
    st.builds(OccupyBox, _ints, _ints, _ints, _ints),
    st.builds(Occupy3DBox, _ints, _ints, _ints, _ints, _ints, _ints),
    st.builds(Edge, _labels, _labels),
    st.builds(Transition, _labels, _labels, _labels),
)

terms = st.recursive(
    atoms,
    lambda sub: st.one_of(
        st.builds(Not, sub),
        st.builds(And, sub, sub),
        st.builds(Or, sub, sub),
        st.builds(Implies, sub, sub),
    ),
    max_leaves=20,
)


contexts = st.builds(
    AtomContext,
    time=st.integers(min_value=-1, max_value=SMALL + 1),
    point=st.none() | st.tuples(st.integers(-3, SMALL + 1), st.integers(-3, SMALL + 1)),
    owners=st.frozensets(_labels),
    events=st.frozensets(_labels),
)


@st.composite
def binding_lists(draw):
    return random_bindings(random.Random(draw(seeds)))
