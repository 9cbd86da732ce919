import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sitewatch.decision import (
    ConfidenceCheck,
    CoverageRule,
    Incident,
    ReactionTemplate,
    RecordError,
    StakeholderProfile,
    evaluate_rule,
    match_experts,
    parse_profiles,
    parse_rules,
    resolve_assignments,
)
from sitewatch.invariant import OccupyBox, TimeInterval
from sitewatch.notification import CompositeImage, DeviceBinding, EarthView, MapView, Text
from sitewatch.pipeline import EventRecord
from sitewatch.reasoning import SpatialSnapshot, coverage

LEFT = OccupyBox(0, 0, 9, 9)
RIGHT = OccupyBox(20, 0, 29, 9)
REACTION = ReactionTemplate(
    "critical solar energy level",
    (DeviceBinding(MapView("-38.1771269", "146.3428259", "15z")),
     DeviceBinding(CompositeImage("solar.jpg", (Text("{rule-id} at {time}: {areas}", 1, 2),)))),
)


def rule(areas=(LEFT,), threshold="1/2", window=(0, 100)):
    return CoverageRule("solar", window[0], window[1], "cloud", tuple(areas), Fraction(threshold), REACTION)


def snap(t, *boxes):
    return SpatialSnapshot(t, tuple(("cloud", b) for b in boxes))


class TestEvaluateRule:
    def test_inclusive_threshold(self):
        s = snap(50, OccupyBox(0, 0, 4, 9))
        assert coverage(s, "cloud", LEFT) == Fraction(1, 2)
        fired = evaluate_rule(rule(), s)
        assert fired is not None
        assert fired.label == "critical solar energy level"
        assert fired.coverages == (Fraction(1, 2),)

    def test_outside_window(self):
        assert evaluate_rule(rule(), snap(101, OccupyBox(0, 0, 4, 9))) is None
        assert evaluate_rule(rule(), snap(100, OccupyBox(0, 0, 4, 9))) is not None

    def test_all_areas_must_meet_threshold(self):
        s = snap(10, LEFT)
        assert coverage(s, "cloud", LEFT) == 1 and coverage(s, "cloud", RIGHT) == 0
        assert evaluate_rule(rule((LEFT, RIGHT)), s) is None
        assert evaluate_rule(rule((LEFT, RIGHT)), snap(10, LEFT, RIGHT)) is not None

    def test_placeholders_filled(self):
        fired = evaluate_rule(rule((LEFT, RIGHT)), snap(42, LEFT, RIGHT))
        text = fired.bindings[1].command.overlays[0].text
        assert text == "solar at 42: 0,0,9,9;20,0,29,9"
        assert fired.bindings[0].command == MapView("-38.1771269", "146.3428259", "15z")

    def test_validation(self):
        with pytest.raises(ValueError):
            rule(threshold="3/2")
        with pytest.raises(ValueError):
            rule(areas=())
        with pytest.raises(ValueError):
            rule(window=(5, 1))

    @settings(max_examples=200)
    @given(st.lists(st.tuples(*[st.integers(0, 30)] * 4), max_size=5),
           st.fractions(0, 1), st.fractions(0, 1))
    def test_threshold_monotone(self, boxes, a, b):
        lo, hi = sorted((a, b))
        s = snap(5, *(OccupyBox(*bx) for bx in boxes))
        if evaluate_rule(rule((LEFT, RIGHT), hi), s) is not None:
            assert evaluate_rule(rule((LEFT, RIGHT), lo), s) is not None


def expert(pid, loc, caps=("alarm",), avail=((0, 1000),), device=None):
    return StakeholderProfile(pid, frozenset(caps), tuple(TimeInterval(*a) for a in avail), loc, device or pid)


def brute_ranking(incident, profiles):
    ok = [p for p in profiles
          if incident.required_capability in p.capabilities
          and any(iv.t1 <= incident.time <= iv.t2 for iv in p.availability)]
    dist = lambda p: math.hypot(p.location[0] - incident.location[0], p.location[1] - incident.location[1])
    return sorted(ok, key=lambda p: (dist(p), p.id))


def random_profiles(rng, n):
    out = []
    for i in range(n):
        start = rng.randint(0, 50)
        avail = ((start, start + rng.randint(0, 30)), (start + 40, start + 40 + rng.randint(0, 30)))
        caps = rng.sample(["alarm", "electrical", "mechanical"], rng.randint(0, 3))
        out.append(expert(f"p{i:02d}", (rng.randint(-20, 20), rng.randint(-20, 20)), caps, avail))
    return out


class TestMatchExperts:
    def test_nearest_first(self):
        inc = Incident("e1", (0, 0), "alarm", 5)
        far, near = expert("far", (5, 12)), expert("near", (3, 4))
        assert match_experts(inc, [far, near]) == [near, far]

    def test_availability_boundary(self):
        inc = Incident("e1", (0, 0), "alarm", 11)
        assert match_experts(inc, [expert("a", (0, 0), avail=((0, 10),))]) == []

    def test_capability_required(self):
        inc = Incident("e1", (0, 0), "electrical", 1)
        assert match_experts(inc, [expert("a", (0, 0))]) == []

    def test_ties_by_id(self):
        inc = Incident("e1", (0, 0), "alarm", 1)
        ps = [expert("b", (0, 5)), expert("a", (5, 0)), expert("c", (3, 4))]
        assert [p.id for p in match_experts(inc, ps)] == ["a", "b", "c"]

    def test_random_against_brute_force(self):
        rng = random.Random(5)
        for _ in range(50):
            profiles = random_profiles(rng, 50)
            inc = Incident("e", (rng.randint(-20, 20), rng.randint(-20, 20)), "alarm", rng.randint(0, 120))
            assert match_experts(inc, profiles) == brute_ranking(inc, profiles)

    @settings(max_examples=100)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 50))
    def test_scaling_preserves_order(self, seed, k):
        rng = random.Random(seed)
        profiles = random_profiles(rng, 20)
        inc = Incident("e", (rng.randint(-20, 20), rng.randint(-20, 20)), "alarm", rng.randint(0, 120))
        scaled = [StakeholderProfile(p.id, p.capabilities, p.availability,
                                     (p.location[0] * k, p.location[1] * k), p.device) for p in profiles]
        scaled_inc = Incident("e", (inc.location[0] * k, inc.location[1] * k), "alarm", inc.time)
        assert [p.id for p in match_experts(inc, profiles)] == [p.id for p in match_experts(scaled_inc, scaled)]

    def test_overlapping_availability_rejected(self):
        with pytest.raises(ValueError):
            expert("a", (0, 0), avail=((0, 10), (10, 20)))


class TestResolveAssignments:
    def test_scarcity(self):
        incs = [Incident("e2", (0, 0), "alarm", 2), Incident("e1", (0, 0), "alarm", 1)]
        out = resolve_assignments(incs, [expert("only", (1, 1))])
        assert out["e1"].id == "only"
        assert out["e2"] is None
        assert list(out) == ["e1", "e2"]

    def test_disjoint_needs(self):
        incs = [Incident("e1", (0, 0), "electrical", 1), Incident("e2", (50, 50), "mechanical", 1)]
        profiles = [
            expert("el-near", (1, 0), ("electrical",)), expert("el-far", (30, 30), ("electrical",)),
            expert("me-near", (49, 50), ("mechanical",)), expert("me-far", (0, 1), ("mechanical",)),
        ]
        out = resolve_assignments(incs, profiles)
        assert {k: v.id for k, v in out.items()} == {"e1": "el-near", "e2": "me-near"}
        # exhaustive: nobody booked twice, and each got the closest capable person
        assert len({v.id for v in out.values()}) == len(out)
        for inc in incs:
            assert out[inc.event_id] == brute_ranking(inc, profiles)[0]

    def test_no_profiles(self):
        incs = [Incident("a", (0, 0), "alarm", 1), Incident("b", (0, 0), "alarm", 1)]
        assert resolve_assignments(incs, []) == {"a": None, "b": None}

    def test_greedy_certificate(self):
        rng = random.Random(9)
        for _ in range(100):
            profiles = random_profiles(rng, rng.randint(0, 15))
            incs = [Incident(f"i{j}", (rng.randint(-20, 20), rng.randint(-20, 20)),
                             rng.choice(["alarm", "electrical"]), rng.randint(0, 120)) for j in range(8)]
            out = resolve_assignments(incs, profiles)
            chosen = [v.id for v in out.values() if v is not None]
            assert len(chosen) == len(set(chosen))
            taken = set()
            for inc in sorted(incs, key=lambda i: (i.time, i.event_id)):
                free = [p for p in brute_ranking(inc, profiles) if p.id not in taken]
                expected = free[0] if free else None
                assert out[inc.event_id] == expected
                if expected:
                    taken.add(expected.id)


def evt(eid, source, t, x=None, y=None):
    payload = () if x is None else (("x", str(x)), ("y", str(y)))
    return EventRecord(eid, source, t, "alarm", 2, payload)


class TestConfidence:
    def test_default_passes_everything(self):
        assert ConfidenceCheck().passes(evt("a", "s", 1), None, [])

    def test_needs_nearby_corroboration(self):
        check = ConfidenceCheck(k=2, radius=5, window=10)
        e = evt("a", "s1", 20, 0, 0)
        assert not check.passes(e, (0, 0), [e, evt("b", "s2", 15, 10, 10)])
        assert check.passes(e, (0, 0), [e, evt("b", "s2", 15, 3, 4)])
        assert not check.passes(e, (0, 0), [evt("c", "s2", 5, 3, 4)])

    def test_without_location_same_source_counts(self):
        check = ConfidenceCheck(k=2, radius=1, window=10)
        e = evt("a", "s1", 20)
        assert check.passes(e, None, [evt("b", "s1", 19)])
        assert not check.passes(e, None, [evt("b", "s2", 19)])


class TestRecordFiles:
    RULES = """
    # SmartSpace rule
    rule id=solar window=100..200 owner=cloud area=0,0,9,9;20,0,29,9 threshold=0.8 reaction="critical solar energy level" notify=bob
    cmd rule=solar type=earth lat=-38.1771269 long=146.3428259 height=100m
    cmd rule=solar type=composite_image image=solar.jpg device=vxlab
    overlay rule=solar type=text text="Cloud over {areas}" x=10 y=20 color=red
    """

    def test_parse_rules(self):
        (r,) = parse_rules(self.RULES)
        assert (r.id, r.t1, r.t2, r.owner) == ("solar", 100, 200, "cloud")
        assert r.areas == (LEFT, RIGHT)
        assert r.threshold == Fraction(4, 5)
        assert r.notify == ("bob",)
        assert r.reaction.label == "critical solar energy level"
        assert r.reaction.commands[0] == DeviceBinding(EarthView("-38.1771269", "146.3428259", "100m"))
        assert r.reaction.commands[1].device == "vxlab"
        assert r.reaction.commands[1].command.overlays == (Text("Cloud over {areas}", 10, 20, "red"),)

    @pytest.mark.parametrize("text", [
        "rule id=x window=1..2 owner=c threshold=0.5",
        "rule id=x window=1-2 owner=c area=0,0,1,1 threshold=0.5",
        "cmd rule=missing type=display profile=a",
        "rule id=x window=1..2 owner=c area=0,0,1 threshold=0.5",
        "rule id=x window=1..2 owner=c area=0,0,1,1 threshold=2",
        "bogus id=1",
    ])
    def test_rule_errors(self, text):
        with pytest.raises(RecordError):
            parse_rules(text)

    def test_parse_profiles(self):
        (p,) = parse_profiles("profile id=bob caps=electrical,alarm avail=0..100;200..300 loc=10,20 device=vxportal2")
        assert p.capabilities == {"electrical", "alarm"}
        assert p.availability == (TimeInterval(0, 100), TimeInterval(200, 300))
        assert p.location == (10, 20) and p.device == "vxportal2"

    def test_profile_errors(self):
        with pytest.raises(RecordError):
            parse_profiles("profile id=bob loc=1,2")
        with pytest.raises(RecordError):
            parse_profiles("profile id=bob avail=0..10;5..20 loc=1,2 device=d")
