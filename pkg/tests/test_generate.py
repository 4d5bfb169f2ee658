from hypothesis import given, settings
from hypothesis import strategies as st

from tapaug.core import classify_link
from tapaug.generate import PROFILES, generate, parse_profile

import pytest


def test_deterministic():
    a = generate(3, "random-tree", n=12, max_cost=4)
    b = generate(3, "random-tree", n=12, max_cost=4)
    assert a.parent == b.parent and a.links == b.links
    assert generate(4, "random-tree", n=12, max_cost=4).links != a.links


def test_canonical_star():
    inst = generate(0, "star", n=4)
    assert [l.ends for l in inst.links] == [(1, 2), (2, 3), (1, 3)]
    assert inst.is_unit and inst.is_feasible


def test_profile_parsing():
    assert parse_profile("bounded-diameter(5)") == ("bounded-diameter", 5)
    assert parse_profile("star") == ("star", None)
    with pytest.raises(ValueError):
        parse_profile("octopus")
    with pytest.raises(ValueError):
        generate(0, "star", n=1)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["random-tree", "star", "caterpillar", "spider-shaped"]),
       st.integers(2, 14), st.integers(1, 5))
def test_always_feasible(seed, profile, n, max_cost):
    inst = generate(seed, profile, n=n, max_cost=max_cost)
    assert inst.is_feasible
    assert len(inst.nodes) == n
    assert all(1 <= l.cost <= max_cost for l in inst.links)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(3, 14))
def test_spider_has_no_non_up_in_links(seed, n):
    inst = generate(seed, "spider-shaped", n=n, max_cost=3)
    for i in range(len(inst.links)):
        c = classify_link(inst, i)
        assert not (c.kind == "in" and not c.up)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 7), st.integers(3, 14))
def test_bounded_diameter(seed, d, n):
    inst = generate(seed, f"bounded-diameter({d})", n=n)
    assert inst.diameter() <= d


def test_profiles_listed():
    assert set(PROFILES) >= {"random-tree", "star", "caterpillar", "spider-shaped", "bounded-diameter"}
