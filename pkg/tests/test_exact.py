import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import A, brute_force_opt, caterpillar, instances, path_ruv, star
from tapaug.core import Link, TapInstance, enumerate_branches, shadow_complete
from tapaug.errors import CapExceededError
from tapaug.exact import shortcut_degree2, solve_branch, solve_exact, solve_exact_subset


def test_star_optimum_two():
    sol = solve_exact(star())
    assert sol.cost == 2 == brute_force_opt(star())
    # lexicographically smallest optimal id set
    assert sol.links == (0, 1)


def test_path_one_link():
    assert solve_exact(path_ruv()).cost == 1


def test_single_edge_cost_five():
    inst = TapInstance([0, 1], 0, {1: 0}, [Link(0, 1, 5)])
    assert solve_exact(inst).cost == 5


def test_subset_examples():
    assert solve_exact_subset(star(), []).cost == 0
    assert solve_exact_subset(star(), [A]).cost == 1
    assert solve_exact_subset(star(), star().tree_edges) == solve_exact(star())


def test_dp_cap():
    with pytest.raises(CapExceededError):
        solve_exact(caterpillar(6), cap=5)


def test_shortcut_path_to_single_edge():
    done = shadow_complete(path_ruv())
    short = shortcut_degree2(done.instance)
    assert len(short.instance.tree_edges) == 1
    assert solve_exact(short.instance).cost == solve_exact(path_ruv()).cost


def test_shortcut_fixed_point():
    short = shortcut_degree2(star())
    assert short.instance.parent == star().parent
    assert short.link_map == (0, 1, 2)


def test_shortcut_caterpillar_bound():
    # leaves 4, 5, 6; nodes 2 and 3 have a single child
    inst = TapInstance(
        range(7), 0, {1: 0, 2: 1, 3: 2, 4: 3, 5: 1, 6: 0}, [Link(4, 5), Link(5, 6), Link(4, 0)]
    )
    short = shortcut_degree2(shadow_complete(inst).instance)
    assert len(inst.leaves) == 3
    assert len(short.instance.tree_edges) <= 5
    assert solve_exact(short.instance).cost == solve_exact(inst).cost


def test_branch_examples():
    branches = {b.edges: b for b in enumerate_branches(star(), 4)}
    assert solve_branch(star(), branches[(A,)]).cost == 1
    whole = branches[(1, 2, 3)]
    assert solve_branch(star(), whole).cost == 2


@settings(max_examples=60, deadline=None)
@given(instances(max_n=7, max_cost=4, max_links=7))
def test_exact_matches_brute_force(inst):
    assert solve_exact(inst).cost == brute_force_opt(inst)


@settings(max_examples=40, deadline=None)
@given(instances(max_n=7, max_cost=4, max_links=7), st.data())
def test_subset_monotone_and_brute(inst, data):
    big = data.draw(st.sets(st.sampled_from(inst.tree_edges)))
    small = data.draw(st.sets(st.sampled_from(sorted(big)))) if big else set()
    a, b = solve_exact_subset(inst, small), solve_exact_subset(inst, big)
    assert a.cost <= b.cost
    assert b.cost == brute_force_opt(inst, big)
    assert inst.covers(b.links, big)


@settings(max_examples=40, deadline=None)
@given(instances(max_n=8, max_cost=3, max_links=8))
def test_branch_equals_subset(inst):
    for br in enumerate_branches(inst, 4):
        assert solve_branch(inst, br).cost == solve_exact_subset(inst, br.edges).cost


@settings(max_examples=30, deadline=None)
@given(instances(max_n=7, max_cost=3, max_links=6))
def test_shortcut_preserves_optimum(inst):
    done = shadow_complete(inst).instance
    assert solve_exact(shortcut_degree2(done).instance).cost == solve_exact(inst).cost
