from fractions import Fraction

import pytest
from hypothesis import given, settings

from conftest import A, B, C, R, brute_force_opt, instances, path_ruv, star, walk_path
from tapaug.core import (
    Link,
    TapInstance,
    class_costs,
    classify_link,
    contract,
    cover_set,
    dump_instance,
    enumerate_branches,
    in_cut_polyhedron,
    instance_from_dict,
    load_instance,
    shadow_closure,
    shadow_complete,
    to_dot,
    up_vector,
)
from tapaug.errors import CapExceededError, InvalidInstanceError, MissingShadowLink
from tapaug.exact import solve_exact


def test_cover_set_star():
    inst = star()
    assert set(cover_set(inst, A)) == {0, 2}  # ab, ca
    assert set(cover_set(inst, B)) == {0, 1}


def test_cover_set_path():
    inst = path_ruv()
    assert cover_set(inst, 2) == (0,)
    assert cover_set(inst, 1) == (0,)


def test_uncovered_edge_marks_infeasible():
    inst = path_ruv(links=((0, 1),))
    assert cover_set(inst, 2) == ()
    assert not inst.is_feasible
    assert inst.uncovered_edges == (2,)


def test_cover_set_rejects_non_edge():
    with pytest.raises(InvalidInstanceError):
        cover_set(star(), R)


def test_classify_examples():
    assert classify_link(star(), 0).kind == "cross"
    assert not classify_link(star(), 0).up
    cls = classify_link(path_ruv(), 0)
    assert (cls.kind, cls.up) == ("r-edge", True)
    t = TapInstance([0, 1, 2, 3], 0, {1: 0, 2: 1, 3: 1}, [Link(2, 3)])
    cls = classify_link(t, 0)
    assert (cls.kind, cls.up) == ("in", False)


def test_class_costs_star():
    costs = class_costs(star(), {0: Fraction(1, 2), 1: Fraction(1, 2), 2: Fraction(1, 2)})
    assert costs == {"in": 0, "cross": Fraction(3, 2), "r-edge": 0}


@pytest.mark.parametrize(
    "kwargs, message",
    [
        (dict(nodes=[0, 1], root=0, parent={1: 0}, links=[Link(0, 1, 0)]), "positive"),
        (dict(nodes=[0, 1, 2], root=0, parent={1: 2, 2: 1}, links=[]), "cycle|root|reach|parent"),
        (dict(nodes=[0, 1], root=0, parent={1: 0}, links=[Link(1, 1)]), None),
    ],
)
def test_invalid_instances_rejected(kwargs, message):
    with pytest.raises(InvalidInstanceError, match=message):
        TapInstance(**kwargs)


def test_fractional_cost_rejected():
    with pytest.raises(InvalidInstanceError):
        TapInstance([0, 1], 0, {1: 0}, [Link(0, 1, 1.5)])


def test_contract_everything_and_nothing():
    inst = star()
    whole = contract(inst, inst.tree_edges)
    assert whole.instance.nodes == (R,)
    assert whole.instance.links == ()
    same = contract(inst, [])
    assert same.node_map == {v: v for v in inst.nodes}
    assert same.link_map == (0, 1, 2)


def test_contract_star_two_edges():
    res = contract(star(), {A, B})
    # ab is a loop and vanishes, bc and ca become parallel r-links at c
    assert res.link_map == (1, 2)
    assert {l.ends for l in res.instance.links} == {(R, C)}
    assert res.node_map[A] == res.node_map[B] == R


def test_shadow_complete_path():
    inst = path_ruv(links=((0, 1), (1, 2)))
    done = shadow_complete(inst)
    costs = {l.ends: l.cost for l in done.instance.links}
    assert costs[(0, 2)] == 2
    assert done.expand([list(costs).index((0, 2))]) == {0, 1}


def test_shadow_complete_star_keeps_unit_triangle():
    done = shadow_complete(star())
    costs = {l.ends: l.cost for l in done.instance.links}
    assert costs[(A, B)] == costs[(B, C)] == costs[(A, C)] == 1


def test_shadow_closure_stays_unit():
    inst = path_ruv(links=((0, 2),))
    done = shadow_closure(inst)
    assert all(l.cost == 1 for l in done.instance.links)
    assert {l.ends for l in done.instance.links} == {(0, 1), (0, 2), (1, 2)}


@settings(max_examples=40, deadline=None)
@given(instances(max_n=6, max_cost=3, max_links=5))
def test_shadow_complete_preserves_optimum(inst):
    assert solve_exact(shadow_complete(inst).instance).cost == solve_exact(inst).cost


def test_branches_star_k2():
    got = {b.edges for b in enumerate_branches(star(), 2)}
    assert got == {(A,), (B,), (C,)}


def test_branches_k1_empty():
    assert enumerate_branches(star(), 1) == []


def test_branches_path_k3():
    got = {b.edges for b in enumerate_branches(path_ruv(), 3)}
    # {ru} alone is a branch as well: the subtree {u} is full when u counts as its leaf
    assert got == {(2,), (1, 2), (1,)}


def test_branch_cap():
    with pytest.raises(CapExceededError):
        enumerate_branches(star(), 4, cap=2)


def test_up_vector_star():
    x = {0: Fraction(1, 2)}
    t = star().with_links(list(star().links) + [Link(A, R), Link(B, R)])
    out = up_vector(t, x, [0])
    assert out[0] == 0 and out[3] == Fraction(1, 2) and out[4] == Fraction(1, 2)
    assert up_vector(t, x, []) == x


def test_up_vector_missing_shadow():
    with pytest.raises(MissingShadowLink):
        up_vector(star(), {0: Fraction(1)}, [0])


@settings(max_examples=50, deadline=None)
@given(instances(max_n=7))
def test_cover_sets_match_path_walk(inst):
    for f in inst.tree_edges:
        expected = {i for i, l in enumerate(inst.links) if f in walk_path(inst, l.u, l.v)}
        assert set(cover_set(inst, f)) == expected


@settings(max_examples=50, deadline=None)
@given(instances(max_n=7))
def test_classes_partition_links(inst):
    kinds = [classify_link(inst, i) for i in range(len(inst.links))]
    assert all(k.kind in ("cross", "in", "r-edge") for k in kinds)
    assert not any(k.up and k.kind == "cross" for k in kinds)


@settings(max_examples=50, deadline=None)
@given(instances(max_n=7))
def test_up_vector_keeps_cut_feasibility(inst):
    closed = shadow_closure(inst).instance
    x = {i: Fraction(1) for i in range(len(closed.links))}
    assert in_cut_polyhedron(closed, up_vector(closed, x, range(len(closed.links))))


@settings(max_examples=40, deadline=None)
@given(instances(max_n=7, max_cost=3, max_links=7))
def test_contract_then_expand_is_cover(inst):
    edges = [f for f in inst.tree_edges if f % 2 == 0]
    res = contract(inst, edges)
    sol = solve_exact(res.instance)
    back = res.original_links(sol.links)
    assert inst.covers(back, [f for f in inst.tree_edges if f not in edges])
    assert brute_force_opt(res.instance) == sol.cost


def test_json_round_trip(tmp_path):
    inst = star()
    path = tmp_path / "star.json"
    dump_instance(inst, path)
    back = load_instance(path)
    assert back.parent == inst.parent and back.links == inst.links


def test_json_missing_field():
    with pytest.raises(InvalidInstanceError):
        instance_from_dict({"nodes": [0], "root": 0})


def test_dot_export():
    dot = to_dot(star(), [0])
    assert "style=bold" in dot and "style=dashed" in dot and 'color="red"' in dot


def test_diameter_counts_edges():
    assert star().diameter() == 2
    assert path_ruv().diameter() == 2
