import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from conftest import A, B, C, caterpillar, instances, path_ruv, star
from tapaug.core import Link, TapInstance, classify_link, in_cut_polyhedron
from tapaug.errors import InfeasibleError, LpInfeasibleError
from tapaug.exact import solve_exact
from tapaug.generate import generate
from tapaug.lp import (
    LpModel,
    Row,
    build_bunch3_lp,
    build_cut_lp,
    build_kbranch_lp,
    bunches3,
    check_half_integral,
    cross_cycle_audit,
    eliminate_cross_cycles,
    is_bunch,
    is_extreme_point,
    solve_lp,
    solve_uplink_cover,
)

HALF = Fraction(1, 2)


def vertex_enumeration(model: LpModel) -> Fraction:
    """Best vertex of a tiny box-constrained model: every n-subset of tight constraints."""
    n = model.n
    planes = [(dict(r.coeffs), r.rhs) for r in model.rows]
    planes += [({j: Fraction(1)}, Fraction(0)) for j in range(n)]
    planes += [({j: Fraction(1)}, Fraction(1)) for j in range(n)]
    best = None
    for combo in itertools.combinations(planes, n):
        # Gauss-Jordan over rationals
        m = [[c.get(j, Fraction(0)) for j in range(n)] + [rhs] for c, rhs in combo]
        ok = True
        for col in range(n):
            piv = next((i for i in range(col, n) if m[i][col] != 0), None)
            if piv is None:
                ok = False
                break
            m[col], m[piv] = m[piv], m[col]
            for i in range(n):
                if i != col and m[i][col]:
                    f = m[i][col] / m[col][col]
                    m[i] = [a - f * b for a, b in zip(m[i], m[col])]
        if not ok:
            continue
        x = {j: m[j][n] / m[j][j] for j in range(n)}
        if model.is_feasible_point(x):
            val = model.objective(x)
            best = val if best is None or val < best else best
    return best


def scipy_value(model: LpModel) -> float:
    a = [[-float(dict(r.coeffs).get(j, 0)) for j in range(model.n)] for r in model.rows]
    b = [-float(r.rhs) for r in model.rows]
    res = linprog([float(c) for c in model.costs], A_ub=a or None, b_ub=b or None, bounds=(0, 1), method="highs")
    assert res.status == 0
    return res.fun


def test_star_cut_lp():
    model = build_cut_lp(star())
    assert len(model.rows) == 3
    res = solve_lp(model)
    assert res.objective == Fraction(3, 2)
    assert res.x == {0: HALF, 1: HALF, 2: HALF}
    assert vertex_enumeration(model) == Fraction(3, 2)
    assert is_extreme_point(model, res.x)


def test_strong_duality_star():
    model = build_cut_lp(star())
    res = solve_lp(model)
    dual_obj = sum(y * r.rhs for y, r in zip(res.duals, model.rows)) - sum(res.upper_duals.values())
    assert dual_obj == res.objective
    assert res.duals == (HALF, HALF, HALF)


def test_path_cut_lp():
    res = solve_lp(build_cut_lp(path_ruv()))
    assert res.objective == 1 and res.x == {0: 1}


def test_zero_demands():
    model = build_cut_lp(star(), {A: 0, B: 0, C: 0})
    assert model.rows == []
    assert solve_lp(model).objective == 0


def test_star_demands_two_one_one():
    model = build_cut_lp(star(), {A: 2, B: 1, C: 1})
    assert solve_lp(model).objective == 2
    assert vertex_enumeration(model) == 2


def test_uncoverable_row():
    inst = path_ruv(links=((0, 1),))
    with pytest.raises(InfeasibleError):
        build_cut_lp(inst)


def test_infeasible_model():
    model = LpModel((Fraction(1),))
    model.add_row(Row.make({0: 1}, 2))
    with pytest.raises(LpInfeasibleError):
        solve_lp(model)


def test_dump_format():
    text = build_cut_lp(star()).dump()
    assert "1/1*x_0 + 1/1*x_2 >= 1/1" in text


def test_kbranch_k1_is_cut():
    a, b = build_kbranch_lp(star(), 1), build_cut_lp(star())
    assert a.rows == b.rows


def test_kbranch_star_k2_rows():
    model = build_kbranch_lp(star(), 2)
    branch_rows = [r for r in model.rows if r.kind == "branch"]
    assert sorted((r.coeffs, r.rhs) for r in branch_rows) == sorted(
        (r.coeffs, r.rhs) for r in build_cut_lp(star()).rows
    )


def test_kbranch_big_k_is_exact():
    for seed in range(10):
        inst = generate(seed, "random-tree", n=8, max_cost=3)
        k = len(inst.leaves) + 1
        assert solve_lp(build_kbranch_lp(inst, k)).objective == solve_exact(inst).cost


def test_bunch_examples():
    assert is_bunch(star(), (A, B, C))
    assert bunches3(star()) == [(A, B, C)]
    path3 = TapInstance(range(4), 0, {1: 0, 2: 1, 3: 2}, [Link(0, 3)])
    assert bunches3(path3) == []
    assert not is_bunch(star(), (A, B))
    model = build_bunch3_lp(star())
    assert [r.rhs for r in model.rows if r.kind != "cut"] == [2]
    assert solve_lp(model).objective == 2 == solve_exact(star()).cost


def test_half_integral_report():
    assert check_half_integral(star(), {0: HALF, 1: HALF, 2: HALF}).ok
    rep = check_half_integral(star(), {0: Fraction(1, 3)})
    assert rep.violations == ((0, Fraction(1, 3)),)
    rep = check_half_integral(path_ruv(), {0: HALF})
    assert rep.root_violations == ((0, HALF),)


def test_cross_cycle_audit_examples():
    rep = cross_cycle_audit(star(), solve_lp(build_cut_lp(star())).x)
    assert rep.ok and rep.components == 1 and len(rep.cycles) == 1 and len(rep.cycles[0]) == 3
    forest = cross_cycle_audit(star(), {0: Fraction(1), 1: Fraction(1)})
    assert forest.ok and forest.cycles == ()
    sq = TapInstance(range(5), 0, {v: 0 for v in range(1, 5)}, [Link(1, 2), Link(2, 3), Link(3, 4), Link(4, 1)])
    bad = cross_cycle_audit(sq, {i: HALF for i in range(4)})
    assert not bad.ok and len(bad.even_cycles) == 1


def test_eliminate_star_triangle():
    rep = eliminate_cross_cycles(star(), {0: HALF, 1: HALF, 2: HALF})
    assert rep.x == {0: 0, 1: 1, 2: 1}
    assert in_cut_polyhedron(star(), rep.x)
    assert rep.cross_after == 2 <= Fraction(4, 3) * Fraction(3, 2)
    assert rep.objective_increase == HALF
    forest = {0: Fraction(1), 1: Fraction(1)}
    assert eliminate_cross_cycles(star(), forest).x == forest


def test_uplink_cover_examples():
    inst = path_ruv(links=((2, 1), (2, 0), (1, 0)))
    res = solve_uplink_cover(inst, [1, 2])
    assert (res.cost, res.links, res.fallback) == (1, (1,), False)
    assert solve_uplink_cover(inst, []).cost == 0


@settings(max_examples=40, deadline=None)
@given(instances(max_n=7, max_cost=4, max_links=8))
def test_cut_lp_matches_scipy(inst):
    model = build_cut_lp(inst)
    res = solve_lp(model)
    assert model.is_feasible_point(res.x)
    assert abs(float(res.objective) - scipy_value(model)) < 1e-7
    assert is_extreme_point(model, res.x)


@settings(max_examples=25, deadline=None)
@given(instances(max_n=7, max_cost=3, max_links=7))
def test_bunch_and_kbranch_match_scipy(inst):
    for model in (build_bunch3_lp(inst), build_kbranch_lp(inst, 3)):
        assert abs(float(solve_lp(model).objective) - scipy_value(model)) < 1e-7


@settings(max_examples=30, deadline=None)
@given(instances(max_n=8, max_cost=3, max_links=8), st.integers(2, 5))
def test_relaxation_sandwich(inst, k):
    cut = solve_lp(build_cut_lp(inst)).objective
    kb = solve_lp(build_kbranch_lp(inst, k)).objective
    b3 = solve_lp(build_bunch3_lp(inst)).objective
    opt = solve_exact(inst).cost
    assert cut <= kb <= opt
    assert cut <= b3 <= opt


@settings(max_examples=30, deadline=None)
@given(instances(max_n=8, max_links=9))
def test_cut_extreme_points_pass_audit(inst):
    x = solve_lp(build_cut_lp(inst)).x
    assert cross_cycle_audit(inst, x).ok
    rep = eliminate_cross_cycles(inst, x)
    assert in_cut_polyhedron(inst, rep.x)
    assert cross_cycle_audit(inst, rep.x).cycles == ()
    assert rep.objective_increase <= rep.cross_before / 3


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 9))
def test_spider_points_half_integral(seed, n):
    inst = generate(seed, "spider-shaped", n=n, max_cost=3)
    classes = [classify_link(inst, i) for i in range(len(inst.links))]
    assert not any(c.kind == "in" and not c.up for c in classes)
    assert check_half_integral(inst, solve_lp(build_cut_lp(inst)).x).ok


def test_caterpillar_cut_lp_vertex():
    inst = caterpillar(4)
    model = build_cut_lp(inst)
    res = solve_lp(model)
    assert is_extreme_point(model, res.x)
    assert res.objective == vertex_enumeration(model)
