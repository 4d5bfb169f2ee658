from __future__ import annotations

import itertools
from fractions import Fraction

import pytest
from hypothesis import strategies as st

from tapaug.core import Link, TapInstance

R, A, B, C = 0, 1, 2, 3


def star() -> TapInstance:
    """r with leaves a, b, c and the triangle links ab, bc, ca."""
    return TapInstance([R, A, B, C], R, {A: R, B: R, C: R}, [Link(A, B), Link(B, C), Link(C, A)])


def path_ruv(links=((0, 2),)) -> TapInstance:
    """Path r(0) - u(1) - v(2)."""
    return TapInstance([0, 1, 2], 0, {1: 0, 2: 1}, [Link(*l) for l in links])


def caterpillar(spine: int = 4, unit: bool = True) -> TapInstance:
    """Spine 0..spine-1 with one pendant leaf per spine node below the root."""
    parent = {v: v - 1 for v in range(1, spine)}
    nxt = spine
    leaves = []
    for s in range(1, spine):
        parent[nxt] = s
        leaves.append(nxt)
        nxt += 1
    tips = leaves + [spine - 1]
    links = [Link(a, b) for a, b in zip(tips, tips[1:])] + [Link(tips[0], 0)]
    return TapInstance(range(nxt), 0, parent, links)


def walk_path(instance: TapInstance, u: int, v: int) -> set[int]:
    """Tree edges between u and v, by climbing parents (independent of core)."""
    def chain(x):
        out = [x]
        while x != instance.root:
            x = instance.parent[x]
            out.append(x)
        return out

    cu, cv = chain(u), chain(v)
    common = next(x for x in cu if x in set(cv))
    return set(cu[: cu.index(common)]) | set(cv[: cv.index(common)])


def brute_force_opt(instance: TapInstance, edges=None):
    """Minimum cover cost by enumerating link subsets; None if infeasible."""
    need = set(instance.tree_edges if edges is None else edges)
    paths = [walk_path(instance, l.u, l.v) for l in instance.links]
    best = None
    for r in range(len(instance.links) + 1):
        for combo in itertools.combinations(range(len(instance.links)), r):
            covered = set().union(*(paths[i] for i in combo)) if combo else set()
            if need <= covered:
                cost = sum(instance.links[i].cost for i in combo)
                if best is None or cost < best:
                    best = cost
    return best


@st.composite
def instances(draw, min_n=2, max_n=8, max_cost=1, max_links=10):
    """Random feasible instance; uncovered edges get a link to the root."""
    n = draw(st.integers(min_n, max_n))
    parent = {v: draw(st.integers(0, v - 1)) for v in range(1, n)}
    pairs = st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda p: p[0] != p[1])
    raw = draw(st.lists(pairs, max_size=max_links))
    links = [Link(u, v, draw(st.integers(1, max_cost))) for u, v in raw]
    inst = TapInstance(range(n), 0, parent, links)
    for f in inst.uncovered_edges:
        links.append(Link(f, 0, draw(st.integers(1, max_cost))))
    return TapInstance(range(n), 0, parent, links)


def frac_map(values) -> dict[int, Fraction]:
    return {i: Fraction(v) for i, v in enumerate(values)}


@pytest.fixture
def star_instance():
    return star()
