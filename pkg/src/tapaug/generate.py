"""Seeded random instance profiles.

Profiles: ``random-tree``, ``star``, ``caterpillar``, ``spider-shaped`` and
``bounded-diameter(d)``.  Node 0 is always the root and ids are 0..n-1.
"""
from __future__ import annotations

import random
import re

from .core import Link, TapInstance

PROFILES = ("random-tree", "star", "caterpillar", "spider-shaped", "bounded-diameter")


def parse_profile(profile: str) -> tuple[str, int | None]:
    m = re.fullmatch(r"\s*([a-z-]+)\s*(?:\(\s*(\d+)\s*\))?\s*", profile)
    if not m or m.group(1) not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    arg = int(m.group(2)) if m.group(2) else None
    if m.group(1) == "bounded-diameter" and arg is None:
        raise ValueError("bounded-diameter needs a diameter, e.g. bounded-diameter(5)")
    return m.group(1), arg


def _random_tree(rng: random.Random, n: int) -> dict[int, int]:
    return {v: rng.randrange(v) for v in range(1, n)}


def _star_tree(n: int) -> dict[int, int]:
    return {v: 0 for v in range(1, n)}


def _caterpillar_tree(rng: random.Random, n: int) -> dict[int, int]:
    spine = max(2, n // 2)
    parent = {v: v - 1 for v in range(1, spine)}
    for v in range(spine, n):
        parent[v] = rng.randrange(spine)
    return parent


def _diameter_tree(rng: random.Random, n: int, d: int) -> dict[int, int]:
    """Random tree of diameter at most ``d`` grown around a center node or edge."""
    if d < 1:
        raise ValueError("diameter bound must be at least 1")
    parent: dict[int, int] = {}
    depth = {0: 0}
    side = {0: 0}
    if d % 2 == 0:
        reach = {0: d // 2}
    else:
        parent[1] = 0
        depth[1] = 0  # depth measured from its own side's center
        side[1] = 1
        reach = {0: (d - 1) // 2, 1: (d - 1) // 2}
    for v in range(len(depth), n):
        options = [u for u in depth if depth[u] < reach[side[u]]]
        u = rng.choice(options)
        parent[v] = u
        depth[v] = depth[u] + 1
        side[v] = side[u]
    return parent


def _ancestors(parent: dict[int, int], v: int) -> list[int]:
    out = []
    while v in parent:
        v = parent[v]
        out.append(v)
    return out


def generate(
    seed: int,
    profile: str = "random-tree",
    n: int = 10,
    max_cost: int = 1,
    links: int | None = None,
) -> TapInstance:
    """A feasible instance; links are added until every tree edge is coverable."""
    kind, arg = parse_profile(profile)
    rng = random.Random(f"{seed}:{profile}:{n}:{max_cost}:{links}")
    if n < 2:
        raise ValueError("need at least two nodes")
    if kind == "star":
        parent = _star_tree(n)
    elif kind == "caterpillar":
        parent = _caterpillar_tree(rng, n)
    elif kind == "bounded-diameter":
        parent = _diameter_tree(rng, n, arg)
    else:
        parent = _random_tree(rng, n)
    anc = {v: _ancestors(parent, v) for v in range(n)}

    def is_up(u, v):
        return u in anc[v] or v in anc[u]

    def is_cross(u, v):
        return not is_up(u, v) and not (set(anc[u]) & set(anc[v])) - {0}

    def cost():
        return rng.randint(1, max_cost)

    m = links if links is not None else rng.randint(n - 1, 2 * n)
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    if kind == "spider-shaped":
        pairs = [p for p in pairs if is_up(*p) or is_cross(*p)]
    rng.shuffle(pairs)
    chosen = [Link(u, v, cost()) for u, v in pairs[:m]]
    if kind == "star" and n == 4 and links is None and max_cost == 1:
        chosen = [Link(1, 2), Link(2, 3), Link(3, 1)]
    inst = TapInstance(range(n), 0, parent, chosen)
    for v in inst.uncovered_edges:
        if inst.covers(range(len(inst.links)), [v]):
            continue
        chosen.append(Link(v, rng.choice(anc[v]), cost()))
        inst = TapInstance(range(n), 0, parent, chosen)
    return inst
