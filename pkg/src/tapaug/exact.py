"""Exact desk-scale solvers: set-cover DP over tree edges, plus the branch solver.

The branch solver follows the reduction used for the ``4^k`` bound: restrict
to the branch, complete the costs metrically, shortcut degree-2 nodes (leaving
at most ``2k - 1`` tree edges) and run the subset DP.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .caps import get_cap
from .core import (
    Branch,
    ContractionResult,
    Link,
    TapInstance,
    restrict_to_edges,
    shadow_complete,
)
from .errors import CapExceededError, InfeasibleError


@dataclass(frozen=True)
class ExactSolution:
    links: tuple[int, ...]
    cost: int


def solve_exact_subset(
    instance: TapInstance, edges: Iterable[int], cap: int | None = None
) -> ExactSolution:
    """Minimum-cost link set covering ``edges``; other tree edges are free.

    Among optimal covers the lexicographically smallest id set is returned.
    Optimal covers are irredundant (costs are positive), so comparing sorted
    id tuples reduces to preferring the set holding the smallest id of the
    symmetric difference, which is additive in ``2**(L - 1 - id)``.
    """
    targets = sorted(set(edges))
    cap = get_cap("dp") if cap is None else cap
    if len(targets) > cap:
        raise CapExceededError(f"{len(targets)} tree edges exceed the DP cap {cap}")
    if not targets:
        return ExactSolution((), 0)
    bit = {f: i for i, f in enumerate(targets)}
    full = (1 << len(targets)) - 1
    nlinks = len(instance.links)
    by_bit: list[list[tuple[int, int, int, int]]] = [[] for _ in targets]
    for lid, covered in enumerate(instance.link_edges):
        m = 0
        for f in covered:
            if f in bit:
                m |= 1 << bit[f]
        if m:
            entry = (lid, m, instance.links[lid].cost, 1 << (nlinks - 1 - lid))
            for i in range(len(targets)):
                if m >> i & 1:
                    by_bit[i].append(entry)
    for i, options in enumerate(by_bit):
        if not options:
            raise InfeasibleError(f"tree edge {targets[i]} has no covering link")

    memo: dict[int, tuple[int, int, int]] = {full: (0, 0, -1)}

    def best(mask: int) -> tuple[int, int, int]:
        hit = memo.get(mask)
        if hit is not None:
            return hit
        low = (~mask & (mask + 1)).bit_length() - 1
        choice = None
        for lid, m, cost, weight in by_bit[low]:
            sub_cost, sub_neg, _ = best(mask | m)
            cand = (cost + sub_cost, sub_neg - weight, lid)
            if choice is None or cand[:2] < choice[:2]:
                choice = cand
        memo[mask] = choice
        return choice

    total, _, _ = best(0)
    chosen, mask = [], 0
    while mask != full:
        lid = memo[mask][2]
        chosen.append(lid)
        mask |= next(m for l, m, _, _ in by_bit[(~mask & (mask + 1)).bit_length() - 1] if l == lid)
    return ExactSolution(tuple(sorted(chosen)), total)


def solve_exact(instance: TapInstance, cap: int | None = None) -> ExactSolution:
    return solve_exact_subset(instance, instance.tree_edges, cap)


@dataclass(frozen=True)
class ShortcutResult:
    instance: TapInstance
    link_map: tuple[int, ...]  # new link id -> input link id
    merged: dict[int, tuple[int, ...]]  # new tree edge -> input tree edges


def shortcut_degree2(instance: TapInstance) -> ShortcutResult:
    """Drop every non-root node with exactly one child, merging its two tree edges.

    Links touching a dropped node are discarded; on a metric-complete instance
    some optimal cover avoids them, so the optimum is unchanged.
    """
    drop = {v for v in instance.tree_edges if len(instance.children[v]) == 1}
    parent, merged = {}, {}
    for v in instance.tree_edges:
        if v in drop:
            continue
        chain, p = [v], instance.parent[v]
        while p in drop:
            chain.append(p)
            p = instance.parent[p]
        parent[v] = p
        merged[v] = tuple(chain)
    links, link_map = [], []
    for lid, link in enumerate(instance.links):
        if link.u not in drop and link.v not in drop:
            links.append(link)
            link_map.append(lid)
    nodes = [v for v in instance.nodes if v not in drop]
    return ShortcutResult(TapInstance(nodes, instance.root, parent, links), tuple(link_map), merged)


def branch_subinstance(instance: TapInstance, branch: Branch) -> ContractionResult:
    """The branch as a stand-alone instance: every tree edge outside it contracted."""
    return restrict_to_edges(instance, branch.edges)


def solve_branch(instance: TapInstance, branch: Branch, cap: int | None = None) -> ExactSolution:
    """Optimal cover of a branch (its value is the right-hand side of the branch row)."""
    sub = branch_subinstance(instance, branch)
    if not sub.instance.is_feasible:
        raise InfeasibleError(f"branch {branch.edges} cannot be covered")
    completed = shadow_complete(sub.instance)
    short = shortcut_degree2(completed.instance)
    sol = solve_exact(short.instance, cap)
    sub_ids = completed.expand(short.link_map[i] for i in sol.links)
    ids = sub.original_links(sub_ids)
    cost = instance.cost_of(ids)
    if cost != sol.cost or not instance.covers(ids, branch.edges):
        raise AssertionError(f"branch expansion mismatch: {cost} vs {sol.cost}")
    return ExactSolution(tuple(sorted(ids)), cost)


def is_cover(instance: TapInstance, ids: Iterable[int], edges: Iterable[int] | None = None) -> bool:
    return instance.covers(ids, edges)


def with_extra_links(instance: TapInstance, extra: Iterable[Link]) -> TapInstance:
    return instance.with_links(tuple(instance.links) + tuple(extra))
