"""Instance model for tree augmentation.

A :class:`TapInstance` is a rooted tree plus a list of weighted links.  Tree
edges are named by their child endpoint, so ``f == v`` means the edge between
``v`` and ``parent[v]``.  Links are addressed by their position in
``instance.links``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from numbers import Integral
from typing import Iterable, Mapping

from .caps import get_cap
from .errors import (
    CapExceededError,
    InfeasibleError,
    InvalidInstanceError,
    MissingShadowLink,
)


@dataclass(frozen=True)
class Link:
    u: int
    v: int
    cost: int = 1

    @property
    def ends(self) -> tuple[int, int]:
        return (self.u, self.v) if self.u <= self.v else (self.v, self.u)


@dataclass(frozen=True)
class LinkClass:
    kind: str  # "cross", "in" or "r-edge"
    up: bool


@dataclass(frozen=True, eq=False)
class TapInstance:
    nodes: tuple[int, ...]
    root: int
    parent: Mapping[int, int]
    links: tuple[Link, ...]

    def __init__(self, nodes, root, parent, links):
        object.__setattr__(self, "nodes", tuple(sorted(nodes)))
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "parent", dict(parent))
        object.__setattr__(self, "links", tuple(_as_link(l) for l in links))
        self._validate()

    def _validate(self):
        nodes = set(self.nodes)
        if len(nodes) != len(self.nodes):
            raise InvalidInstanceError("duplicate node ids")
        if self.root not in nodes:
            raise InvalidInstanceError(f"root {self.root} is not a node")
        if set(self.parent) != nodes - {self.root}:
            raise InvalidInstanceError("parent map must cover exactly the non-root nodes")
        for v, p in self.parent.items():
            if p not in nodes:
                raise InvalidInstanceError(f"parent {p} of {v} is not a node")
        for v in self.parent:
            seen = set()
            while v != self.root:
                if v in seen:
                    raise InvalidInstanceError("parent map has a cycle")
                seen.add(v)
                v = self.parent[v]
        for link in self.links:
            if link.u not in nodes or link.v not in nodes:
                raise InvalidInstanceError(f"link {link} has an unknown endpoint")
            if link.u == link.v:
                raise InvalidInstanceError(f"link {link} is a loop")
            if isinstance(link.cost, bool) or not isinstance(link.cost, Integral):
                raise InvalidInstanceError(f"link cost must be an integer, got {link.cost!r}")
            if link.cost < 1:
                raise InvalidInstanceError(f"link cost must be positive, got {link.cost}")

    # ---- tree structure -------------------------------------------------

    @cached_property
    def children(self) -> dict[int, tuple[int, ...]]:
        kids: dict[int, list[int]] = {v: [] for v in self.nodes}
        for v, p in self.parent.items():
            kids[p].append(v)
        return {v: tuple(sorted(c)) for v, c in kids.items()}

    @cached_property
    def depth(self) -> dict[int, int]:
        depth = {self.root: 0}
        for v in self.preorder:
            for c in self.children[v]:
                depth[c] = depth[v] + 1
        return depth

    @cached_property
    def preorder(self) -> tuple[int, ...]:
        out, stack = [], [self.root]
        while stack:
            v = stack.pop()
            out.append(v)
            stack.extend(reversed(self.children[v]))
        return tuple(out)

    @cached_property
    def postorder(self) -> tuple[int, ...]:
        out = []

        def visit(v):
            for c in self.children[v]:
                visit(c)
            out.append(v)

        visit(self.root)
        return tuple(out)

    @cached_property
    def tree_edges(self) -> tuple[int, ...]:
        return tuple(v for v in self.nodes if v != self.root)

    @cached_property
    def leaves(self) -> tuple[int, ...]:
        return tuple(v for v in self.nodes if v != self.root and not self.children[v])

    @cached_property
    def _subtree(self) -> dict[int, frozenset[int]]:
        sub: dict[int, frozenset[int]] = {}
        for v in self.postorder:
            sub[v] = frozenset([v]).union(*(sub[c] for c in self.children[v]))
        return sub

    def subtree(self, v: int) -> frozenset[int]:
        """Node set of the complete rooted subtree at ``v``."""
        return self._subtree[v]

    def subtree_edges(self, v: int) -> frozenset[int]:
        return self._subtree[v] - {v}

    def is_ancestor(self, a: int, d: int) -> bool:
        """True if ``a`` is an ancestor of ``d`` (or ``a == d``)."""
        return a in self._ancestors[d]

    @cached_property
    def _ancestors(self) -> dict[int, frozenset[int]]:
        anc = {self.root: frozenset([self.root])}
        for v in self.preorder[1:]:
            anc[v] = anc[self.parent[v]] | {v}
        return anc

    def lca(self, u: int, v: int) -> int:
        depth = self.depth
        while depth[u] > depth[v]:
            u = self.parent[u]
        while depth[v] > depth[u]:
            v = self.parent[v]
        while u != v:
            u, v = self.parent[u], self.parent[v]
        return u

    def path_edges(self, u: int, v: int) -> frozenset[int]:
        """Tree edges on the u-v path."""
        a = self.lca(u, v)
        out = []
        for w in (u, v):
            while w != a:
                out.append(w)
                w = self.parent[w]
        return frozenset(out)

    def path_nodes(self, u: int, v: int) -> list[int]:
        """Nodes of the u-v path, in order from u to v."""
        a = self.lca(u, v)
        left, right = [], []
        while u != a:
            left.append(u)
            u = self.parent[u]
        while v != a:
            right.append(v)
            v = self.parent[v]
        return left + [a] + right[::-1]

    def diameter(self) -> int:
        best = 0
        height = {}
        for v in self.postorder:
            hs = sorted((height[c] + 1 for c in self.children[v]), reverse=True)
            height[v] = hs[0] if hs else 0
            best = max(best, sum(hs[:2]))
        return best

    # ---- links ----------------------------------------------------------

    @cached_property
    def edge_bit(self) -> dict[int, int]:
        return {f: i for i, f in enumerate(self.tree_edges)}

    @cached_property
    def link_edges(self) -> tuple[frozenset[int], ...]:
        return tuple(self.path_edges(l.u, l.v) for l in self.links)

    @cached_property
    def link_masks(self) -> tuple[int, ...]:
        bit = self.edge_bit
        return tuple(sum(1 << bit[f] for f in edges) for edges in self.link_edges)

    @cached_property
    def _psi(self) -> dict[int, tuple[int, ...]]:
        psi: dict[int, list[int]] = {f: [] for f in self.tree_edges}
        for lid, edges in enumerate(self.link_edges):
            for f in edges:
                psi[f].append(lid)
        return {f: tuple(ids) for f, ids in psi.items()}

    @cached_property
    def links_by_ends(self) -> dict[tuple[int, int], tuple[int, ...]]:
        table: dict[tuple[int, int], list[int]] = {}
        for lid, link in enumerate(self.links):
            table.setdefault(link.ends, []).append(lid)
        return {k: tuple(v) for k, v in table.items()}

    def cheapest_link(self, u: int, v: int) -> int | None:
        ids = self.links_by_ends.get((min(u, v), max(u, v)))
        if not ids:
            return None
        return min(ids, key=lambda i: (self.links[i].cost, i))

    @cached_property
    def max_cost(self) -> int:
        return max((l.cost for l in self.links), default=0)

    @cached_property
    def is_unit(self) -> bool:
        return all(l.cost == 1 for l in self.links)

    @cached_property
    def uncovered_edges(self) -> tuple[int, ...]:
        return tuple(f for f in self.tree_edges if not self._psi[f])

    @property
    def is_feasible(self) -> bool:
        return not self.uncovered_edges

    def cost_of(self, link_ids: Iterable[int]) -> int:
        return sum(self.links[i].cost for i in set(link_ids))

    def covers(self, link_ids: Iterable[int], edges: Iterable[int] | None = None) -> bool:
        covered = 0
        for i in set(link_ids):
            covered |= self.link_masks[i]
        need = self.edge_mask(self.tree_edges if edges is None else edges)
        return need & ~covered == 0

    def edge_mask(self, edges: Iterable[int]) -> int:
        bit = self.edge_bit
        return sum(1 << bit[f] for f in set(edges))

    def with_links(self, links: Iterable[Link]) -> "TapInstance":
        return TapInstance(self.nodes, self.root, self.parent, tuple(links))

    def __repr__(self):
        return f"TapInstance(n={len(self.nodes)}, root={self.root}, links={len(self.links)})"


def _as_link(obj) -> Link:
    if isinstance(obj, Link):
        return obj
    if isinstance(obj, Mapping):
        return Link(obj["u"], obj["v"], obj.get("cost", 1))
    u, v, *rest = obj
    return Link(u, v, rest[0] if rest else 1)


# ---- covering sets and classification -----------------------------------


def cover_set(instance: TapInstance, f: int) -> tuple[int, ...]:
    """Ids of the links whose tree path contains tree edge ``f``."""
    if f not in instance.edge_bit:
        raise InvalidInstanceError(f"{f} is not a tree edge")
    return instance._psi[f]


def cover_set_of(instance: TapInstance, edges: Iterable[int]) -> tuple[int, ...]:
    mask = instance.edge_mask(edges)
    return tuple(i for i, m in enumerate(instance.link_masks) if m & mask)


def classify_link(instance: TapInstance, link: int | Link) -> LinkClass:
    if not isinstance(link, Link):
        link = instance.links[link]
    r = instance.root
    a = instance.lca(link.u, link.v)
    up = a in (link.u, link.v)
    if r in (link.u, link.v):
        kind = "r-edge"
    elif a == r:
        kind = "cross"
    else:
        kind = "in"
    return LinkClass(kind, up)


def link_classes(instance: TapInstance) -> tuple[LinkClass, ...]:
    return tuple(classify_link(instance, l) for l in instance.links)


def class_costs(instance: TapInstance, x: Mapping[int, Fraction]) -> dict[str, Fraction]:
    """Fractional cost of in-, cross- and r-links under ``x``."""
    out = {"in": Fraction(0), "cross": Fraction(0), "r-edge": Fraction(0)}
    for lid, val in x.items():
        if val:
            kind = classify_link(instance, lid).kind
            out[kind] += instance.links[lid].cost * Fraction(val)
    return out


# ---- contraction --------------------------------------------------------


@dataclass(frozen=True)
class ContractionResult:
    instance: TapInstance
    node_map: dict[int, int]  # original node -> contracted node
    link_map: tuple[int, ...]  # contracted link id -> original link id

    def original_links(self, ids: Iterable[int]) -> set[int]:
        return {self.link_map[i] for i in ids}


def contract(instance: TapInstance, edges: Iterable[int]) -> ContractionResult:
    """Contract the given tree edges.

    Each contracted component is named after its topmost node, so surviving
    tree edges keep their child id.  Loops are dropped, parallel links kept.
    """
    edges = set(edges)
    bad = edges - set(instance.tree_edges)
    if bad:
        raise InvalidInstanceError(f"not tree edges: {sorted(bad)}")
    rep: dict[int, int] = {}
    for v in instance.preorder:
        rep[v] = rep[instance.parent[v]] if v in edges else v
    parent = {v: rep[instance.parent[v]] for v in instance.tree_edges if v not in edges}
    links, link_map = [], []
    for lid, link in enumerate(instance.links):
        u, v = rep[link.u], rep[link.v]
        if u != v:
            links.append(Link(u, v, link.cost))
            link_map.append(lid)
    nodes = sorted(set(rep.values()))
    return ContractionResult(
        TapInstance(nodes, instance.root, parent, links), rep, tuple(link_map)
    )


def restrict_to_edges(instance: TapInstance, edges: Iterable[int]) -> ContractionResult:
    """Keep only the tree edges in ``edges``; every other tree edge is contracted."""
    keep = set(edges)
    return contract(instance, [f for f in instance.tree_edges if f not in keep])


# ---- shadow completion --------------------------------------------------


@dataclass(frozen=True)
class ShadowCompletion:
    instance: TapInstance
    expansion: tuple[tuple[int, ...], ...]  # new link id -> original link ids

    def expand(self, ids: Iterable[int]) -> set[int]:
        out: set[int] = set()
        for i in ids:
            out.update(self.expansion[i])
        return out


def _path_cover(instance: TapInstance, u: int, v: int):
    """Cheapest link set covering the u-v path (interval DP along the path)."""
    nodes = instance.path_nodes(u, v)
    seq = []  # tree edges in path order
    for a, b in zip(nodes, nodes[1:]):
        seq.append(a if instance.parent.get(a) == b else b)
    pos = {f: i for i, f in enumerate(seq)}
    intervals = []
    for lid, edges in enumerate(instance.link_edges):
        hit = [pos[f] for f in edges if f in pos]
        if hit:
            intervals.append((min(hit), max(hit), lid))
    m = len(seq)
    # best[p]: cheapest (cost, ids) covering path positions 0..p-1
    best: list[tuple[int, tuple[int, ...]] | None] = [None] * (m + 1)
    best[0] = (0, ())
    for p in range(m):
        if best[p] is None:
            continue
        cost, ids = best[p]
        for lo, hi, lid in intervals:
            if lo <= p <= hi:
                cand = (cost + instance.links[lid].cost, tuple(sorted(ids + (lid,))))
                if best[hi + 1] is None or cand < best[hi + 1]:
                    best[hi + 1] = cand
    return best[m]


def shadow_complete(instance: TapInstance) -> ShadowCompletion:
    """Replace the links by every node pair priced at the cheapest cover of its path."""
    links, expansion = [], []
    for u, v in itertools.combinations(instance.nodes, 2):
        res = _path_cover(instance, u, v)
        if res is None:
            raise InfeasibleError(f"path {u}-{v} cannot be covered")
        cost, ids = res
        links.append(Link(u, v, cost))
        expansion.append(ids)
    return ShadowCompletion(instance.with_links(links), tuple(expansion))


def shadow_closure(instance: TapInstance) -> ShadowCompletion:
    """Add every shadow (sub-path) of every link, priced as its cheapest parent link.

    Unlike :func:`shadow_complete` this never prices a pair above a single link,
    so unit instances stay unit.
    """
    masks = instance.link_masks
    links, expansion = [], []
    for u, v in itertools.combinations(instance.nodes, 2):
        need = instance.edge_mask(instance.path_edges(u, v))
        best = None
        for lid, m in enumerate(masks):
            if need & ~m == 0:
                key = (instance.links[lid].cost, lid)
                if best is None or key < best:
                    best = key
        if best is not None:
            links.append(Link(u, v, best[0]))
            expansion.append((best[1],))
    return ShadowCompletion(instance.with_links(links), tuple(expansion))


# ---- branches -----------------------------------------------------------


@dataclass(frozen=True, order=True)
class Branch:
    """Edge set of a full rooted subtree together with its parent tree edge.

    ``top`` is the child endpoint of that parent edge, or the root when the
    branch is a full rooted subtree hanging from the root itself.
    """

    size: int
    edges: tuple[int, ...]
    leaf_count: int
    top: int

    @classmethod
    def make(cls, edges: Iterable[int], leaf_count: int, top: int) -> "Branch":
        edges = tuple(sorted(edges))
        return cls(len(edges), edges, leaf_count, top)

    @property
    def edge_set(self) -> frozenset[int]:
        return frozenset(self.edges)


def _full_subtrees(instance: TapInstance, v: int, max_leaves: int, cap: int, memo):
    """All full rooted subtrees at ``v`` with at most ``max_leaves`` leaves.

    Returned as (edge set, leaf count) pairs; ``v`` alone counts as one leaf.
    """
    if v in memo:
        return memo[v]
    out = [(frozenset(), 1)]
    kids = instance.children[v]
    if kids:
        combos = [(frozenset(), 0)]
        for c in kids:
            sub = _full_subtrees(instance, c, max_leaves, cap, memo)
            combos = [
                (acc | {c} | e, n + m)
                for acc, n in combos
                for e, m in sub
                if n + m <= max_leaves
            ]
            if len(combos) > cap:
                raise CapExceededError(f"branch enumeration exceeded cap {cap}")
        out.extend(combos)
    memo[v] = out
    return out


def enumerate_branches(instance: TapInstance, k: int, cap: int | None = None) -> list[Branch]:
    """Every branch with fewer than ``k`` leaves, deduplicated by edge set."""
    if k < 1:
        raise ValueError("k must be at least 1")
    cap = get_cap("branches") if cap is None else cap
    if k == 1:
        return []
    memo: dict = {}
    found: dict[frozenset[int], Branch] = {}
    for v in instance.tree_edges:
        for edges, leaves in _full_subtrees(instance, v, k - 1, cap, memo):
            key = edges | {v}
            found.setdefault(key, Branch.make(key, leaves, v))
    for edges, leaves in _full_subtrees(instance, instance.root, k - 1, cap, memo)[1:]:
        found.setdefault(edges, Branch.make(edges, leaves, instance.root))
    if len(found) > cap:
        raise CapExceededError(f"branch enumeration exceeded cap {cap}")
    return sorted(found.values())


# ---- up vectors ---------------------------------------------------------


def up_vector(
    instance: TapInstance, x: Mapping[int, Fraction], subset: Iterable[int]
) -> dict[int, Fraction]:
    """Move the mass of every non-up link in ``subset`` onto its two up-shadows."""
    out = {i: Fraction(v) for i, v in x.items()}
    for lid in sorted(set(subset)):
        link = instance.links[lid]
        mass = out.get(lid, Fraction(0))
        a = instance.lca(link.u, link.v)
        if a in (link.u, link.v) or not mass:
            continue
        for w in (link.u, link.v):
            target = instance.cheapest_link(w, a)
            if target is None:
                raise MissingShadowLink(f"no link {w}-{a} for up-shadow of link {lid}")
            out[target] = out.get(target, Fraction(0)) + mass
        out[lid] = Fraction(0)
    return out


def coverage(instance: TapInstance, x: Mapping[int, Fraction], f: int) -> Fraction:
    return sum((Fraction(x.get(i, 0)) for i in instance._psi[f]), Fraction(0))


def in_cut_polyhedron(instance: TapInstance, x: Mapping[int, Fraction]) -> bool:
    if any(Fraction(v) < 0 for v in x.values()):
        return False
    return all(coverage(instance, x, f) >= 1 for f in instance.tree_edges)


# ---- serialisation ------------------------------------------------------


def instance_to_dict(instance: TapInstance) -> dict:
    return {
        "nodes": list(instance.nodes),
        "root": instance.root,
        "tree_edges": [[v, instance.parent[v]] for v in instance.tree_edges],
        "links": [{"u": l.u, "v": l.v, "cost": l.cost} for l in instance.links],
    }


def instance_from_dict(data: Mapping) -> TapInstance:
    try:
        nodes = data["nodes"]
        root = data["root"]
        edges = data["tree_edges"]
        links = data["links"]
    except (KeyError, TypeError) as exc:
        raise InvalidInstanceError(f"missing field: {exc}") from exc
    for v in nodes:
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise InvalidInstanceError(f"node ids must be non-negative integers, got {v!r}")
    parent = {}
    for pair in edges:
        child, par = pair
        if child in parent:
            raise InvalidInstanceError(f"node {child} has two parents")
        parent[child] = par
    return TapInstance(nodes, root, parent, [_as_link(l) for l in links])


def load_instance(path) -> TapInstance:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInstanceError(f"bad JSON: {exc}") from exc
    return instance_from_dict(data)


def dump_instance(instance: TapInstance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(instance), fh, indent=1)
        fh.write("\n")


def to_dot(instance: TapInstance, highlight: Iterable[int] = ()) -> str:
    chosen = set(highlight)
    lines = ["graph tap {"]
    for v in instance.nodes:
        shape = "doublecircle" if v == instance.root else "circle"
        lines.append(f"  {v} [shape={shape}];")
    for v in instance.tree_edges:
        lines.append(f"  {instance.parent[v]} -- {v} [style=bold];")
    for lid, l in enumerate(instance.links):
        color = ', color="red"' if lid in chosen else ""
        lines.append(f'  {l.u} -- {l.v} [style=dashed, label="{l.cost}"{color}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
