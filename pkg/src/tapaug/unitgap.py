"""Iterative contraction for unit costs and its dual-fitting certificates.

The contraction algorithm is driven by a matching ``M`` on the original
leaves.  Duals live on tree edges (named by child node) and, in bunch mode,
on 3-bunches.  The certificate replays the contraction trace, applies the
initial dual values, and at each semi-closed contraction picks a +/- update
pattern by exhaustive search under the accounting constraints.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction

from .core import TapInstance, contract
from .errors import CertificateFailure, InfeasibleError, InvalidInstanceError, NoSubtreeFound
from .exact import solve_exact_subset
from .lp import build_bunch3_lp, build_cut_lp, on_common_path, solve_lp

ZERO = Fraction(0)

MODES = {
    # (rho, level-2 bound, level-1 bound, step, leaf-in-M, leaf-in-J, stem)
    "cut2815": dict(
        rho=Fraction(28, 15),
        bounds=(ZERO, Fraction(16, 15), Fraction(28, 15)),
        step=Fraction(2, 5),
        matched=Fraction(4, 5),
        twin=Fraction(14, 15),
        stem=Fraction(2, 15),
    ),
    "bunch74": dict(
        rho=Fraction(7, 4),
        bounds=(ZERO, Fraction(1), Fraction(7, 4)),
        step=Fraction(1, 2),
        matched=Fraction(3, 4),
        twin=Fraction(1, 2),
        stem=Fraction(1, 2),  # on the stem's 3-bunch
    ),
}


# ---- current tree bookkeeping --------------------------------------------


class _Current:
    """The contracted tree plus provenance back to the original instance."""

    def __init__(self, instance: TapInstance):
        self.orig = instance
        self.tree = instance
        self.to_cur = {v: v for v in instance.nodes}
        self.members = {v: frozenset([v]) for v in instance.nodes}
        self.used = {v: 0 for v in instance.nodes}
        self.link_map = tuple(range(len(instance.links)))
        self.orig_leaves = frozenset(instance.leaves)

    def copy(self) -> "_Current":
        out = _Current.__new__(_Current)
        out.__dict__.update(self.__dict__)
        out.to_cur = dict(self.to_cur)
        out.members = dict(self.members)
        out.used = dict(self.used)
        return out

    def contract(self, edges, links_used: int) -> int | None:
        edges = set(edges)
        if not edges:
            return None
        res = contract(self.tree, edges)
        members: dict[int, set[int]] = {}
        used: dict[int, int] = {}
        for old, new in res.node_map.items():
            members.setdefault(new, set()).update(self.members[old])
            used[new] = used.get(new, 0) + self.used[old]
        merged = {res.node_map[v] for f in edges for v in (f, self.tree.parent[f])}
        if len(merged) != 1:
            raise ValueError("contracted edges must form one connected piece")
        node = merged.pop()
        used[node] += links_used
        self.members = {v: frozenset(s) for v, s in members.items()}
        self.used = used
        self.to_cur = {v: res.node_map[c] for v, c in self.to_cur.items()}
        self.link_map = tuple(self.link_map[i] for i in res.link_map)
        self.tree = res.instance
        return node

    def is_compound(self, c: int) -> bool:
        return c == self.tree.root or len(self.members[c]) > 1

    def is_original_leaf(self, c: int) -> bool:
        return len(self.members[c]) == 1 and c in self.orig_leaves

    def level(self, lid: int) -> int:
        link = self.orig.links[lid]
        cu, cv = self.to_cur[link.u], self.to_cur[link.v]
        if cu == cv:
            return 2
        return sum(1 for c in (cu, cv) if self.is_compound(c) or self.is_original_leaf(c))

    def current_links(self):
        """(current link id, endpoints in the current tree, original id)."""
        for i, orig in enumerate(self.link_map):
            link = self.tree.links[i]
            yield i, link.u, link.v, orig


def _creates_leaf(tree: TapInstance, u: int, v: int) -> bool:
    path = set(tree.path_nodes(u, v))
    top = tree.lca(u, v)
    if top == tree.root:
        return False
    return all(c in path for w in path for c in tree.children[w])


def is_twin(tree: TapInstance, a: int, b: int) -> bool:
    leaves = set(tree.leaves)
    return a != b and a in leaves and b in leaves and _creates_leaf(tree, a, b)


# ---- state ----------------------------------------------------------------


@dataclass
class Event:
    kind: str  # "twin", "greedy" or "semi-closed"
    edges: tuple[int, ...]  # tree edges contracted (ids of the tree at that time)
    links: tuple[int, ...]  # original link ids added to J
    node: int  # id of the new node in the contracted tree
    info: dict = field(default_factory=dict)


@dataclass
class ContractionState:
    instance: TapInstance
    current: _Current
    matching: tuple[tuple[int, int], ...]  # pairs of original leaves
    matching_links: tuple[int, ...]
    twin_links: tuple[int, ...]
    stems: tuple[int, ...]
    cover: list[int] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)

    @property
    def tree(self) -> TapInstance:
        return self.current.tree

    @property
    def matched(self) -> frozenset[int]:
        return frozenset(v for pair in self.matching for v in pair)

    def unmatched_leaves(self) -> list[int]:
        cur = self.current
        return [
            c for c in self.tree.leaves if not (cur.is_original_leaf(c) and c in self.matched)
        ]

    def non_leaf_compound(self) -> list[int]:
        leaves = set(self.tree.leaves)
        return [c for c in self.tree.nodes if c not in leaves and self.current.is_compound(c)]


def _check_unit(instance: TapInstance) -> None:
    if not instance.is_unit:
        raise InvalidInstanceError("iterative contraction needs unit costs")
    if not instance.is_feasible:
        raise InfeasibleError(f"uncovered tree edges {instance.uncovered_edges}")


def init_matching(instance: TapInstance) -> ContractionState:
    """Leaf matching ``M`` without twin-edges, then a twin matching contracted into ``J``."""
    _check_unit(instance)
    leaves = set(instance.leaves)
    matched: set[int] = set()
    pairs, mlinks = [], []
    for lid, link in enumerate(instance.links):
        a, b = link.u, link.v
        if a in leaves and b in leaves and a not in matched and b not in matched:
            if not is_twin(instance, a, b):
                matched |= {a, b}
                pairs.append((min(a, b), max(a, b)))
                mlinks.append(lid)
    taken: set[int] = set()
    twins = []
    for lid, link in enumerate(instance.links):
        a, b = link.u, link.v
        if a in leaves and b in leaves and not {a, b} & (matched | taken):
            if not is_twin(instance, a, b):
                raise AssertionError("leaf matching is not maximal")
            taken |= {a, b}
            twins.append(lid)
    state = ContractionState(
        instance,
        _Current(instance),
        tuple(pairs),
        tuple(mlinks),
        tuple(twins),
        tuple(instance.lca(instance.links[l].u, instance.links[l].v) for l in twins),
    )
    for lid in twins:
        link = instance.links[lid]
        cu, cv = state.current.to_cur[link.u], state.current.to_cur[link.v]
        edges = tuple(sorted(state.tree.path_edges(cu, cv)))
        node = state.current.contract(edges, 1)
        state.cover.append(lid)
        state.events.append(Event("twin", edges, (lid,), node))
    return state


def greedy_contract_all(state: ContractionState) -> ContractionState:
    while len(state.tree.nodes) >= 2:
        unmatched = set(state.unmatched_leaves())
        pick = None
        for i, u, v, orig in state.current.current_links():
            if u in unmatched and v in unmatched:
                pick = (orig, u, v)
                break
        if pick is None:
            break
        orig, u, v = pick
        edges = tuple(sorted(state.tree.path_edges(u, v)))
        node = state.current.contract(edges, 1)
        state.cover.append(orig)
        state.events.append(Event("greedy", edges, (orig,), node))
    return state


# ---- semi-closed subtrees -------------------------------------------------


@dataclass(frozen=True)
class SubtreeParts:
    top: int
    nodes: frozenset[int]
    edges: tuple[int, ...]
    m_pairs: tuple[tuple[int, int], ...]
    unmatched: tuple[int, ...]
    compound: tuple[int, ...]


def subtree_parts(state: ContractionState, t: int) -> SubtreeParts | None:
    """Bookkeeping for the complete subtree at ``t``; None if it splits an M pair."""
    tree, cur = state.tree, state.current
    nodes = tree.subtree(t)
    pairs = []
    for a, b in state.matching:
        ca, cb = cur.to_cur[a], cur.to_cur[b]
        if (ca in nodes) != (cb in nodes):
            return None
        if ca in nodes and cur.is_original_leaf(ca):
            pairs.append((a, b))
    unmatched = tuple(c for c in state.unmatched_leaves() if c in nodes)
    compound = tuple(c for c in state.non_leaf_compound() if c in nodes)
    return SubtreeParts(t, nodes, tuple(sorted(tree.subtree_edges(t))), tuple(pairs), unmatched, compound)


def _has_outside_link(state: ContractionState, node: int, inside: frozenset[int]) -> bool:
    for _, u, v, _ in state.current.current_links():
        if (u == node and v not in inside) or (v == node and u not in inside):
            return True
    return False


def _has_link(state: ContractionState, a: int, b: int) -> bool:
    return any({u, v} == {a, b} for _, u, v, _ in state.current.current_links())


def is_semi_closed(state: ContractionState, parts: SubtreeParts | None) -> bool:
    if parts is None:
        return False
    return not any(_has_outside_link(state, a, parts.nodes) for a in parts.unmatched)


def is_dangerous(state: ContractionState, t: int | SubtreeParts) -> bool:
    parts = t if isinstance(t, SubtreeParts) else subtree_parts(state, t)
    if parts is None or len(parts.m_pairs) != 1 or len(parts.unmatched) != 1 or parts.compound:
        return False
    a = parts.unmatched[0]
    if _has_outside_link(state, a, parts.nodes):
        return False
    p, q = parts.m_pairs[0]
    cur = state.current
    for b, b2 in ((p, q), (q, p)):
        cb, cb2 = cur.to_cur[b], cur.to_cur[b2]
        if (
            _has_link(state, a, cb2)
            and not _creates_leaf(state.tree, a, cb2)
            and _has_outside_link(state, cb, parts.nodes)
        ):
            return True
    return False


def find_semiclosed(state: ContractionState):
    """First non-dangerous semi-closed subtree in post-order with a small enough cover.

    Returns ``(parts, cover)`` with ``cover`` as original link ids.
    """
    tree, cur = state.tree, state.current
    rejected = []
    for t in tree.postorder:
        if not tree.children[t]:
            continue
        parts = subtree_parts(state, t)
        if not is_semi_closed(state, parts):
            continue
        if is_dangerous(state, parts):
            rejected.append((t, "dangerous"))
            continue
        sol = solve_exact_subset(tree, parts.edges)
        budget = len(parts.m_pairs) + len(parts.unmatched)
        if sol.cost > budget:
            rejected.append((t, f"cover {sol.cost} > {budget}"))
            continue
        return parts, tuple(cur.link_map[i] for i in sol.links)
    raise NoSubtreeFound(f"no admissible semi-closed subtree (rejected: {rejected})")


def iterative_contraction(instance: TapInstance):
    """Return ``(J, state)``; ``state.events`` is the contraction trace."""
    state = init_matching(instance)
    while len(state.tree.nodes) >= 2:
        greedy_contract_all(state)
        if len(state.tree.nodes) < 2:
            break
        parts, links = find_semiclosed(state)
        node = state.current.contract(parts.edges, len(links))
        state.cover.extend(links)
        info = {
            "top": parts.top,
            "m_pairs": [list(p) for p in parts.m_pairs],
            "unmatched": list(parts.unmatched),
            "compound": list(parts.compound),
        }
        state.events.append(Event("semi-closed", parts.edges, links, node, info))
    cover = tuple(sorted(set(state.cover)))
    if not instance.covers(cover):
        raise AssertionError("iterative contraction returned a non-cover")
    return cover, state


def replay(state: ContractionState):
    """Yield ``(event, state)`` after each logged contraction, from a fresh start."""
    fresh = ContractionState(
        state.instance,
        _Current(state.instance),
        state.matching,
        state.matching_links,
        state.twin_links,
        state.stems,
    )
    for ev in state.events:
        fresh.current.contract(ev.edges, len(ev.links))
        fresh.cover.extend(ev.links)
        yield ev, fresh


# ---- dual certificates ----------------------------------------------------


@dataclass
class DualCertificate:
    mode: str
    y_edge: dict[int, Fraction]
    y_bunch: dict[tuple[int, ...], Fraction]
    loads: dict[int, Fraction]
    final_credit: Fraction
    steps: list[dict] = field(default_factory=list)

    @property
    def rho(self) -> Fraction:
        return MODES[self.mode]["rho"]

    @property
    def value(self) -> Fraction:
        return sum(self.y_edge.values(), ZERO) + sum(
            ((len(b) + 1) // 2 * y for b, y in self.y_bunch.items()), ZERO
        )

    def to_json(self, passed: bool | None = None) -> str:
        data = {
            "mode": self.mode,
            "yEdge": {str(v): _q(y) for v, y in sorted(self.y_edge.items()) if y},
            "yBunch": [{"edges": list(b), "y": _q(y)} for b, y in sorted(self.y_bunch.items()) if y],
            "loads": {str(i): _q(s) for i, s in sorted(self.loads.items())},
            "credits": {"final": _q(self.final_credit)},
            "pass": passed,
        }
        return json.dumps(data, indent=2, sort_keys=True)


def _q(v) -> str:
    v = Fraction(v)
    return f"{v.numerator}/{v.denominator}"


class _Duals:
    def __init__(self, instance: TapInstance, mode: str):
        self.instance = instance
        self.mode = mode
        self.cfg = MODES[mode]
        self.y: dict[int, Fraction] = {f: ZERO for f in instance.tree_edges}
        self.yb: dict[tuple[int, ...], Fraction] = {}
        self.bit = instance.edge_bit

    def mask(self, edges) -> int:
        return instance_mask(self.bit, edges)

    def load(self, lid: int) -> Fraction:
        path = self.instance.link_edges[lid]
        s = sum((self.y[f] for f in path), ZERO)
        for b, val in self.yb.items():
            if val and path.intersection(b):
                s += val
        return s

    def credit(self, cur: _Current, c: int) -> Fraction:
        members = cur.members[c]
        parent = self.instance.parent
        inside = {v for v in members if v in parent and parent[v] in members}
        if c != cur.tree.root:
            inside.add(c)
        s = sum((self.y[f] for f in inside), ZERO)
        for b, val in self.yb.items():
            if val and set(b) <= inside:
                s += (len(b) + 1) // 2 * val
        s -= cur.used[c]
        if self.instance.root in members:
            s += 1
        return s

    def bound(self, level: int) -> Fraction:
        return self.cfg["bounds"][level]


def instance_mask(bit: dict[int, int], edges) -> int:
    m = 0
    for f in edges:
        m |= 1 << bit[f]
    return m


def _check_invariants(duals: _Duals, state: ContractionState, where: str) -> None:
    cur = state.current
    for c in state.unmatched_leaves() + state.non_leaf_compound():
        pi = duals.credit(cur, c)
        if pi < 1:
            raise CertificateFailure("credit", f"{where}: node {c} has credit {pi}")
    for lid in range(len(duals.instance.links)):
        lvl = cur.level(lid)
        s = duals.load(lid)
        if s > duals.bound(lvl):
            raise CertificateFailure("load", f"{where}: link {lid} load {s} at level {lvl}")
    for f, val in duals.y.items():
        if val < 0:
            raise CertificateFailure("nonnegative", f"{where}: y[{f}] = {val}")


def _patterns(relevant: list[int], m_count: int, u_count: int, max_plus: int = 3):
    """Candidate (plus, minus) edge sets, grouped by number of signs."""
    if m_count == 0:
        size = u_count + 1
        if size <= len(relevant):
            yield [(set(p), set()) for p in itertools.combinations(relevant, size)]
        return
    for p in range(1, max_plus + 1):
        group = []
        for plus in itertools.combinations(relevant, p):
            rest = [f for f in relevant if f not in plus]
            for minus in itertools.combinations(rest, p - 1):
                group.append((set(plus), set(minus)))
        yield group


def _exception_candidates(state: ContractionState, parts: SubtreeParts):
    """Bunch-mode special update: y_b -= 1/2 and y_B = 1/2 on the bunch of a, b, w."""
    tree, cur = state.tree, state.current
    for a in parts.unmatched:
        for pair in parts.m_pairs:
            for b in pair:
                cb = cur.to_cur[b]
                for w in sorted(parts.nodes):
                    if w in (a, cb) or w == tree.root or not tree.children[w]:
                        continue
                    trio = tuple(sorted((a, cb, w)))
                    if not on_common_path(tree, trio):
                        yield cb, trio


def build_dual(state: ContractionState, mode: str = "cut2815") -> DualCertificate:
    """Replay the contraction trace and fit duals; raises CertificateFailure."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    instance = state.instance
    duals = _Duals(instance, mode)
    cfg = duals.cfg
    matched = state.matched
    twin_leaves = {v for lid in state.twin_links for v in instance.links[lid].ends}
    for v in instance.leaves:
        if v in matched:
            duals.y[v] = cfg["matched"]
        elif v in twin_leaves:
            duals.y[v] = cfg["twin"]
        else:
            duals.y[v] = Fraction(1)
    for s in state.stems:
        if mode == "cut2815":
            duals.y[s] += cfg["stem"]
        else:
            kids = instance.children[s]
            duals.yb[tuple(sorted(tuple(kids) + (s,)))] = cfg["stem"]

    replay = ContractionState(
        instance, _Current(instance), state.matching, state.matching_links, state.twin_links, state.stems
    )
    steps: list[dict] = []
    events = list(state.events)
    k = 0
    while k < len(events) and events[k].kind == "twin":
        replay.current.contract(events[k].edges, len(events[k].links))
        k += 1
    _check_invariants(duals, replay, "after initialisation")
    for ev in events[k:]:
        if ev.kind == "semi-closed":
            parts = subtree_parts(replay, ev.info["top"])
            step = _apply_update(duals, replay, parts, ev)
            steps.append(step)
        else:
            replay.current.contract(ev.edges, len(ev.links))
        _check_invariants(duals, replay, f"after {ev.kind} contraction into {ev.node}")
    root = replay.tree.root
    final = duals.credit(replay.current, root)
    loads = {lid: duals.load(lid) for lid in range(len(instance.links))}
    cert = DualCertificate(mode, dict(duals.y), dict(duals.yb), loads, final, steps)
    if len(state.cover) > cert.value:
        raise CertificateFailure("property1", f"|J| = {len(state.cover)} > {cert.value}")
    worst = max(loads.values(), default=ZERO)
    if worst > cert.rho:
        raise CertificateFailure("property2", f"max load {worst} > {cert.rho}")
    return cert


def _apply_update(duals: _Duals, replay: ContractionState, parts: SubtreeParts, ev: Event) -> dict:
    """Contract ``parts`` in ``replay`` and apply the best feasible dual update."""
    instance = duals.instance
    cfg = duals.cfg
    m_count, u_count, c_count = len(parts.m_pairs), len(parts.unmatched), len(parts.compound)
    tree = replay.tree
    relevant = sorted(parts.edges) + ([parts.top] if parts.top != tree.root else [])
    after = replay.current.copy()
    node = after.contract(parts.edges, len(ev.links))
    base_credit = duals.credit(after, node)
    links = range(len(instance.links))
    bounds = [duals.bound(after.level(l)) for l in links]
    base = [duals.load(l) for l in links]
    paths = [instance.link_edges[l] for l in links]

    def feasible(plus, minus, step, extra_credit=ZERO, extra_load=None):
        if any(duals.y[f] < step for f in minus):
            return None
        credit = base_credit + step * (len(plus) - len(minus)) + extra_credit
        if credit < 1:
            return None
        new = []
        for l in links:
            q = len(paths[l] & plus) - len(paths[l] & minus)
            s = base[l] + step * q + (extra_load(l) if extra_load else ZERO)
            if s > bounds[l]:
                return None
            new.append(s)
        return new

    choice = None
    if c_count or m_count >= 2:
        if feasible(set(), set(), ZERO) is None:
            raise CertificateFailure("no-update", f"contraction into {ev.node} breaks the invariants")
        choice = ("none", set(), set(), ZERO, None)
    else:
        step = Fraction(1, 2) if m_count == 0 else cfg["step"]
        for group in _patterns(relevant, m_count, u_count):
            scored = []
            for plus, minus in group:
                new = feasible(plus, minus, step)
                if new is not None:
                    scored.append((sum(new), max(new, default=ZERO), sorted(plus), sorted(minus)))
            if scored:
                _, _, plus, minus = min(scored)
                choice = ("signs", set(plus), set(minus), step, None)
                break
        if choice is None and duals.mode == "bunch74" and m_count == 1:
            half = Fraction(1, 2)
            for b, trio in _exception_candidates(replay, parts):

                def extra(l, trio=trio):
                    return half if paths[l].intersection(trio) else ZERO

                new = feasible(set(), {b}, half, extra_credit=2 * half, extra_load=extra)
                if new is not None and duals.yb.get(trio, ZERO) == 0:
                    choice = ("bunch", set(), {b}, half, trio)
                    break
        if choice is None:
            raise CertificateFailure(
                "no-pattern",
                f"no feasible update for subtree at {parts.top} (|M'|={m_count}, |U'|={u_count})",
            )
    kind, plus, minus, step, trio = choice
    for f in plus:
        duals.y[f] += step
    for f in minus:
        duals.y[f] -= step
    if trio is not None:
        duals.yb[trio] = Fraction(1, 2)
    replay.current = after
    return {
        "top": parts.top,
        "m": m_count,
        "u": u_count,
        "c": c_count,
        "kind": kind,
        "plus": sorted(plus),
        "minus": sorted(minus),
        "step": step,
        "bunch": list(trio) if trio else None,
    }


@dataclass(frozen=True)
class CertificateReport:
    property1: bool
    property2: bool
    lp_value: Fraction
    gap_ok: bool
    dual_ok: bool  # value / rho <= LP optimum (weak duality)
    size: int

    @property
    def ok(self) -> bool:
        return self.property1 and self.property2 and self.gap_ok and self.dual_ok


def check_certificate(instance: TapInstance, cover, cert: DualCertificate) -> CertificateReport:
    """Recompute loads and payment from scratch and compare with the matching LP."""
    duals = _Duals(instance, cert.mode)
    duals.y.update(cert.y_edge)
    duals.yb.update(cert.y_bunch)
    size = len(set(cover))
    p1 = size <= cert.value
    p2 = all(duals.load(l) <= cert.rho for l in range(len(instance.links)))
    model = build_cut_lp(instance) if cert.mode == "cut2815" else build_bunch3_lp(instance)
    lp = solve_lp(model).objective
    return CertificateReport(p1, p2, lp, size <= cert.rho * lp, cert.value <= cert.rho * lp, size)
