"""Bounded-cost pipeline: outer iteration over minimal (k, lambda)-subtrees.

The driver works with cutting planes instead of an ellipsoid search: it solves
the current LP, rounds, and adds back any branch row the rounding reports as
violated.  Every bound the analysis promises is asserted on the run itself.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .core import (
    Branch,
    Link,
    TapInstance,
    class_costs,
    classify_link,
    contract,
    cover_set_of,
    coverage,
    in_cut_polyhedron,
    shadow_closure,
    shadow_complete,
    up_vector,
)
from .errors import BoundViolation, InfeasibleError, InvalidInstanceError
from .exact import solve_branch, solve_exact, solve_exact_subset
from .lp import (
    Row,
    build_cut_lp,
    check_half_integral,
    eliminate_cross_cycles,
    solve_lp,
    solve_uplink_cover,
)

ZERO = Fraction(0)
RHO = {"general": Fraction(12, 7), "unit": Fraction(8, 5)}


@dataclass(frozen=True)
class PipelineParams:
    k: int
    lam: Fraction
    cost_mode: str = "general"

    def __post_init__(self):
        object.__setattr__(self, "lam", Fraction(self.lam))
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if not (1 <= self.lam <= self.k - 1):
            raise ValueError("lambda must satisfy 1 <= lambda <= k - 1")
        if self.cost_mode not in RHO:
            raise ValueError(f"unknown cost mode {self.cost_mode!r}")

    @property
    def rho(self) -> Fraction:
        return RHO[self.cost_mode]

    def bounded(self, max_cost: int) -> bool:
        return self.k > self.lam * max_cost

    def local_bound(self, max_cost: int) -> Fraction:
        lm = self.lam * max_cost
        return self.rho + Fraction(8, 3) * lm / (self.k - lm)

    def ratio_bound(self, max_cost: int) -> Fraction:
        return self.local_bound(max_cost) + 2 / self.lam


def theorem_bound(k: int, lam, max_cost: int, cost_mode: str = "general") -> Fraction:
    return PipelineParams(k, Fraction(lam), cost_mode).ratio_bound(max_cost)


@dataclass(frozen=True)
class Cover:
    links: tuple[int, ...]
    cost: int


@dataclass(frozen=True)
class ViolatedConstraint:
    """A branch row ``sum_{e in links} c_e x_e >= rhs`` that the point misses.

    ``genuine`` is False when the branch lives in a contracted tree; the row is
    then still valid for every integral cover but is not a row of the
    original k-Branch-LP.
    """

    branch: Branch
    links: tuple[int, ...]
    lhs: Fraction
    rhs: int
    genuine: bool = True

    def __post_init__(self):
        if not self.lhs < self.rhs:
            raise ValueError("a violated constraint needs lhs < rhs")

    def row(self, instance: TapInstance) -> Row:
        coeffs = {i: instance.links[i].cost for i in self.links}
        return Row.make(coeffs, self.rhs, ("branch", self.branch.edges))


RoundingOutcome = Cover | ViolatedConstraint


def _push(x: Mapping[int, Fraction], link_map: Iterable[int]) -> dict[int, Fraction]:
    return {i: Fraction(x.get(orig, 0)) for i, orig in enumerate(link_map)}


def _check(ok: bool, what: str) -> None:
    if not ok:
        raise BoundViolation(what)


# ---- thin / thick ---------------------------------------------------------


def thin_thick_partition(instance: TapInstance, x: Mapping[int, Fraction], lam):
    lam = Fraction(lam)
    thin, thick = set(), set()
    for f in instance.tree_edges:
        (thin if coverage(instance, x, f) <= lam else thick).add(f)
    return frozenset(thin), frozenset(thick)


def _shadow_uplink_cover(instance: TapInstance, edges) -> tuple[int, ...]:
    """Cheapest up-link cover of ``edges`` after splitting every non-up link in two."""
    links, origin = [], []
    for lid, link in enumerate(instance.links):
        a = instance.lca(link.u, link.v)
        if a in (link.u, link.v):
            links.append(link)
            origin.append(lid)
        else:
            for w in (link.u, link.v):
                links.append(Link(w, a, link.cost))
                origin.append(lid)
    res = solve_uplink_cover(instance.with_links(links), edges)
    chosen = tuple(sorted({origin[i] for i in res.links}))
    _check(instance.covers(chosen, edges), "up-link cover does not cover its edges")
    return chosen


def _objective(instance: TapInstance, x: Mapping[int, Fraction]) -> Fraction:
    return sum((instance.links[i].cost * Fraction(v) for i, v in x.items()), ZERO)


def cover_thick(instance: TapInstance, x: Mapping[int, Fraction], lam, edges: Iterable[int]) -> tuple[int, ...]:
    """Cover lambda-thick edges by up-links of the link shadows; cost at most (2/lam) c.x."""
    edges = sorted(set(edges))
    if not edges:
        return ()
    lam = Fraction(lam)
    for f in edges:
        if coverage(instance, x, f) <= lam:
            raise ValueError(f"tree edge {f} is not {lam}-thick")
    chosen = _shadow_uplink_cover(instance, edges)
    cost, objective = instance.cost_of(chosen), _objective(instance, x)
    _check(cost <= 2 * objective / lam, f"thick cover cost {cost} > (2/{lam})*{objective}")
    return chosen


def uplink_2approx(instance: TapInstance, x: Mapping[int, Fraction]) -> tuple[int, ...]:
    """Whole-tree cover by up-shadows; cost at most 2 c.x for any fractional cover x."""
    if not in_cut_polyhedron(instance, x):
        raise ValueError("x is not a fractional cover")
    chosen = _shadow_uplink_cover(instance, instance.tree_edges)
    cost, objective = instance.cost_of(chosen), _objective(instance, x)
    _check(cost <= 2 * objective, f"up-link cover cost {cost} > 2*{objective}")
    return chosen


# ---- subtree selection ----------------------------------------------------


def leaf_count(instance: TapInstance, v: int) -> int:
    leaves = set(instance.leaves)
    return sum(1 for w in instance.subtree(v) if w in leaves)


def find_min_k_lambda_subtree(instance: TapInstance, x: Mapping[int, Fraction], k: int, lam):
    """Return ``(s, small_case)``: the top node of a minimal (k, lam)-subtree."""
    lam = Fraction(lam)
    for v in instance.postorder:
        if v == instance.root:
            continue
        if leaf_count(instance, v) >= k and coverage(instance, x, v) <= lam:
            return v, False
    return instance.root, len(instance.leaves) < k


def thick_top(instance: TapInstance, x: Mapping[int, Fraction], s: int, lam) -> frozenset[int]:
    """Edges of the maximal all-thick subtree hanging from ``s``."""
    lam = Fraction(lam)
    out, queue = set(), deque([s])
    while queue:
        v = queue.popleft()
        for c in instance.children[v]:
            if coverage(instance, x, c) > lam:
                out.add(c)
                queue.append(c)
    return frozenset(out)


# ---- the two roundings ----------------------------------------------------


def root_branches(instance: TapInstance) -> list[Branch]:
    return [
        Branch.make(instance.subtree_edges(c) | {c}, leaf_count(instance, c), c)
        for c in instance.children[instance.root]
    ]


def _branch_lhs(instance: TapInstance, x: Mapping[int, Fraction], branch: Branch) -> Fraction:
    return sum(
        (instance.links[i].cost * Fraction(x.get(i, 0)) for i in cover_set_of(instance, branch.edges)),
        ZERO,
    )


def round1(instance: TapInstance, x: Mapping[int, Fraction]) -> RoundingOutcome:
    """Union of optimal branch covers, or the first branch whose row ``x`` violates."""
    chosen: set[int] = set()
    for branch in root_branches(instance):
        sol = solve_branch(instance, branch)
        lhs = _branch_lhs(instance, x, branch)
        if sol.cost > lhs:
            links = cover_set_of(instance, branch.edges)
            return ViolatedConstraint(branch, links, lhs, sol.cost)
        chosen.update(sol.links)
    ids = tuple(sorted(chosen))
    cost = instance.cost_of(ids)
    cc = class_costs(instance, x)
    _check(instance.covers(ids), "round1 output is not a cover")
    _check(cost <= cc["in"] + 2 * cc["cross"] + cc["r-edge"], f"round1 cost {cost} over its bound")
    return Cover(ids, cost)


def _by_pair(instance: TapInstance, target: TapInstance, x: Mapping[int, Fraction]) -> dict[int, Fraction]:
    """Move each link's value onto the ``target`` link with the same endpoints."""
    out: dict[int, Fraction] = {}
    index = {}
    for lid, link in enumerate(target.links):
        index.setdefault(link.ends, lid)
    for lid, val in x.items():
        if val:
            t = index[instance.links[lid].ends]
            out[t] = out.get(t, ZERO) + Fraction(val)
    return out


def round2(instance: TapInstance, x: Mapping[int, Fraction], cost_mode: str = "general") -> Cover:
    if cost_mode == "unit":
        return _round2_unit(instance, x)
    return _round2_general(instance, x)


def _round2_general(instance: TapInstance, x: Mapping[int, Fraction]) -> Cover:
    if not instance.tree_edges:
        return Cover((), 0)
    cc = class_costs(instance, x)
    bound = Fraction(4, 3) * (2 * cc["in"] + cc["cross"] + cc["r-edge"])
    completed = shadow_complete(instance)
    full = completed.instance
    keep = [
        lid
        for lid in range(len(full.links))
        if not (classify_link(full, lid).kind == "in" and not classify_link(full, lid).up)
    ]
    spider = full.with_links(full.links[i] for i in keep)
    if spider.uncovered_edges:
        raise AssertionError("spider restriction left an edge uncovered")
    res = solve_lp(build_cut_lp(spider))
    report = check_half_integral(spider, res.x)
    _check(report.ok, f"spider extreme point not half-integral: {report}")
    ones = [i for i, v in res.x.items() if v == 1]
    halves = [i for i, v in res.x.items() if v == Fraction(1, 2)]
    residual = [f for f in spider.tree_edges if not spider.covers(ones, [f])]
    half_only = spider.with_links(spider.links[i] for i in halves)
    extra = solve_exact_subset(half_only, residual).links if residual else ()
    picked = ones + [halves[i] for i in extra]
    ids = tuple(sorted(completed.expand(keep[i] for i in picked)))
    cost = instance.cost_of(ids)
    _check(instance.covers(ids), "round2 output is not a cover")
    _check(cost <= bound, f"round2 cost {cost} > {bound}")
    return Cover(ids, cost)


def _merge_nested(inst: TapInstance, x: dict[int, Fraction]) -> None:
    while True:
        support = sorted(i for i, v in x.items() if v > 0)
        move = None
        for small, big in itertools.permutations(support, 2):
            a, b = inst.link_edges[small], inst.link_edges[big]
            if a < b:
                move = (small, big)
                break
        if move is None:
            return
        small, big = move
        x[big] += x[small]
        x[small] = ZERO


def _round2_unit(instance: TapInstance, x: Mapping[int, Fraction]) -> Cover:
    if not instance.tree_edges:
        return Cover((), 0)
    if not instance.is_unit:
        raise InvalidInstanceError("unit rounding needs unit costs")
    cc = class_costs(instance, x)
    bound = 2 * cc["in"] + Fraction(4, 3) * cc["cross"] + cc["r-edge"]
    closure = shadow_closure(instance)
    inst = closure.instance
    xs = _by_pair(instance, inst, x)
    xs = dict(eliminate_cross_cycles(inst, xs).x)
    in_links = [i for i in xs if classify_link(inst, i).kind == "in"]
    xs = up_vector(inst, xs, in_links)
    # peel leaves without a positive cross-link, contracting what each pick covers
    origin = list(range(len(inst.links)))
    cur = inst
    taken: list[int] = []
    while cur.tree_edges:
        _merge_nested(cur, xs)
        support = [i for i, v in xs.items() if v > 0]
        crossing = {
            w
            for i in support
            if classify_link(cur, i).kind == "cross"
            for w in cur.links[i].ends
        }
        leaf = next((v for v in cur.leaves if v not in crossing), None)
        if leaf is None:
            # the whole support covers; keep only a cheapest sub-cover of it
            rest = cur.with_links(cur.links[i] for i in support)
            taken.extend(origin[support[i]] for i in solve_exact(rest).links)
            break
        at_leaf = [i for i in support if leaf in cur.links[i].ends]
        if len(at_leaf) != 1 or xs[at_leaf[0]] < 1:
            raise AssertionError(f"leaf {leaf} has no unique heavy up-link")
        e = at_leaf[0]
        taken.append(origin[e])
        res = contract(cur, cur.link_edges[e])
        xs = {j: xs.get(old, ZERO) for j, old in enumerate(res.link_map)}
        origin = [origin[old] for old in res.link_map]
        cur = res.instance
    ids = tuple(sorted(closure.expand(taken)))
    cost = instance.cost_of(ids)
    _check(instance.covers(ids), "unit round2 output is not a cover")
    _check(cost <= bound, f"unit round2 size {cost} > {bound}")
    return Cover(ids, cost)


# ---- one subtree ----------------------------------------------------------


@dataclass(frozen=True)
class SubtreeReport:
    outcome: RoundingOutcome
    gamma_mass: Fraction  # x-mass of links with both ends in S (after contracting S')
    parent_mass: Fraction  # x-mass of links covering the parent edge of S
    round1_cost: int | None
    round2_cost: int | None


def cover_subtree(
    instance: TapInstance,
    x: Mapping[int, Fraction],
    s: int,
    thick: Iterable[int],
    params: PipelineParams,
    original: TapInstance | None = None,
    link_map: tuple[int, ...] | None = None,
) -> SubtreeReport:
    """Cover the subtree at ``s`` with its thick top contracted.

    ``original`` and ``link_map`` describe how ``instance`` was obtained by
    contraction; reported link ids and violated rows refer to ``original``.
    """
    original = original or instance
    link_map = link_map if link_map is not None else tuple(range(len(instance.links)))
    thick = set(thick)
    inside = instance.subtree_edges(s)
    outside = [f for f in instance.tree_edges if f not in inside]
    res = contract(instance, thick | set(outside))
    sub = res.instance
    xs = _push(x, (link_map[i] for i in res.link_map))
    xs = {i: v for i, v in xs.items() if v}
    nodes = instance.subtree(s)
    gamma = ZERO
    for i, link in enumerate(instance.links):
        if link.u in nodes and link.v in nodes:
            if res.node_map[link.u] != res.node_map[link.v]:
                gamma += link.cost * Fraction(x.get(link_map[i], 0))
    parent_mass = ZERO
    if s != instance.root:
        parent_mass = sum(
            (instance.links[i].cost * Fraction(x.get(link_map[i], 0)) for i in instance._psi[s]), ZERO
        )
    if not sub.tree_edges:
        return SubtreeReport(Cover((), 0), gamma, parent_mass, None, None)

    first = round1(sub, xs)
    if isinstance(first, ViolatedConstraint):
        orig_links = tuple(sorted(link_map[res.link_map[i]] for i in first.links))
        b = first.branch
        genuine = (
            set(b.edges) == (original.subtree_edges(b.top) | {b.top})
            and leaf_count(original, b.top) < params.k
        )
        viol = ViolatedConstraint(b, orig_links, first.lhs, first.rhs, genuine)
        return SubtreeReport(viol, gamma, parent_mass, None, None)
    second = round2(sub, xs, params.cost_mode)
    best = min((first, second), key=lambda c: (c.cost, c.links))
    ids = tuple(sorted(link_map[res.link_map[i]] for i in best.links))
    cost = original.cost_of(ids)
    bound = params.rho * gamma + Fraction(4, 3) * parent_mass
    _check(cost <= bound, f"subtree cover cost {cost} > {bound}")
    return SubtreeReport(Cover(ids, cost), gamma, parent_mass, first.cost, second.cost)


# ---- outer iteration ------------------------------------------------------


@dataclass
class OuterResult:
    outcome: RoundingOutcome
    passes: list[dict] = field(default_factory=list)
    thick_links: tuple[int, ...] = ()


def outer_iteration(instance: TapInstance, x: Mapping[int, Fraction], params: PipelineParams) -> OuterResult:
    x = {i: Fraction(v) for i, v in x.items()}
    max_cost = instance.max_cost
    bounded = params.bounded(max_cost)
    cur, cmap = instance, tuple(range(len(instance.links)))
    chosen: set[int] = set()
    postponed: set[int] = set()
    passes: list[dict] = []
    while len(cur.nodes) >= 2:
        xc = _push(x, cmap)
        s, small = find_min_k_lambda_subtree(cur, xc, params.k, params.lam)
        thick = thick_top(cur, xc, s, params.lam)
        rep = cover_subtree(cur, x, s, thick, params, instance, cmap)
        if isinstance(rep.outcome, ViolatedConstraint):
            return OuterResult(rep.outcome, passes)
        nodes = cur.subtree(s)
        delta = sum(
            (cur.links[i].cost * xc[i] for i, l in enumerate(cur.links) if l.u in nodes and l.v in nodes),
            ZERO,
        )
        added = rep.outcome.cost
        info = {
            "s": s,
            "small_case": small,
            "edges": len(cur.subtree_edges(s)),
            "thick": len(thick),
            "cost": added,
            "delta": delta,
            "round1": rep.round1_cost,
            "round2": rep.round2_cost,
        }
        if bounded:
            if not small:
                _check(2 * delta >= params.k - params.lam * max_cost, f"contraction mass {delta} too small")
            limit = params.rho if s == cur.root else params.local_bound(max_cost)
            _check(added <= limit * delta, f"pass ratio {added}/{delta} above {limit}")
        info["ratio"] = (Fraction(added) / delta) if delta else None
        passes.append(info)
        chosen.update(rep.outcome.links)
        postponed.update(thick)
        res = contract(cur, cur.subtree_edges(s))
        cur, cmap = res.instance, tuple(cmap[i] for i in res.link_map)
    extra = cover_thick(instance, x, params.lam, postponed)
    ids = tuple(sorted(chosen | set(extra)))
    cost = instance.cost_of(ids)
    _check(instance.covers(ids), "outer iteration output is not a cover")
    if bounded:
        objective = sum((instance.links[i].cost * v for i, v in x.items()), ZERO)
        limit = params.ratio_bound(max_cost) * objective
        _check(cost <= limit, f"outer iteration cost {cost} > {limit}")
    return OuterResult(Cover(ids, cost), passes, extra)


@dataclass
class DriverResult:
    links: tuple[int, ...]
    cost: int
    lp_value: Fraction
    ratio: Fraction
    bound: Fraction | None
    added_rows: list[dict]
    passes: list[dict]

    def trace(self) -> dict:
        return {
            "cost": self.cost,
            "lp_value": self.lp_value,
            "ratio": self.ratio,
            "bound": self.bound,
            "added_rows": self.added_rows,
            "iterations": self.passes,
        }


def lazy_kbranch_driver(instance: TapInstance, params: PipelineParams, max_rounds: int = 500) -> DriverResult:
    """Cutting-plane loop: solve, round, add the reported branch row, repeat."""
    if not instance.is_feasible:
        raise InfeasibleError(f"uncovered tree edges {instance.uncovered_edges}")
    model = build_cut_lp(instance)
    seen = set()
    added: list[dict] = []
    for _ in range(max_rounds):
        sol = solve_lp(model)
        out = outer_iteration(instance, sol.x, params)
        if isinstance(out.outcome, ViolatedConstraint):
            v = out.outcome
            row = v.row(instance)
            key = (row.coeffs, row.rhs)
            if key in seen:
                raise AssertionError("the same branch row was reported twice")
            seen.add(key)
            model.add_row(row)
            added.append({"edges": list(v.branch.edges), "lhs": v.lhs, "rhs": v.rhs, "genuine": v.genuine})
            continue
        cover = out.outcome
        lp = sol.objective
        ratio = Fraction(cover.cost) / lp if lp else Fraction(1 if cover.cost == 0 else 0)
        bound = params.ratio_bound(instance.max_cost) if params.bounded(instance.max_cost) else None
        if bound is not None:
            _check(ratio <= bound, f"driver ratio {ratio} > {bound}")
        return DriverResult(cover.links, cover.cost, lp, ratio, bound, added, out.passes)
    raise RuntimeError("cutting-plane loop did not settle")


# ---- small diameters ------------------------------------------------------


def reroot(instance: TapInstance, root: int) -> TapInstance:
    """Same tree and links, hung from a different node."""
    adj: dict[int, list[int]] = {v: [] for v in instance.nodes}
    for v in instance.tree_edges:
        p = instance.parent[v]
        adj[v].append(p)
        adj[p].append(v)
    parent, queue = {}, deque([root])
    seen = {root}
    while queue:
        v = queue.popleft()
        for w in sorted(adj[v]):
            if w not in seen:
                seen.add(w)
                parent[w] = v
                queue.append(w)
    return TapInstance(instance.nodes, root, parent, instance.links)


def _longest_path(instance: TapInstance) -> list[int]:
    best = None
    for u, v in itertools.combinations(instance.nodes, 2):
        d = len(instance.path_edges(u, v))
        if best is None or d > best[0]:
            best = (d, u, v)
    if best is None:
        return list(instance.nodes)
    return instance.path_nodes(best[1], best[2])


@dataclass(frozen=True)
class DiameterResult:
    links: tuple[int, ...]
    cost: int
    optimum: int
    ratio: Fraction
    bound: Fraction


def _diam_solve(instance: TapInstance) -> tuple[int, ...]:
    """Approximate cover for diameter <= 7 (link ids of ``instance``)."""
    if not instance.tree_edges:
        return ()
    d = instance.diameter()
    if d > 7:
        raise InvalidInstanceError(f"diameter {d} exceeds 7")
    if d <= 3:
        return solve_exact(instance).links
    path = _longest_path(instance)
    if d % 2 == 1:
        a, b = path[d // 2], path[d // 2 + 1]
        central = a if instance.parent.get(a) == b else b
        best = None
        for lid in instance._psi[central]:
            res = contract(instance, instance.link_edges[lid])
            rest = _diam_solve(res.instance)
            ids = tuple(sorted({lid} | res.original_links(rest)))
            key = (instance.cost_of(ids), ids)
            if best is None or key < best:
                best = key
        if best is None:
            raise InfeasibleError(f"central edge {central} has no covering link")
        return best[1]
    t = reroot(instance, path[d // 2])
    # (a) cover each branch at the center on its own
    per_branch: set[int] = set()
    for c in t.children[t.root]:
        edges = t.subtree_edges(c) | {c}
        keep = [f for f in t.tree_edges if f not in edges]
        res = contract(t, keep)
        per_branch |= res.original_links(_diam_solve(res.instance))
    # (b) spider-shaped instance: non-up in-links replaced by both up-shadows
    links, origin = [], []
    for lid, link in enumerate(t.links):
        cls = classify_link(t, lid)
        if cls.kind == "in" and not cls.up:
            a = t.lca(link.u, link.v)
            for w in (link.u, link.v):
                links.append(Link(w, a, link.cost))
                origin.append(lid)
        else:
            links.append(link)
            origin.append(lid)
    spider = t.with_links(links)
    spider_ids = {origin[i] for i in solve_exact(spider).links}
    options = [tuple(sorted(per_branch)), tuple(sorted(spider_ids))]
    return min(options, key=lambda ids: (instance.cost_of(ids), ids))


def solve_diameter_le7(instance: TapInstance) -> DiameterResult:
    d = instance.diameter()
    ids = _diam_solve(instance)
    cost = instance.cost_of(ids)
    _check(instance.covers(ids), "diameter solver output is not a cover")
    opt = solve_exact(instance).cost
    ratio = Fraction(cost, opt) if opt else Fraction(1)
    bound = Fraction(3, 2) if d <= 5 else Fraction(9, 5)
    _check(ratio <= bound, f"diameter-{d} ratio {ratio} > {bound}")
    return DiameterResult(ids, cost, opt, ratio, bound)
