"""Exact-rational LP engine and the relaxations built on it.

Models have the shape ``min c.x  s.t.  A x >= b,  0 <= x <= 1`` with
``A >= 0``.  Because every coefficient is non-negative, ``x = 1`` is feasible
whenever the model is, so the simplex starts from the all-upper-bound vertex
and needs no phase one.  Pivoting is fraction-free (Bareiss): the tableau holds
integers over a common positive denominator.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .core import TapInstance, classify_link, cover_set, cover_set_of, enumerate_branches
from .errors import InfeasibleError, LpInfeasibleError, LpUnboundedError
from .exact import ExactSolution, solve_branch, solve_exact_subset

log = logging.getLogger(__name__)

ZERO = Fraction(0)
ONE = Fraction(1)
HALF = Fraction(1, 2)


@dataclass(frozen=True)
class Row:
    coeffs: tuple[tuple[int, Fraction], ...]
    rhs: Fraction
    label: tuple = ()

    @classmethod
    def make(cls, coeffs: Mapping[int, object], rhs, label=()) -> "Row":
        items = tuple(sorted((j, Fraction(c)) for j, c in coeffs.items() if c))
        return cls(items, Fraction(rhs), label)

    def value(self, x: Mapping[int, Fraction]) -> Fraction:
        return sum((c * x.get(j, ZERO) for j, c in self.coeffs), ZERO)

    @property
    def kind(self) -> str:
        return self.label[0] if self.label else ""


@dataclass
class LpModel:
    costs: tuple[Fraction, ...]
    rows: list[Row] = field(default_factory=list)
    demands: dict[int, int] | None = None
    upper: Fraction = ONE

    @property
    def n(self) -> int:
        return len(self.costs)

    def add_row(self, row: Row) -> None:
        self.rows.append(row)

    def objective(self, x: Mapping[int, Fraction]) -> Fraction:
        return sum((c * x.get(j, ZERO) for j, c in enumerate(self.costs)), ZERO)

    def is_feasible_point(self, x: Mapping[int, Fraction]) -> bool:
        if any(not (ZERO <= x.get(j, ZERO) <= self.upper) for j in range(self.n)):
            return False
        return all(row.value(x) >= row.rhs for row in self.rows)

    def dump(self) -> str:
        """Plain-text rows ``sum coef*x_e >= rhs`` with exact rationals."""
        out = ["min " + " + ".join(f"{_q(c)}*x_{j}" for j, c in enumerate(self.costs))]
        for row in self.rows:
            lhs = " + ".join(f"{_q(c)}*x_{j}" for j, c in row.coeffs) or "0"
            out.append(f"{lhs} >= {_q(row.rhs)}")
        out.append(f"0 <= x_j <= {_q(self.upper)}")
        return "\n".join(out) + "\n"


def _q(v: Fraction) -> str:
    v = Fraction(v)
    return f"{v.numerator}/{v.denominator}"


@dataclass(frozen=True)
class LpResult:
    x: dict[int, Fraction]
    objective: Fraction
    duals: tuple[Fraction, ...]  # one per model row, for the ">=" rows
    upper_duals: dict[int, Fraction]  # multipliers of x_j <= upper
    basis: tuple[int, ...]  # basic columns; n + i is the surplus of row i
    at_upper: frozenset[int]
    rounds: int = 1


# ---- simplex core --------------------------------------------------------


def _lcm_den(values: Iterable[Fraction]) -> int:
    out = 1
    for v in values:
        out = out * v.denominator // math.gcd(out, v.denominator)
    return out


def _simplex(costs: Sequence[Fraction], rows: Sequence[Row], ub: Fraction, max_pivots=200_000):
    n, m = len(costs), len(rows)
    if ub.denominator != 1:
        raise ValueError("upper bound must be integral")
    upper = int(ub)
    cscale = _lcm_den(costs)
    c = [int(v * cscale) for v in costs] + [0] * m
    rscale = []
    T, beta = [], []
    for i, row in enumerate(rows):
        s = _lcm_den([row.rhs] + [v for _, v in row.coeffs])
        rscale.append(s)
        line = [0] * (n + m)
        total = 0
        for j, v in row.coeffs:
            if v < 0:
                raise ValueError("coefficients must be non-negative")
            a = int(v * s)
            line[j] = -a
            total += a
        line[n + i] = 1
        b = int(row.rhs * s)
        if total * upper < b:
            raise LpInfeasibleError(f"row {row.label or i} cannot be met within the bounds")
        T.append(line)
        beta.append(total * upper - b)
    basic = [n + i for i in range(m)]
    at_upper = [True] * n + [False] * m
    is_basic = [False] * n + [True] * m
    d = list(c)
    D = 1
    pivots = 0

    while True:
        q = -1
        for j in range(n + m):
            if is_basic[j]:
                continue
            if (d[j] < 0 and not at_upper[j]) or (d[j] > 0 and at_upper[j]):
                q = j
                break
        if q < 0:
            break
        pivots += 1
        if pivots > max_pivots:
            raise RuntimeError("simplex pivot limit reached")
        direction = -1 if at_upper[q] else 1
        best_t, leave_row, leave_to_upper = None, -1, False
        for i in range(m):
            a = T[i][q] * direction
            if a > 0:
                t = Fraction(beta[i], a)
                to_up = False
            elif a < 0 and basic[i] < n:
                t = Fraction(upper * D - beta[i], -a)
                to_up = True
            else:
                continue
            if best_t is None or t < best_t or (t == best_t and basic[i] < basic[leave_row]):
                best_t, leave_row, leave_to_upper = t, i, to_up
        flip_t = Fraction(upper) if q < n else None
        if best_t is None and flip_t is None:
            raise LpUnboundedError("objective unbounded below")
        if best_t is None or (flip_t is not None and flip_t <= best_t):
            delta = direction * upper
            for i in range(m):
                if T[i][q]:
                    beta[i] -= T[i][q] * delta
            at_upper[q] = not at_upper[q]
            continue
        if at_upper[q]:
            for i in range(m):
                if T[i][q]:
                    beta[i] += T[i][q] * upper
            at_upper[q] = False
        r = leave_row
        p = T[r][q]
        prow = T[r]
        pb = beta[r]
        for i in range(m):
            if i == r:
                continue
            f = T[i][q]
            row_i = T[i]
            if f:
                T[i] = [(p * a - f * b) // D for a, b in zip(row_i, prow)]
                beta[i] = (p * beta[i] - f * pb) // D
            elif p != D:
                T[i] = [p * a // D for a in row_i]
                beta[i] = p * beta[i] // D
        fq = d[q]
        d = [(p * a - fq * b) // D for a, b in zip(d, prow)]
        D = p
        if D < 0:
            T = [[-a for a in row] for row in T]
            beta = [-b for b in beta]
            d = [-a for a in d]
            D = -D
        leaving = basic[r]
        basic[r] = q
        is_basic[q] = True
        is_basic[leaving] = False
        if leave_to_upper:
            for i in range(m):
                if T[i][leaving]:
                    beta[i] -= T[i][leaving] * upper
            at_upper[leaving] = True
        else:
            at_upper[leaving] = False

    x = {}
    for j in range(n):
        x[j] = Fraction(upper) if (not is_basic[j] and at_upper[j]) else ZERO
    for i, j in enumerate(basic):
        if j < n:
            x[j] = Fraction(beta[i], D)
    duals = tuple(Fraction(d[n + i] * rscale[i], D * cscale) for i in range(m))
    zdual = {
        j: Fraction(-d[j], D * cscale)
        for j in range(n)
        if not is_basic[j] and at_upper[j] and d[j]
    }
    ups = frozenset(j for j in range(n) if not is_basic[j] and at_upper[j])
    return x, duals, zdual, tuple(basic), ups


def _check_optimality(model: LpModel, rows, x, duals, zdual):
    obj = model.objective(x)
    for i, row in enumerate(rows):
        slack = row.value(x) - row.rhs
        if slack < 0 or duals[i] < 0 or (duals[i] and slack):
            raise AssertionError(f"complementary slackness broken on row {i}")
    reduced = list(model.costs)
    for i, row in enumerate(rows):
        if duals[i]:
            for j, a in row.coeffs:
                reduced[j] -= duals[i] * a
    for j in range(model.n):
        rc = reduced[j] + zdual.get(j, ZERO)
        if rc < 0 or (rc and x[j] != 0):
            raise AssertionError(f"dual infeasible at column {j}")
        if zdual.get(j, ZERO) and x[j] != model.upper:
            raise AssertionError(f"upper-bound dual on non-tight column {j}")
    dual_obj = sum((y * row.rhs for y, row in zip(duals, rows)), ZERO)
    dual_obj -= model.upper * sum(zdual.values(), ZERO)
    if dual_obj != obj:
        raise AssertionError(f"duality gap {obj} vs {dual_obj}")


def solve_lp(model: LpModel, lazy: bool | None = None, batch: int = 25) -> LpResult:
    """Optimal basic solution of ``model`` with exact duals.

    With ``lazy`` (the default for models holding more than one row kind and
    many rows) the cut rows are solved first and violated rows are added in
    batches; a vertex of the relaxed polytope that satisfies every row is a
    vertex of the full one, so the answer is the same.
    """
    rows = model.rows
    if lazy is None:
        lazy = len(rows) > 40 and any(r.kind == "cut" for r in rows)
    if lazy:
        active = [i for i, r in enumerate(rows) if r.kind == "cut"]
    else:
        active = list(range(len(rows)))
    rounds = 0
    while True:
        rounds += 1
        sub = [rows[i] for i in active]
        x, sub_duals, zdual, basis, ups = _simplex(model.costs, sub, model.upper)
        missing = [i for i in range(len(rows)) if i not in set(active) and rows[i].value(x) < rows[i].rhs]
        if not missing:
            break
        active = sorted(set(active) | set(missing[:batch]))
    duals = [ZERO] * len(rows)
    for pos, i in enumerate(active):
        duals[i] = sub_duals[pos]
    _check_optimality(model, rows, x, duals, zdual)
    mapped_basis = tuple(j if j < model.n else model.n + active[j - model.n] for j in basis)
    return LpResult(x, model.objective(x), tuple(duals), zdual, mapped_basis, ups, rounds)


def rank(matrix: list[list[Fraction]]) -> int:
    mat = [list(r) for r in matrix]
    rk, cols = 0, len(mat[0]) if mat else 0
    for col in range(cols):
        piv = next((i for i in range(rk, len(mat)) if mat[i][col] != 0), None)
        if piv is None:
            continue
        mat[rk], mat[piv] = mat[piv], mat[rk]
        for i in range(len(mat)):
            if i != rk and mat[i][col]:
                f = mat[i][col] / mat[rk][col]
                mat[i] = [a - f * b for a, b in zip(mat[i], mat[rk])]
        rk += 1
    return rk


def is_extreme_point(model: LpModel, x: Mapping[int, Fraction]) -> bool:
    """Tight rows restricted to the strictly-between-bounds columns have full column rank."""
    free = [j for j in range(model.n) if ZERO < x.get(j, ZERO) < model.upper]
    if not free:
        return True
    tight = [r for r in model.rows if r.value(x) == r.rhs]
    if not tight:
        return False
    pos = {j: k for k, j in enumerate(free)}
    mat = []
    for r in tight:
        line = [ZERO] * len(free)
        for j, a in r.coeffs:
            if j in pos:
                line[pos[j]] = a
        mat.append(line)
    return rank(mat) == len(free)


# ---- model builders ------------------------------------------------------


def _costs(instance: TapInstance) -> tuple[Fraction, ...]:
    return tuple(Fraction(l.cost) for l in instance.links)


def build_cut_lp(instance: TapInstance, demands: Mapping[int, int] | None = None) -> LpModel:
    model = LpModel(_costs(instance), demands=dict(demands) if demands is not None else None)
    for f in instance.tree_edges:
        b = 1 if demands is None else demands.get(f, 0)
        if b <= 0:
            continue
        psi = cover_set(instance, f)
        if not psi:
            raise InfeasibleError(f"tree edge {f} has no covering link")
        model.add_row(Row.make({i: 1 for i in psi}, b, ("cut", f)))
    return model


def branch_row(instance: TapInstance, branch, tau: int | None = None) -> Row:
    if tau is None:
        tau = solve_branch(instance, branch).cost
    coeffs = {i: instance.links[i].cost for i in cover_set_of(instance, branch.edges)}
    return Row.make(coeffs, tau, ("branch", branch.edges))


def build_kbranch_lp(instance: TapInstance, k: int) -> LpModel:
    model = build_cut_lp(instance)
    for branch in enumerate_branches(instance, k):
        model.add_row(branch_row(instance, branch))
    return model


def on_common_path(instance: TapInstance, edges: Iterable[int]) -> bool:
    """True if all given tree edges lie on a single tree path."""
    ends = set()
    for f in edges:
        ends.update((f, instance.parent[f]))
    span: set[int] = set()
    for u, v in itertools.combinations(sorted(ends), 2):
        span |= instance.path_edges(u, v)
    degree: dict[int, int] = {}
    for f in span:
        for w in (f, instance.parent[f]):
            degree[w] = degree.get(w, 0) + 1
    return max(degree.values(), default=0) <= 2


def is_bunch(instance: TapInstance, edges: Iterable[int]) -> bool:
    edges = sorted(set(edges))
    if len(edges) % 2 == 0:
        return False
    return not any(on_common_path(instance, t) for t in itertools.combinations(edges, 3))


def bunches3(instance: TapInstance) -> list[tuple[int, int, int]]:
    return [t for t in itertools.combinations(instance.tree_edges, 3) if not on_common_path(instance, t)]


def build_bunch3_lp(instance: TapInstance) -> LpModel:
    """Cut rows plus one row ``x(psi(B)) >= 2`` per 3-bunch."""
    model = build_cut_lp(instance)
    for t in bunches3(instance):
        psi = cover_set_of(instance, t)
        model.add_row(Row.make({i: 1 for i in psi}, (len(t) + 1) // 2, ("bunch", t)))
    return model


# ---- structural checks ---------------------------------------------------


@dataclass(frozen=True)
class HalfIntegralReport:
    violations: tuple[tuple[int, Fraction], ...]
    root_violations: tuple[tuple[int, Fraction], ...]

    @property
    def ok(self) -> bool:
        return not self.violations and not self.root_violations


def check_half_integral(instance: TapInstance, x: Mapping[int, Fraction]) -> HalfIntegralReport:
    bad, bad_root = [], []
    r = instance.root
    for lid in sorted(x):
        v = Fraction(x[lid])
        if v not in (ZERO, HALF, ONE):
            bad.append((lid, v))
        link = instance.links[lid]
        if r in (link.u, link.v) and v not in (ZERO, ONE):
            bad_root.append((lid, v))
    return HalfIntegralReport(tuple(bad), tuple(bad_root))


def _cross_support(instance: TapInstance, x: Mapping[int, Fraction]) -> list[int]:
    return [
        lid
        for lid in sorted(x)
        if x[lid] > 0 and classify_link(instance, lid).kind == "cross"
    ]


@dataclass(frozen=True)
class CrossCycleReport:
    components: int
    cycles: tuple[tuple[int, ...], ...]
    even_cycles: tuple[tuple[int, ...], ...]
    multi_cycle_components: int

    @property
    def ok(self) -> bool:
        return not self.even_cycles and self.multi_cycle_components == 0


def cross_cycle_audit(instance: TapInstance, x: Mapping[int, Fraction]) -> CrossCycleReport:
    """Check that positive cross-links form no even cycle and at most one cycle per component."""
    support = _cross_support(instance, x)
    adj: dict[int, list[tuple[int, int]]] = {}
    for lid in support:
        l = instance.links[lid]
        adj.setdefault(l.u, []).append((l.v, lid))
        adj.setdefault(l.v, []).append((l.u, lid))
    seen: set[int] = set()
    cycles, even, multi, comps = [], [], 0, 0
    for start in sorted(adj):
        if start in seen:
            continue
        comps += 1
        comp_nodes, comp_links, stack = set(), set(), [start]
        while stack:
            v = stack.pop()
            if v in comp_nodes:
                continue
            comp_nodes.add(v)
            for w, lid in adj[v]:
                comp_links.add(lid)
                if w not in comp_nodes:
                    stack.append(w)
        seen |= comp_nodes
        excess = len(comp_links) - len(comp_nodes) + 1
        if excess >= 2:
            multi += 1
        elif excess == 1:
            cyc = _core_cycle(instance, comp_links)
            cycles.append(cyc)
            if len(cyc) % 2 == 0:
                even.append(cyc)
    return CrossCycleReport(comps, tuple(cycles), tuple(even), multi)


def _core_cycle(instance: TapInstance, links: set[int]) -> tuple[int, ...]:
    """Links left after repeatedly stripping degree-one nodes (unicyclic input)."""
    links = set(links)
    while True:
        deg: dict[int, list[int]] = {}
        for lid in links:
            l = instance.links[lid]
            deg.setdefault(l.u, []).append(lid)
            deg.setdefault(l.v, []).append(lid)
        strip = {ls[0] for ls in deg.values() if len(ls) == 1}
        if not strip:
            return tuple(sorted(links))
        links -= strip


def _find_cycle(instance: TapInstance, support: list[int]) -> list[int] | None:
    """First cycle met by DFS from the smallest node id, as an ordered link list."""
    adj: dict[int, list[tuple[int, int]]] = {}
    for lid in support:
        l = instance.links[lid]
        adj.setdefault(l.u, []).append((l.v, lid))
        adj.setdefault(l.v, []).append((l.u, lid))
    for v in adj:
        adj[v].sort()
    visited: set[int] = set()
    for start in sorted(adj):
        if start in visited:
            continue
        parent_link = {start: None}
        parent_node = {start: None}
        stack = [(start, iter(adj[start]))]
        visited.add(start)
        while stack:
            v, it = stack[-1]
            step = next(it, None)
            if step is None:
                stack.pop()
                continue
            w, lid = step
            if lid == parent_link[v]:
                continue
            if w in visited:
                if w in parent_link and _on_stack(stack, w):
                    cycle = [lid]
                    u = v
                    while u != w:
                        cycle.append(parent_link[u])
                        u = parent_node[u]
                    return cycle
                continue
            visited.add(w)
            parent_link[w] = lid
            parent_node[w] = v
            stack.append((w, iter(adj[w])))
    return None


def _on_stack(stack, node) -> bool:
    return any(v == node for v, _ in stack)


@dataclass(frozen=True)
class EliminationReport:
    x: dict[int, Fraction]
    cycles: tuple[tuple[tuple[int, ...], Fraction, Fraction], ...]  # (cycle, removed, cycle mass)
    cross_before: Fraction
    cross_after: Fraction
    objective_increase: Fraction


def eliminate_cross_cycles(instance: TapInstance, x: Mapping[int, Fraction]) -> EliminationReport:
    """Break every cycle of positive cross-links.

    The lightest link of a cycle gives its value to both cycle neighbours and
    drops to zero; both neighbours are cross-links sharing an endpoint with it,
    so together they cover its whole path.
    """
    x = {i: Fraction(v) for i, v in x.items()}
    before = sum((x[i] for i in _cross_support(instance, x)), ZERO)
    obj0 = sum((instance.links[i].cost * v for i, v in x.items()), ZERO)
    log_cycles = []
    while True:
        cycle = _find_cycle(instance, _cross_support(instance, x))
        if cycle is None:
            break
        mass = sum((x[i] for i in cycle), ZERO)
        pos = min(range(len(cycle)), key=lambda k: (x[cycle[k]], cycle[k]))
        e = cycle[pos]
        neighbours = {cycle[pos - 1], cycle[(pos + 1) % len(cycle)]} - {e}
        amount = x[e]
        for nb in sorted(neighbours):
            x[nb] += amount
        x[e] = ZERO
        log_cycles.append((tuple(cycle), amount, mass))
    after = sum((x[i] for i in _cross_support(instance, x)), ZERO)
    obj1 = sum((instance.links[i].cost * v for i, v in x.items()), ZERO)
    return EliminationReport(x, tuple(log_cycles), before, after, obj1 - obj0)


# ---- up-link covers ------------------------------------------------------


@dataclass(frozen=True)
class UplinkCover:
    links: tuple[int, ...]
    cost: int
    lp_value: Fraction
    fallback: bool


def solve_uplink_cover(instance: TapInstance, edges: Iterable[int]) -> UplinkCover:
    """Cheapest cover of ``edges`` by up-links, read off an LP vertex.

    Vertical paths give a network matrix, so the vertex should be integral;
    that is checked, and a failed check falls back to the exact DP.
    """
    edges = sorted(set(edges))
    if not edges:
        return UplinkCover((), 0, ZERO, False)
    up_ids = [i for i in range(len(instance.links)) if classify_link(instance, i).up]
    local = {lid: k for k, lid in enumerate(up_ids)}
    model = LpModel(tuple(Fraction(instance.links[i].cost) for i in up_ids))
    for f in edges:
        psi = [local[i] for i in cover_set(instance, f) if i in local]
        if not psi:
            raise InfeasibleError(f"tree edge {f} has no covering up-link")
        model.add_row(Row.make({j: 1 for j in psi}, 1, ("cut", f)))
    res = solve_lp(model)
    if all(v.denominator == 1 for v in res.x.values()):
        chosen = tuple(sorted(up_ids[j] for j, v in res.x.items() if v))
        return UplinkCover(chosen, instance.cost_of(chosen), res.objective, False)
    log.warning("up-link LP vertex is fractional; using the exact fallback")
    up_only = instance.with_links(instance.links[i] for i in up_ids)
    sol = solve_exact_subset(up_only, edges)
    chosen = tuple(sorted(up_ids[j] for j in sol.links))
    return UplinkCover(chosen, sol.cost, res.objective, True)


def lp_value(model: LpModel) -> Fraction:
    return solve_lp(model).objective


def exact_solution_of(cover: UplinkCover) -> ExactSolution:
    return ExactSolution(cover.links, cover.cost)
