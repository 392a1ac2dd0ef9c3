"""Dynamic-optimal and heuristic transmission plans.

Three independent routes to the optimum:

* :func:`build_ssp_graph` + :func:`solve_shortest_path` -- Dijkstra on the
  expectation-collapsed graph whose nodes are remaining sizes in quanta;
* :func:`solve_policy_iteration` -- policy iteration on the original
  stochastic shortest path (self-loops included);
* :func:`solve_mip` -- depth-first branch-and-bound over slot counts ``x``
  and a single fractional final slot ``y``.

Sizes are integer quanta throughout. Costs are exact Fractions unless float
availabilities are supplied through ``probs``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numpy as np

from .analytic import _probs, max_throughput_channel, plan_time, static_optimal_channel
from .model import Scenario
from .plans import DynamicLookup, PlanRule, PolicyPlan, PolicyRule, StaticRule

DEFAULT_MAX_NODES = 5_000_000


class StateLimitExceeded(RuntimeError):
    pass


class _Costs:
    """Per-channel cost terms for full and final slots."""

    def __init__(self, scenario: Scenario, probs: Mapping[int, object] | None = None):
        self.scenario = scenario
        self.p = _probs(scenario, probs)
        exact = all(isinstance(v, (Fraction, int)) for v in self.p.values())
        delta = scenario.slot_seconds if exact else float(scenario.slot_seconds)
        self.exact = exact
        self.delta = delta
        self.ids = [ch.id for ch in scenario.channels]
        self.d = {cid: scenario.slot_quanta(cid) for cid in self.ids}
        self.full = {cid: delta / self.p[cid] for cid in self.ids}
        self.base = {cid: delta * (1 - self.p[cid]) / self.p[cid] for cid in self.ids}
        self.unit = {cid: delta / self.d[cid] for cid in self.ids}

    def edge(self, s: int, cid: int):
        """(next state, expected cost) for sensing ``cid`` at remaining ``s``."""
        d = self.d[cid]
        if s > d:
            return s - d, self.full[cid]
        return 0, self.base[cid] + s * self.unit[cid]


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    channel: int
    cost: object
    amount: int


@dataclass
class SspGraph:
    """Expectation-collapsed shortest-path graph from ``source`` to 0."""

    scenario: Scenario
    source: int
    nodes: tuple[int, ...]
    edges: dict[int, list[Edge]]

    @property
    def edge_count(self) -> int:
        return sum(len(v) for v in self.edges.values())


def build_ssp_graph(scenario: Scenario, size: int, probs: Mapping[int, object] | None = None,
                    max_nodes: int = DEFAULT_MAX_NODES) -> SspGraph:
    if size <= 0:
        raise ValueError("file size must be positive")
    costs = _Costs(scenario, probs)
    seen = {size}
    frontier = [size]
    edges: dict[int, list[Edge]] = {}
    while frontier:
        nxt = []
        for s in frontier:
            out = []
            for cid in costs.ids:
                dst, cost = costs.edge(s, cid)
                out.append(Edge(s, dst, cid, cost, s - dst))
                if dst not in seen:
                    seen.add(dst)
                    if len(seen) > max_nodes:
                        raise StateLimitExceeded(
                            f"more than {max_nodes} states; use solve_mip for this file size")
                    if dst:
                        nxt.append(dst)
            edges[s] = out
        frontier = nxt
    return SspGraph(scenario, size, tuple(sorted(seen, reverse=True)), edges)


def solve_shortest_path(graph: SspGraph) -> tuple[PolicyPlan, object]:
    """Dijkstra from the source; returns the optimal plan and its expected time."""
    dist = {graph.source: 0}
    pred: dict[int, Edge] = {}
    heap = [(0, -graph.source)]
    done = set()
    while heap:
        d, neg = heapq.heappop(heap)
        s = -neg
        if s in done:
            continue
        done.add(s)
        if s == 0:
            break
        for e in graph.edges[s]:
            nd = d + e.cost
            if e.dst not in dist or nd < dist[e.dst]:
                dist[e.dst] = nd
                pred[e.dst] = e
                heapq.heappush(heap, (nd, -e.dst))
    steps = []
    s = 0
    while s != graph.source:
        e = pred[s]
        steps.append((e.channel, e.amount))
        s = e.src
    steps.reverse()
    return PolicyPlan.from_steps(steps, graph.scenario), dist[0]


def solve_policy_iteration(scenario: Scenario, size: int, probs: Mapping[int, object] | None = None,
                           graph: SspGraph | None = None,
                           max_nodes: int = DEFAULT_MAX_NODES) -> tuple[DynamicLookup, object]:
    """Policy iteration on the stochastic shortest path with self-loops.

    A state's value under channel ``i`` satisfies
    ``V(s) = (1-p)(delta + V(s)) + p(c + V(s'))``; evaluation solves this
    exactly, improvement keeps the incumbent action on ties.
    """
    costs = _Costs(scenario, probs)
    if graph is None:
        graph = build_ssp_graph(scenario, size, probs, max_nodes)
    states = sorted(s for s in graph.nodes if s)
    delta, p, d, unit = costs.delta, costs.p, costs.d, costs.unit

    def step(s, cid):
        dd = d[cid]
        return (max(0, s - dd), delta if s > dd else s * unit[cid])

    trans = {s: {cid: step(s, cid) for cid in costs.ids} for s in states}
    start = max_throughput_channel(scenario, costs.p, strict=False)
    policy = {s: start for s in states}
    while True:
        value = {0: 0}
        for s in states:
            cid = policy[s]
            nxt, c = trans[s][cid]
            value[s] = delta * (1 - p[cid]) / p[cid] + c + value[nxt]
        changed = False
        for s in states:
            cur = policy[s]

            def q(cid):
                nxt, c = trans[s][cid]
                return (1 - p[cid]) * (delta + value[s]) + p[cid] * (c + value[nxt])

            best_q = q(cur)
            best = cur
            for cid in costs.ids:
                qq = q(cid)
                if qq < best_q:
                    best, best_q = cid, qq
            if best != cur:
                policy[s] = best
                changed = True
        if not changed:
            return DynamicLookup(policy), value[size]


@dataclass(frozen=True)
class MipSolution:
    """Slot counts per channel and the final fractional slot (scenario channel order)."""

    ids: tuple[int, ...]
    x: tuple[int, ...]
    y: tuple[Fraction, ...]
    objective: object
    final_quanta: int = 0  # set by the solver; y may be float under float availabilities

    @property
    def final_channel(self) -> int | None:
        for cid, yy in zip(self.ids, self.y):
            if yy > 0:
                return cid
        return None

    def check(self, scenario: Scenario, size: int) -> None:
        if sum(1 for v in self.y if v > 0) > 1:
            raise ValueError("more than one fractional final slot")
        if any(v < 0 for v in self.x) or any(not 0 <= v < 1 for v in self.y):
            raise ValueError("slot counts out of range")
        total = sum(xx * scenario.slot_quanta(cid) for cid, xx in zip(self.ids, self.x))
        if self.final_quanta:
            total += self.final_quanta
        else:
            total += sum(yy * scenario.slot_quanta(cid) for cid, yy in zip(self.ids, self.y))
        if total != size:
            raise ValueError(f"solution carries {total} quanta, file has {size}")


def mip_objective(scenario: Scenario, x, y, probs: Mapping[int, object] | None = None):
    """Objective of the condensed program for counts ``x`` and fractions ``y``."""
    costs = _Costs(scenario, probs)
    total = 0
    for cid, xx, yy in zip(costs.ids, x, y):
        total += xx * costs.full[cid]
        if yy > 0:
            total += costs.base[cid] + costs.delta * yy
    return total


def solve_mip(scenario: Scenario, size: int, probs: Mapping[int, object] | None = None,
              prune: bool = True) -> tuple[MipSolution, PolicyPlan]:
    """Branch-and-bound over the condensed mixed-integer program.

    Channels are branched in decreasing throughput order. A node is pruned
    when its cost plus a lower bound on finishing the remaining quanta
    exceeds the incumbent. Among optimal points the one whose plan switches
    least, then the lexicographically smallest ``x``, is returned.
    """
    if size <= 0:
        raise ValueError("file size must be positive")
    costs = _Costs(scenario, probs)
    ids = costs.ids
    pos = {cid: n for n, cid in enumerate(ids)}
    tp = {cid: costs.d[cid] * float(costs.p[cid]) for cid in ids}
    order = sorted(ids, key=lambda c: (-tp[c], c))
    d = [costs.d[c] for c in order]
    full_f = [float(costs.full[c]) for c in order]
    per_q = [full_f[n] / d[n] for n in range(len(order))]
    base_f = [float(costs.base[c]) for c in order]
    unit_f = [float(costs.unit[c]) for c in order]
    n_ch = len(order)
    dmax = max(d)
    # cheapest full-slot rate among channels not yet branched on
    tail_rate = [min(per_q[n:]) for n in range(n_ch)] + [math.inf]
    finals = sorted(range(n_ch), key=lambda n: per_q[n])

    # per level: (d_j - 1, saving per quantum of finishing on j) for the finals worth trying
    savings = []
    for n in range(n_ch):
        cu = tail_rate[n]
        savings.append([(d[j] - 1, cu - per_q[j]) for j in finals if per_q[j] < cu] or [(0, 0.0)])

    def lower_bound(rem: int, level: int) -> float:
        if rem == 0:
            return 0.0
        if level == n_ch:
            fits = [per_q[j] * rem for j in finals if rem < d[j]]
            return min(fits) if fits else math.inf
        best = 0.0
        for cap, gain in savings[level]:
            v = gain * (rem if rem < cap else cap)
            if v > best:
                best = v
        return tail_rate[level] * rem - best

    best_key = None
    best_point = None
    best_f = math.inf
    tol = 1e-9
    x = [0] * n_ch

    def consider(cost_f: float, rem: int):
        nonlocal best_key, best_point, best_f
        options = [(-1, 0.0)] if rem == 0 else [(j, base_f[j] + rem * unit_f[j]) for j in range(n_ch) if rem < d[j]]
        for j, extra in options:
            total_f = cost_f + extra
            if prune and total_f > best_f + tol * max(1.0, best_f):
                continue
            xs = [0] * n_ch
            for n in range(n_ch):
                xs[pos[order[n]]] = x[n]
            if costs.exact:
                ys = [Fraction(0)] * n_ch
                if j >= 0:
                    ys[pos[order[j]]] = Fraction(rem, d[j])
                obj = mip_objective(scenario, xs, ys, costs.p)
            else:
                ys = [0.0] * n_ch
                if j >= 0:
                    ys[pos[order[j]]] = rem / d[j]
                obj = _float_obj(costs, xs, ys)
            if best_key is not None and obj > best_key[0]:
                continue
            sol = MipSolution(tuple(ids), tuple(xs), tuple(ys), obj, final_quanta=rem if j >= 0 else 0)
            key = (obj, plan_from_counts(sol, scenario).switches, tuple(xs))
            if best_key is None or key < best_key:
                best_key, best_point, best_f = key, sol, float(obj)

    def branch(level: int, rem: int, cost_f: float):
        if level == n_ch:
            if rem < dmax:
                consider(cost_f, rem)
            return
        dl = d[level]
        hi = rem // dl
        lo = 0
        if level == n_ch - 1:
            lo = max(0, -(-(rem - dmax + 1) // dl))
        for xx in range(hi, lo - 1, -1):
            nrem = rem - xx * dl
            ncost = cost_f + xx * full_f[level]
            if prune and ncost + lower_bound(nrem, level + 1) > best_f + tol * max(1.0, best_f):
                continue
            x[level] = xx
            branch(level + 1, nrem, ncost)
        x[level] = 0

    branch(0, size, 0.0)
    return best_point, plan_from_counts(best_point, scenario)


def _float_obj(costs: _Costs, xs, ys) -> float:
    total = 0.0
    for cid, xx, yy in zip(costs.ids, xs, ys):
        total += xx * costs.full[cid]
        if yy > 0:
            total += costs.base[cid] + costs.delta * float(yy)
    return total


def plan_from_counts(solution: MipSolution, scenario: Scenario) -> PolicyPlan:
    """Contiguous per-channel runs chained by nearest channel index, final slot last.

    The chain starts at the channel with the most slots (smallest id on ties).
    """
    counts = {cid: xx for cid, xx in zip(solution.ids, solution.x) if xx > 0}
    segments = []
    if counts:
        cur = min(counts, key=lambda c: (-counts[c], c))
        left = set(counts)
        while True:
            segments.append((cur, counts[cur]))
            left.discard(cur)
            if not left:
                break
            cur = min(left, key=lambda c: (abs(c - cur), c))
    final = None
    fc = solution.final_channel
    if fc is not None:
        amount = solution.final_quanta
        if not amount:
            amount = int(solution.y[solution.ids.index(fc)] * scenario.slot_quanta(fc))
        final = (fc, amount)
    return PolicyPlan(tuple(segments), final)


def heuristic_policy(scenario: Scenario, size: int,
                     probs: Mapping[int, object] | None = None) -> tuple[PolicyPlan, object]:
    """Whole max-throughput slots first, then the static optimum for the remainder."""
    if size <= 0:
        raise ValueError("file size must be positive")
    p = _probs(scenario, probs)
    star = max_throughput_channel(scenario, p, strict=False)
    k, rest = divmod(size, scenario.slot_quanta(star))
    if rest == 0:
        plan = PolicyPlan(((star, k),))
    else:
        j, _ = static_optimal_channel(scenario, scenario.to_mb(rest), None if probs is None else p)
        tail = PolicyPlan.static(scenario, j, rest)
        head = ((star, k),) if k else ()
        segs = head + tail.segments
        if len(segs) >= 2 and segs[0][0] == segs[1][0]:
            segs = ((segs[0][0], segs[0][1] + segs[1][1]),) + segs[2:]
        plan = PolicyPlan(segs, tail.final)
    return plan, plan_time(plan, scenario, p)


def static_plan(scenario: Scenario, size: int, probs: Mapping[int, object] | None = None,
                channel_id: int | None = None) -> tuple[PolicyPlan, object]:
    """Static plan on ``channel_id`` (default: the static optimum for ``size``)."""
    p = _probs(scenario, probs)
    if channel_id is None:
        channel_id, _ = static_optimal_channel(scenario, scenario.to_mb(size), None if probs is None else p)
    plan = PolicyPlan.static(scenario, channel_id, size)
    return plan, plan_time(plan, scenario, p)


def value_table(scenario: Scenario, max_size: int, probs: Mapping[int, object] | None = None,
                worst: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Optimal (or, with ``worst``, pessimal) expected time for every size 0..max_size.

    Float backward recursion over all integer states; returns ``(value, choice)``.
    """
    costs = _Costs(scenario, probs)
    ids = costs.ids
    d = [costs.d[c] for c in ids]
    full = [float(costs.full[c]) for c in ids]
    base = [float(costs.base[c]) for c in ids]
    unit = [float(costs.unit[c]) for c in ids]
    value = np.zeros(max_size + 1)
    choice = np.zeros(max_size + 1, dtype=np.int64)
    vals = [0.0] * (max_size + 1)
    pick = min if not worst else max
    for s in range(1, max_size + 1):
        cands = []
        for n in range(len(ids)):
            if s > d[n]:
                cands.append((full[n] + vals[s - d[n]], n))
            else:
                cands.append((base[n] + s * unit[n], n))
        v, n = pick(cands, key=lambda t: t[0])
        vals[s] = v
        choice[s] = ids[n]
    value[:] = vals
    return value, choice


def solve_dp(scenario: Scenario, size: int, probs: Mapping[int, object] | None = None) -> tuple[PolicyPlan, float]:
    """Float backward recursion over the states reachable from ``size``.

    Fast path for repeated solves under estimated availabilities; same
    optimum as the exact solvers up to rounding.
    """
    costs = _Costs(scenario, probs)
    ids = costs.ids
    d = [costs.d[c] for c in ids]
    full = [float(costs.full[c]) for c in ids]
    base = [float(costs.base[c]) for c in ids]
    unit = [float(costs.unit[c]) for c in ids]
    g = 0
    for dd in d:
        g = math.gcd(g, dd)
    r = size % g
    # reachable positive states are size - m*g (>= 1), plus states below every slot
    states = range(r if r else g, size + 1, g)
    val = {0: 0.0}
    arg = {}
    n_ch = len(ids)
    for s in states:
        best = math.inf
        bn = 0
        for n in range(n_ch):
            dn = d[n]
            v = full[n] + val[s - dn] if s > dn else base[n] + s * unit[n]
            if v < best:
                best, bn = v, n
        val[s] = best
        arg[s] = bn
    steps = []
    s = size
    while s > 0:
        n = arg[s]
        amount = min(s, d[n])
        steps.append((ids[n], amount))
        s -= amount
    return PolicyPlan.from_steps(steps, scenario), val[size]


POLICY_KINDS = ("dynamic-opt", "static-opt", "max-tp", "heuristic")


@dataclass
class ChosenPolicy:
    kind: str
    plan: PolicyPlan | None
    rule: PolicyRule
    expected: object  # expected time with no switching delay; None when undefined


def policy_for(kind: str, scenario: Scenario, size: int,
               probs: Mapping[int, object] | None = None, fast: bool = False) -> ChosenPolicy:
    """Plan and executable rule for a policy kind.

    ``kind`` is one of ``static:<id>``, ``static-opt``, ``max-tp``,
    ``heuristic`` or ``dynamic-opt``. ``probs`` replaces the availabilities
    used for planning (the online learner's estimates). Plan-based rules
    re-plan under the same availabilities if the execution leaves the plan.
    ``fast`` swaps the exact branch-and-bound for the float recursion.
    """
    if scenario.is_markov:
        return _markov_policy(kind, scenario, size)
    if kind.startswith("static:"):
        cid = int(kind.split(":", 1)[1])
        plan, t = static_plan(scenario, size, probs, channel_id=cid)
        return ChosenPolicy(kind, plan, StaticRule(cid), t)
    if kind == "static-opt":
        plan, t = static_plan(scenario, size, probs)
        return ChosenPolicy(kind, plan, StaticRule(plan.states(scenario)[0][1]), t)
    if kind == "max-tp":
        star = max_throughput_channel(scenario, _probs(scenario, probs), strict=False)
        plan, t = static_plan(scenario, size, probs, channel_id=star)
        return ChosenPolicy(kind, plan, StaticRule(star), t)
    if kind == "heuristic":
        plan, t = heuristic_policy(scenario, size, probs)
        rule = PlanRule(plan, scenario, lambda s: heuristic_policy(scenario, s, probs)[0])
        return ChosenPolicy(kind, plan, rule, t)
    if kind == "dynamic-opt":
        if fast:
            plan, t = solve_dp(scenario, size, probs)
            replan = lambda s: solve_dp(scenario, s, probs)[0]
        else:
            sol, plan = solve_mip(scenario, size, probs)
            t = sol.objective
            replan = lambda s: solve_mip(scenario, s, probs)[1]
        return ChosenPolicy(kind, plan, PlanRule(plan, scenario, replan), t)
    raise ValueError(f"unknown policy kind {kind!r}")


def _markov_policy(kind: str, scenario: Scenario, size: int) -> ChosenPolicy:
    from .analytic import channel_static_time

    size_mb = scenario.to_mb(size)
    if kind.startswith("static:"):
        cid = int(kind.split(":", 1)[1])
    elif kind == "static-opt":
        cid, _ = static_optimal_channel(scenario, size_mb)
    elif kind == "max-tp":
        tp = {c.id: c.rate * c.stationary for c in scenario.channels}
        cid = max(tp, key=lambda c: (tp[c], -c))
    else:
        raise ValueError(f"policy {kind!r} is not available on Markov channels (static policies only)")
    t = channel_static_time(scenario.channel(cid), size_mb, scenario.slot_seconds)
    return ChosenPolicy(kind, PolicyPlan.static(scenario, cid, size), StaticRule(cid), t)
