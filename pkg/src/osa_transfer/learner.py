"""Episodic file transfers with unknown availabilities (KL optimism).

The first N episodes each use one channel statically; afterwards every
episode plans with optimistic availability estimates, executes the plan on
the true channels and records one availability observation per slot for
the sensed channel.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .analytic import RegretBoundParams, confidence_level, max_throughput_channel, plan_time
from .model import Scenario
from .optimizer import heuristic_policy, policy_for, value_table
from .plans import PolicyPlan, StaticRule
from .simulator import baseline_time, simulate_episode, spawn

P_FLOOR = 1e-6
KL_TOL = 1e-9


def bernoulli_kl(p: float, q: float) -> float:
    """KL divergence between Bernoulli(p) and Bernoulli(q)."""
    if q <= 0.0:
        return 0.0 if p <= 0.0 else math.inf
    if q >= 1.0:
        return 0.0 if p >= 1.0 else math.inf
    out = 0.0
    if p > 0.0:
        out += p * math.log(p / q)
    if p < 1.0:
        out += (1 - p) * math.log((1 - p) / (1 - q))
    return out


def kl_index(mean: float, n: int, k: int) -> float:
    """Largest q >= mean with n * kl(mean, q) <= log k + 4 log log k."""
    if k < 3:
        raise ValueError("kl_index needs k >= 3")
    if not 0.0 <= mean <= 1.0:
        raise ValueError("mean must lie in [0, 1]")
    if n == 0 or mean >= 1.0:
        return 1.0
    budget = confidence_level(k) / n
    lo, hi = mean, 1.0
    while hi - lo > KL_TOL:
        mid = 0.5 * (lo + hi)
        if bernoulli_kl(mean, mid) <= budget:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class LearnerState:
    ids: tuple[int, ...]
    counts: dict[int, int] = field(default_factory=dict)
    successes: dict[int, int] = field(default_factory=dict)
    episode: int = 1

    def __post_init__(self):
        for cid in self.ids:
            self.counts.setdefault(cid, 0)
            self.successes.setdefault(cid, 0)

    def observe(self, channel: int, available: bool) -> None:
        self.counts[channel] += 1
        self.successes[channel] += bool(available)

    def mean(self, channel: int) -> float:
        n = self.counts[channel]
        return self.successes[channel] / n if n else 0.0

    def optimistic(self) -> dict[int, float]:
        k = max(self.episode, 3)
        return {cid: min(1.0, max(P_FLOOR, kl_index(self.mean(cid), self.counts[cid], k))) for cid in self.ids}


@dataclass
class EpisodeRecord:
    episode: int
    size: int
    summary: str
    time: float
    expected: float  # chosen plan under the true availabilities
    baseline: float  # max-throughput expectation under the true availabilities
    slots: int = 0
    switches: int = 0


@dataclass
class OnlineRunResult:
    kind: str
    records: list[EpisodeRecord]

    @property
    def K(self) -> int:
        return len(self.records)

    def ratio_curve(self) -> np.ndarray:
        r = np.array([e.time / e.baseline for e in self.records])
        return np.cumsum(r) / np.arange(1, len(r) + 1)

    def throughput_curve(self, quantum: float) -> np.ndarray:
        t = np.array([e.size * quantum / e.time for e in self.records])
        return np.cumsum(t) / np.arange(1, len(t) + 1)


class TargetValues:
    """True-parameter expected times of each policy kind, cached per size."""

    def __init__(self, scenario: Scenario, max_size: int):
        self.scenario = scenario
        self.p = {ch.id: float(ch.p * (1 - ch.misdetect)) for ch in scenario.channels}
        self.max_size = max_size
        self._opt = None
        self._cache: dict[tuple[str, int], float] = {}

    def __call__(self, kind: str, size: int) -> float:
        key = (kind, size)
        if key not in self._cache:
            self._cache[key] = self._compute(kind, size)
        return self._cache[key]

    def _compute(self, kind: str, size: int) -> float:
        scen = self.scenario
        if kind == "dynamic-opt":
            if self._opt is None:
                self._opt = value_table(scen, self.max_size, self.p)[0]
            return float(self._opt[size])
        if kind == "heuristic":
            return float(heuristic_policy(scen, size, self.p)[1])
        if kind == "max-tp":
            star = max_throughput_channel(scen, self.p, strict=False)
            return float(plan_time(PolicyPlan.static(scen, star, size), scen, self.p))
        if kind == "static-opt":
            return min(float(plan_time(PolicyPlan.static(scen, c, size), scen, self.p)) for c in scen.ids)
        raise ValueError(f"unknown target kind {kind!r}")


def run_learner(scenario: Scenario, kind: str, sizes: Sequence[int], rng: np.random.Generator,
                   fast: bool = False, state: LearnerState | None = None) -> OnlineRunResult:
    """One replication of the online loop on the true ``scenario``.

    ``sizes`` are file sizes in quanta, one per episode. A prepared
    ``state`` (e.g. one whose ``optimistic`` is overridden) replaces the
    fresh estimator.
    """
    if scenario.is_markov:
        raise ValueError("online learning is defined for Bernoulli channels")
    ids = scenario.ids
    if len(sizes) <= len(ids):
        raise ValueError(f"need more episodes than channels ({len(ids)})")
    true_p = {ch.id: float(ch.p * (1 - ch.misdetect)) for ch in scenario.channels}
    if state is None:
        state = LearnerState(tuple(ids))
    records = []
    base_cache: dict[int, float] = {}
    for k, size in enumerate(sizes, start=1):
        state.episode = k
        if k <= len(ids):
            plan = PolicyPlan.static(scenario, ids[k - 1], size)
            rule = StaticRule(ids[k - 1])
        else:
            chosen = policy_for(kind, scenario, size, state.optimistic(), fast=fast)
            plan, rule = chosen.plan, chosen.rule
        trace = simulate_episode(scenario, rule, size, rng, record=False, observe=state.observe)
        if size not in base_cache:
            base_cache[size] = float(baseline_time(scenario, size))
        records.append(EpisodeRecord(k, size, plan.summary(), trace.total_time,
                                     float(plan_time(plan, scenario, true_p)), base_cache[size],
                                     trace.n_slots, trace.switches))
    return OnlineRunResult(kind, records)


def empirical_regret(result: OnlineRunResult, scenario: Scenario, target: str | None = None,
                     targets: TargetValues | None = None) -> np.ndarray:
    """Cumulative excess of the chosen plans' true expected time over the target policy's."""
    target = target or result.kind
    if targets is None:
        targets = TargetValues(scenario, max(e.size for e in result.records))
    inc = np.array([e.expected - targets(target, e.size) for e in result.records])
    return np.cumsum(inc)


def draw_sizes(scenario: Scenario, count: int, max_mb: float, rng: np.random.Generator) -> list[int]:
    """File sizes uniform on (0, max_mb], rounded up to the quantum."""
    q = float(scenario.quantum)
    u = 1.0 - rng.random(count)  # (0, 1]
    return [max(1, math.ceil(round(v * max_mb / q, 9))) for v in u]


def gap_min(scenario: Scenario, max_size: int, probs=None, tol: float = 1e-12) -> float:
    """Smallest positive gap between the best and a worse plan, over all sizes up to ``max_size``."""
    from .optimizer import _Costs

    c = _Costs(scenario, probs)
    ids = c.ids
    d = [c.d[i] for i in ids]
    full = [float(c.full[i]) for i in ids]
    base = [float(c.base[i]) for i in ids]
    unit = [float(c.unit[i]) for i in ids]
    best2 = [(0.0, math.inf)] * (max_size + 1)
    gap = math.inf
    for s in range(1, max_size + 1):
        cands = []
        for n in range(len(ids)):
            if s > d[n]:
                b1, b2 = best2[s - d[n]]
                cands.append(full[n] + b1)
                cands.append(full[n] + b2)
            else:
                cands.append(base[n] + s * unit[n])
        cands.sort()
        first = cands[0]
        second = next((v for v in cands[1:] if v - first > tol), math.inf)
        best2[s] = (first, second)
        gap = min(gap, second - first)
    return gap


def regret_bound_params(scenario: Scenario, max_size: int, s_const: float = 1.0) -> RegretBoundParams:
    """Constants of the gap-dependent bound for the dynamic-optimal target."""
    probs = {ch.id: float(ch.p * (1 - ch.misdetect)) for ch in scenario.channels}
    r_min = min(float(ch.rate) for ch in scenario.channels)
    horizon = max_size * float(scenario.quantum) / (float(scenario.slot_seconds) * r_min)
    worst = value_table(scenario, max_size, probs, worst=True)[0][max_size]
    return RegretBoundParams(
        n_channels=len(scenario.channels),
        horizon_len=horizon,
        gap_min=gap_min(scenario, max_size, probs),
        longest_time=float(worst),
        p_min=min(probs.values()),
        probs=tuple(probs.values()),
        s_const=s_const,
    )


@dataclass
class OnlineSummary:
    kind: str
    replication: int
    result: OnlineRunResult
    regret: np.ndarray


def _one_replication(args):
    scenario, kinds, K, max_mb, seed, rep, fast = args
    sizes = draw_sizes(scenario, K, max_mb, spawn(seed, rep, 0))
    targets = TargetValues(scenario, max(sizes))
    out = []
    for n, kind in enumerate(kinds, start=1):
        res = run_learner(scenario, kind, sizes, spawn(seed, rep, n), fast=fast)
        out.append(OnlineSummary(kind, rep, res, empirical_regret(res, scenario, kind, targets)))
    return out


def worker_count() -> int:
    cap = os.environ.get("OSA_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = max(1, min(n, int(cap)))
    return n


def run_online(scenario: Scenario, kinds: Sequence[str], episodes: int, replications: int, seed: int = 0,
               max_mb: float = 7.0, fast: bool = False) -> list[OnlineSummary]:
    """All replications; each replication shares one file-size sequence across kinds."""
    jobs = [(scenario, tuple(kinds), episodes, max_mb, seed, rep, fast) for rep in range(replications)]
    workers = min(worker_count(), replications)
    if workers <= 1:
        batches = [_one_replication(j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers) as pool:
            batches = list(pool.map(_one_replication, jobs))
    return [s for batch in batches for s in batch]
