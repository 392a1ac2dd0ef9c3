"""Slot-level Monte-Carlo execution of transmission rules.

Each slot the rule picks a channel from the remaining size. An idle (and
detected) channel carries up to one slot of data, less the switching delay
when the sensed channel differs from the previous slot's; a busy one wastes
the slot. The completing slot only counts the time actually used. Markov
channels all advance every slot whether sensed or not.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .analytic import channel_static_time, max_throughput_channel
from .model import Scenario, as_fraction, effective_availability
from .plans import PolicyRule

EPISODE_COLUMNS = ("scenario", "policy", "F_mb", "replication", "seed", "time_s", "slots", "switches")
METRICS_COLUMNS = ("policy", "K", "avg_time_ratio", "avg_throughput_mbps")


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    replications: int = 1000
    switching_delay: Fraction | None = None  # seconds; None keeps the scenario's

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.switching_delay is not None:
            object.__setattr__(self, "switching_delay", as_fraction(self.switching_delay))

    def scenario(self, scenario: Scenario) -> Scenario:
        if self.switching_delay is None or self.switching_delay == scenario.switching_delay:
            return scenario
        return scenario.with_delay(self.switching_delay)


def spawn(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based stream for ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))


class _Uniforms:
    """Buffered scalar uniforms from a Generator."""

    __slots__ = ("_rng", "_buf", "_i")

    def __init__(self, rng: np.random.Generator, block: int = 1024):
        self._rng = rng
        self._buf = rng.random(block).tolist()
        self._i = 0

    def __call__(self) -> float:
        i = self._i
        if i == len(self._buf):
            self._buf = self._rng.random(len(self._buf)).tolist()
            i = 0
        self._i = i + 1
        return self._buf[i]


@dataclass(frozen=True)
class SlotRecord:
    index: int
    channel: int
    available: bool
    transmitted: int
    switched: bool


@dataclass
class EpisodeTrace:
    size: int
    total_time: float
    n_slots: int
    switches: int
    slots: list[SlotRecord] = field(default_factory=list)

    @property
    def transmitted(self) -> int:
        return sum(s.transmitted for s in self.slots)


class _ChannelTable:
    def __init__(self, scenario: Scenario):
        self.ids = list(scenario.ids)
        self.col = {cid: n for n, cid in enumerate(self.ids)}
        self.markov = scenario.is_markov
        chans = scenario.channels
        if self.markov:
            # non-Markov entries in a mixed scenario behave as memoryless chains
            self.q_up = np.array([float(c.q_up) if c.is_markov else float(c.p) for c in chans])
            self.q_down = np.array([float(c.q_down) if c.is_markov else 1 - float(c.p) for c in chans])
            self.c0 = np.array([float(c.c0) if c.is_markov else float(c.p) for c in chans])
            self.p = None
        else:
            self.p = np.array([float(c.p) for c in chans])
        self.detect = np.array([1 - float(c.misdetect) for c in chans])
        self.misdetect = bool(np.any(self.detect < 1))
        self.slot = float(scenario.slot_seconds)
        self.full = {cid: scenario.slot_quanta(cid) for cid in self.ids}
        self.short = {cid: scenario.window_quanta(cid, True) for cid in self.ids}
        self.per_quantum = {cid: self.slot / self.full[cid] for cid in self.ids}
        self.delay = float(scenario.switching_delay)


@lru_cache(maxsize=64)
def _table(scenario: Scenario) -> _ChannelTable:
    return _ChannelTable(scenario)


def simulate_episode(scenario: Scenario, rule: PolicyRule, size: int, rng: np.random.Generator,
                     record: bool = True, observe=None) -> EpisodeTrace:
    """Run one file transfer slot by slot.

    ``observe(channel, available)`` is called once per slot for the sensed
    channel when given.
    """
    if size <= 0:
        raise ValueError("file size must be positive")
    tab = _table(scenario)
    u = _Uniforms(rng)
    n = len(tab.ids)
    state = None
    if tab.markov:
        state = [u() < tab.c0[j] for j in range(n)]
    remaining = size
    elapsed = 0.0
    prev = None
    switches = 0
    slots = []
    t = 0
    while True:
        cid = rule.channel_for(remaining)
        j = tab.col.get(cid)
        if j is None:
            raise KeyError(f"rule chose unknown channel {cid}")
        if tab.markov:
            idle = state[j]
        else:
            idle = u() < tab.p[j]
        if tab.misdetect:
            idle = idle and u() < tab.detect[j]
        if observe is not None:
            observe(cid, idle)
        switched = prev is not None and cid != prev
        sent = 0
        finished = False
        if idle:
            window = tab.short[cid] if switched else tab.full[cid]
            switches += switched
            if remaining <= window:
                sent = remaining
                elapsed += (tab.delay if switched else 0.0) + remaining * tab.per_quantum[cid]
                finished = True
            else:
                sent = window
                elapsed += tab.slot
        else:
            elapsed += tab.slot
        remaining -= sent
        if record:
            slots.append(SlotRecord(t, cid, bool(idle), sent, bool(switched and idle)))
        t += 1
        if finished:
            return EpisodeTrace(size, elapsed, t, switches, slots)
        prev = cid
        if tab.markov:
            for k in range(n):
                state[k] = (u() >= tab.q_down[k]) if state[k] else (u() < tab.q_up[k])


@dataclass
class BatchResult:
    times: np.ndarray
    slots: np.ndarray
    switches: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.times.mean())

    @property
    def stderr(self) -> float:
        n = len(self.times)
        return float(self.times.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")


def simulate_batch(scenario: Scenario, rule: PolicyRule, size: int, replications: int,
                   rng: np.random.Generator) -> BatchResult:
    """Vectorised replications of one transfer.

    Every slot draws the state of every channel for every replication, so two
    runs from equal seeds see identical channel realisations whatever the
    rule or switching delay (common random numbers).
    """
    tab = _ChannelTable(scenario)
    reps = replications
    n = len(tab.ids)
    remaining = np.full(reps, size, dtype=np.int64)
    elapsed = np.zeros(reps)
    slots = np.zeros(reps, dtype=np.int64)
    switches = np.zeros(reps, dtype=np.int64)
    prev = np.full(reps, -1, dtype=np.int64)
    active = np.ones(reps, dtype=bool)
    full = np.array([tab.full[c] for c in tab.ids])
    short = np.array([tab.short[c] for c in tab.ids])
    per_q = np.array([tab.per_quantum[c] for c in tab.ids])
    col_of = {cid: k for k, cid in enumerate(tab.ids)}
    state = rng.random((reps, n)) < tab.c0 if tab.markov else None
    rows = np.arange(reps)
    while True:
        idx = rows[active]
        if tab.markov:
            idle_all = state
        else:
            idle_all = rng.random((reps, n)) < tab.p
        if tab.misdetect:
            idle_all = idle_all & (rng.random((reps, n)) < tab.detect)
        if idx.size == 0:
            break
        chosen = rule.channels_for(remaining[idx])
        cols = np.array([col_of[c] for c in chosen.tolist()], dtype=np.int64) if chosen.size else chosen
        idle = idle_all[idx, cols]
        switched = (prev[idx] >= 0) & (prev[idx] != chosen)
        window = np.where(switched, short[cols], full[cols])
        rem = remaining[idx]
        finishing = idle & (rem <= window)
        partial = idle & ~finishing
        step = np.full(idx.size, tab.slot)
        step[finishing] = rem[finishing] * per_q[cols[finishing]] + np.where(switched[finishing], tab.delay, 0.0)
        elapsed[idx] += step
        sent = np.where(finishing, rem, np.where(partial, window, 0))
        remaining[idx] = rem - sent
        slots[idx] += 1
        switches[idx] += switched & idle
        prev[idx] = chosen
        active[idx[finishing]] = False
        if tab.markov:
            r = rng.random((reps, n))
            state = np.where(state, r >= tab.q_down, r < tab.q_up)
    return BatchResult(elapsed, slots, switches)


def baseline_time(scenario: Scenario, size: int) -> Fraction:
    """Analytic expected time of the max-throughput static policy."""
    if scenario.is_markov:
        tp = {c.id: c.rate * c.stationary for c in scenario.channels}
        star = max(tp, key=lambda c: (tp[c], -c))
    else:
        star = max_throughput_channel(scenario, strict=False)
    return channel_static_time(scenario.channel(star), scenario.to_mb(size), scenario.slot_seconds)


@dataclass(frozen=True)
class Episode:
    size: int  # quanta
    time: float
    policy: str = ""


@dataclass
class MetricsReport:
    times: np.ndarray
    ratios: np.ndarray
    throughputs: np.ndarray
    average_time_ratio: float
    average_throughput: float

    def running(self) -> tuple[np.ndarray, np.ndarray]:
        k = np.arange(1, len(self.times) + 1)
        return np.cumsum(self.ratios) / k, np.cumsum(self.throughputs) / k


def compute_metrics(episodes: Sequence[Episode], scenario: Scenario, baseline: dict | None = None) -> MetricsReport:
    """Average time ratio against the max-throughput expectation, and average throughput (Mb/s)."""
    if not episodes:
        raise ValueError("no episodes")
    cache = {} if baseline is None else baseline
    times = np.array([e.time for e in episodes], dtype=float)
    denom = []
    for e in episodes:
        if e.size not in cache:
            cache[e.size] = float(baseline_time(scenario, e.size))
        denom.append(cache[e.size])
    sizes_mb = np.array([e.size for e in episodes], dtype=float) * float(scenario.quantum)
    ratios = times / np.array(denom)
    tput = sizes_mb / times
    return MetricsReport(times, ratios, tput, float(ratios.mean()), float(tput.mean()))


@dataclass
class OfflineRow:
    policy: str
    size_mb: float
    analytic: float | None
    baseline: float
    mean: float | None = None
    stderr: float | None = None
    cumulative_ratio: float | None = None


def run_offline_experiment(scenario: Scenario, kinds: Sequence[str], grid_mb: Iterable, config: SimConfig,
                           mode: str = "analytic", episode_sink=None) -> list[OfflineRow]:
    """Per file size and policy: analytic and/or simulated transfer time.

    ``cumulative_ratio`` is the running mean, over the grid prefix, of the
    time ratio against the max-throughput expectation (analytic times in
    ``analytic`` mode, simulated means otherwise).
    """
    from .optimizer import policy_for

    if mode not in ("analytic", "simulate"):
        raise ValueError("mode must be 'analytic' or 'simulate'")
    grid = [as_fraction(v) for v in grid_mb]
    if not grid:
        raise ValueError("empty file-size grid")
    scen = config.scenario(scenario)
    rows: list[OfflineRow] = []
    sums = {k: 0.0 for k in kinds}
    for gi, size_mb in enumerate(grid):
        size = scen.to_quanta(size_mb)
        base = float(baseline_time(scen, size))
        for kind in kinds:
            chosen = policy_for(kind, scen, size)
            analytic = float(chosen.expected) if chosen.expected is not None else None
            row = OfflineRow(kind, float(size_mb), analytic, base)
            if mode == "simulate":
                res = simulate_batch(scen, chosen.rule, size, config.replications, spawn(config.seed, gi))
                row.mean, row.stderr = res.mean, res.stderr
                if episode_sink is not None:
                    for r in range(config.replications):
                        episode_sink((scen.name, kind, float(size_mb), r, config.seed,
                                      float(res.times[r]), int(res.slots[r]), int(res.switches[r])))
                sums[kind] += row.mean / base
            else:
                sums[kind] += analytic / base
            row.cumulative_ratio = sums[kind] / (gi + 1)
            rows.append(row)
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Header always written; floats formatted locale-independently."""
    fh = open(path, "w", newline="") if not hasattr(path, "write") else None
    out = fh if fh is not None else path
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    finally:
        if fh is not None:
            fh.close()
