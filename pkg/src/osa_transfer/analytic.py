"""Closed-form transfer times and the bounds built on them.

Everything is exact rational arithmetic when fed Fractions; passing float
availabilities (``probs``) gives float results through the same formulas.
Sizes are physical (Mb) unless a name says quanta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .model import Channel, Number, Scenario, ScenarioError, as_fraction, effective_availability, slot_split
from .plans import InfeasiblePlan, PolicyPlan


class TieError(ValueError):
    """The max-throughput channel is not unique."""

    def __init__(self, tied: list[int]):
        super().__init__(f"channels {tied} tie for the largest rate x availability")
        self.tied = tied


@dataclass(frozen=True)
class RatioBounds:
    lower: Fraction
    upper: Fraction


def _bernoulli(channel: Channel) -> Fraction:
    if channel.is_markov:
        raise ScenarioError("Markov channel: use markov_static_expected_time", f"channels[id={channel.id}]")
    return effective_availability(channel)


def static_time(p, slot_amount: Fraction, size: Fraction, slot_seconds: Fraction):
    """Expected time to push ``size`` through one channel with availability ``p``."""
    split = slot_split(size, slot_amount)
    partial = split.fraction > 0
    return slot_seconds * (split.full_slots / p + (partial * (1 - p) / p) + split.fraction)


def static_expected_time(channel: Channel, size: Number, slot_seconds: Number) -> Fraction:
    size, slot_seconds = as_fraction(size), as_fraction(slot_seconds)
    if size <= 0:
        raise ValueError("file size must be positive")
    p = _bernoulli(channel)
    return static_time(p, slot_seconds * channel.rate, size, slot_seconds)


def wald_gap(channel: Channel, size: Number, slot_seconds: Number) -> Fraction:
    """Excess of the static expected time over ``size / (rate * p)``; never negative."""
    size, slot_seconds = as_fraction(size), as_fraction(slot_seconds)
    p = _bernoulli(channel)
    split = slot_split(size, slot_seconds * channel.rate)
    if split.fraction == 0:
        return Fraction(0)
    return slot_seconds * (1 - split.fraction) * (1 - p) / p


def markov_static_expected_time(channel: Channel, size: Number, slot_seconds: Number) -> Fraction:
    size, slot_seconds = as_fraction(size), as_fraction(slot_seconds)
    if not channel.is_markov:
        raise ScenarioError("Bernoulli channel: use static_expected_time", f"channels[id={channel.id}]")
    if size <= 0:
        raise ValueError("file size must be positive")
    split = slot_split(size, slot_seconds * channel.rate)
    transmissions = split.full_slots + (split.fraction > 0)
    waits = (transmissions - 1) * channel.q_down / channel.q_up + (1 - channel.c0) / channel.q_up
    return slot_seconds * waits + size / channel.rate


def channel_static_time(channel: Channel, size: Number, slot_seconds: Number) -> Fraction:
    if channel.is_markov:
        return markov_static_expected_time(channel, size, slot_seconds)
    return static_expected_time(channel, size, slot_seconds)


def correlation_gap(channel_i: Channel, channel_j: Channel, size: Number, slot_seconds: Number) -> Fraction:
    """Extra expected time of the more correlated channel ``i`` over ``j``.

    Requires equal rate, initial idle probability and stationary law, with
    ``i``'s transition probabilities a fraction ``beta <= 1`` of ``j``'s.
    """
    if not (channel_i.is_markov and channel_j.is_markov):
        raise ScenarioError("correlation gap needs two Markov channels")
    if channel_i.rate != channel_j.rate:
        raise ScenarioError("channels must share the same rate", "rate_mbps")
    if channel_i.c0 != channel_j.c0:
        raise ScenarioError("channels must share the same initial idle probability", "c0")
    beta = channel_i.q_up / channel_j.q_up
    if channel_i.q_down != beta * channel_j.q_down:
        raise ScenarioError("transition probabilities are not proportional (stationary laws differ)", "q_down")
    if not 0 < beta <= 1:
        raise ScenarioError(f"channel {channel_i.id} must be the more correlated one (beta={beta})", "q_up")
    slot_seconds = as_fraction(slot_seconds)
    return slot_seconds * (1 - channel_i.c0) * (1 / channel_i.q_up - 1 / channel_j.q_up)


def _probs(scenario: Scenario, probs: Mapping[int, object] | None) -> dict[int, object]:
    if probs is not None:
        return dict(probs)
    return {ch.id: _bernoulli(ch) for ch in scenario.channels}


def throughputs(scenario: Scenario, probs: Mapping[int, object] | None = None) -> dict[int, object]:
    p = _probs(scenario, probs)
    return {ch.id: ch.rate * p[ch.id] for ch in scenario.channels}


def max_throughput_channel(scenario: Scenario, probs: Mapping[int, object] | None = None,
                           strict: bool = True) -> int:
    """Channel maximising rate x availability.

    With ``strict`` a tie raises TieError; otherwise the smallest id wins.
    """
    tp = throughputs(scenario, probs)
    best = max(tp.values())
    tied = [cid for cid, v in tp.items() if v == best]
    if len(tied) > 1 and strict:
        raise TieError(sorted(tied))
    return min(tied)


def _second_best(scenario: Scenario, star: int) -> int:
    tp = throughputs(scenario)
    rest = {cid: v for cid, v in tp.items() if cid != star}
    best = max(rest.values())
    return min(cid for cid, v in rest.items() if v == best)


def static_optimal_channel(scenario: Scenario, size: Number,
                           probs: Mapping[int, object] | None = None) -> tuple[int, Fraction]:
    """Best single channel for ``size``; ties go to the smallest id."""
    size = as_fraction(size)
    if size <= 0:
        raise ValueError("file size must be positive")
    delta = scenario.slot_seconds
    best = None
    for ch in sorted(scenario.channels, key=lambda c: c.id):
        if probs is None:
            t = channel_static_time(ch, size, delta)
        else:
            t = static_time(probs[ch.id], delta * ch.rate, size, delta)
        if best is None or t < best[1]:
            best = (ch.id, t)
    return best


def threshold_H(scenario: Scenario) -> Fraction:
    """File size beyond which the max-throughput channel is statically optimal."""
    if len(scenario.channels) < 2:
        raise ValueError("threshold needs at least two channels")
    star = max_throughput_channel(scenario)
    h = _second_best(scenario, star)
    p_star = _bernoulli(scenario.channel(star))
    ch_star, ch_h = scenario.channel(star), scenario.channel(h)
    p_h = _bernoulli(ch_h)
    numer = scenario.slot_seconds * (1 - p_star) / p_star
    return numer / (1 / (ch_h.rate * p_h) - 1 / (ch_star.rate * p_star))


def _between_multiples(scenario: Scenario, size: Fraction) -> tuple[int, Channel, Fraction]:
    star = max_throughput_channel(scenario)
    ch_star = scenario.channel(star)
    split = slot_split(size, scenario.slot_seconds * ch_star.rate)
    if split.fraction == 0:
        raise ValueError("file size is a whole number of max-throughput slots; the ratio is exactly 1")
    return split.full_slots, ch_star, _bernoulli(ch_star)


def static_ratio_upper_bound(scenario: Scenario, size: Number) -> Fraction:
    """Upper bound on E[T(static optimal)] / E[T(max throughput)]."""
    size = as_fraction(size)
    k, ch_star, p_star = _between_multiples(scenario, size)
    delta = scenario.slot_seconds
    bound = Fraction(1)
    for ch in scenario.channels:
        if ch.id == ch_star.id:
            continue
        p = _bernoulli(ch)
        m = p / p_star
        denom = (k + 1) * (m / p - 1)
        if denom <= 0:
            continue
        value = (size / (delta * ch.rate * p) + (1 - p) / p) / denom
        bound = min(bound, value)
    return bound


def dynamic_ratio_bounds(scenario: Scenario, size: Number) -> RatioBounds:
    """Bounds on E[T(dynamic optimal)] / E[T(max throughput)]."""
    size = as_fraction(size)
    k, ch_star, p_star = _between_multiples(scenario, size)
    delta = scenario.slot_seconds
    lower = size / (size + delta * (1 - p_star) * ch_star.rate)
    tp_star = ch_star.rate * p_star
    upper = Fraction(1)
    for ch in scenario.channels:
        if ch.id == ch_star.id:
            continue
        p = _bernoulli(ch)
        m = p / p_star
        denom = (k + 1) * (m - p)
        if denom <= 0:
            continue
        numer = size / (delta * ch.rate) + 1 - p - k * m * (tp_star - ch.rate * p) / (ch.rate * p)
        upper = min(upper, numer / denom)
    return RatioBounds(lower, upper)


def dynamic_lower_bound(scenario: Scenario, size: Number) -> Fraction:
    # only the largest throughput matters, so ties are harmless here
    size = as_fraction(size)
    star = scenario.channel(max_throughput_channel(scenario, strict=False))
    return size / (star.rate * _bernoulli(star))


def plan_time(plan: PolicyPlan, scenario: Scenario, probs: Mapping[int, object]):
    """Expected transfer time of ``plan`` (no feasibility checks)."""
    delta = scenario.slot_seconds
    total = 0
    for ch, n in plan.segments:
        total += n * delta / probs[ch]
    if plan.final is not None:
        ch, amount = plan.final
        p = probs[ch]
        total += delta * (1 - p) / p + delta * amount / scenario.slot_quanta(ch)
    return total


def dynamic_expected_time(plan: PolicyPlan, scenario: Scenario, size: int | None = None,
                          probs: Mapping[int, object] | None = None):
    """Expected transfer time of a transmission plan.

    ``size`` (quanta) is checked against the plan when given.
    """
    plan.check(scenario, size)
    return plan_time(plan, scenario, _probs(scenario, probs))


@dataclass(frozen=True)
class RegretBoundParams:
    n_channels: int
    horizon_len: float  # largest file over slowest rate
    gap_min: float
    longest_time: float
    p_min: float
    probs: tuple[float, ...]
    s_const: float = 1.0

    def __post_init__(self):
        vals = (self.n_channels, self.horizon_len, self.gap_min, self.longest_time, self.p_min, self.s_const)
        if any(v <= 0 for v in vals) or any(p <= 0 for p in self.probs):
            raise ValueError("regret bound parameters must all be positive")

    @property
    def epsilon(self) -> float:
        return (1 - 2 ** -0.25) * self.gap_min / self.longest_time


def confidence_level(k: float) -> float:
    """log k + 4 log log k (natural logs)."""
    if k < 3:
        raise ValueError("confidence level needs k >= 3")
    return math.log(k) + 4 * math.log(math.log(k))


def regret_bound(params: RegretBoundParams, K: int) -> float:
    first = 360 * params.n_channels * params.horizon_len * confidence_level(K) / (params.gap_min * params.p_min ** 2)
    eps = params.epsilon
    tail = sum(1 / (eps ** 2 * p ** 2) for p in params.probs)
    return first + 2 * params.longest_time * (4 * params.horizon_len + params.s_const * tail)
