"""Channels, scenarios, exact size arithmetic.

All physical quantities are held as :class:`fractions.Fraction`:
rates in Mb/s, sizes in Mb, times in seconds. File sizes used by the
solvers are integer counts of ``Scenario.quantum``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Sequence, Union

Number = Union[int, float, str, Fraction]

DEFAULT_QUANTUM = Fraction(1, 1000)  # Mb


class ScenarioError(ValueError):
    """Invalid channel or scenario parameters. ``field`` names the culprit."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
        self.message = message


def as_fraction(value: Number) -> Fraction:
    """Exact conversion; floats go through their shortest repr (0.1 -> 1/10)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("boolean is not a number here")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value!r}")
        return Fraction(repr(value))
    return Fraction(str(value).strip())


@dataclass(frozen=True)
class Channel:
    """One spectrum channel.

    A Bernoulli channel sets ``p``; a Markov channel sets ``q_up``
    (busy -> idle), ``q_down`` (idle -> busy) and ``c0`` (probability of
    being idle in the first slot).
    """

    id: int
    rate: Fraction
    p: Fraction | None = None
    q_up: Fraction | None = None
    q_down: Fraction | None = None
    c0: Fraction | None = None
    misdetect: Fraction = Fraction(0)

    def __post_init__(self):
        for name in ("rate", "p", "q_up", "q_down", "c0", "misdetect"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, as_fraction(value))
        self._check()

    @classmethod
    def bernoulli(cls, id: int, rate: Number, p: Number, misdetect: Number = 0) -> "Channel":
        return cls(id=id, rate=rate, p=p, misdetect=misdetect)

    @classmethod
    def markov(cls, id: int, rate: Number, q_up: Number, q_down: Number, c0: Number | None = None) -> "Channel":
        """``c0`` defaults to the stationary idle probability."""
        q_up, q_down = as_fraction(q_up), as_fraction(q_down)
        if c0 is None and q_up + q_down > 0:
            c0 = q_up / (q_up + q_down)
        return cls(id=id, rate=rate, q_up=q_up, q_down=q_down, c0=c0)

    @property
    def is_markov(self) -> bool:
        return self.p is None

    @property
    def stationary(self) -> Fraction:
        """Long-run idle probability (``p`` for a Bernoulli channel)."""
        if not self.is_markov:
            return self.p
        return self.q_up / (self.q_up + self.q_down)

    def _check(self):
        where = f"channels[id={self.id}]"
        if not isinstance(self.id, int) or isinstance(self.id, bool):
            raise ScenarioError("channel id must be an integer", f"{where}.id")
        if self.rate <= 0:
            raise ScenarioError("rate must be positive", f"{where}.rate_mbps")
        if not 0 <= self.misdetect < 1:
            raise ScenarioError("misdetect must lie in [0, 1)", f"{where}.misdetect")
        markov_fields = (self.q_up, self.q_down, self.c0)
        if self.p is not None:
            if any(v is not None for v in markov_fields):
                raise ScenarioError("give either p or (q_up, q_down, c0), not both", where)
            if not 0 < self.p <= 1:
                raise ScenarioError("p must lie in (0, 1]", f"{where}.p")
            return
        if any(v is None for v in markov_fields):
            raise ScenarioError("Markov channel needs q_up, q_down and c0", where)
        if not 0 < self.q_up <= 1:
            raise ScenarioError("q_up must lie in (0, 1]", f"{where}.q_up")
        if not 0 <= self.q_down < 1:
            raise ScenarioError("q_down must lie in [0, 1)", f"{where}.q_down")
        if not 0 <= self.c0 <= 1:
            raise ScenarioError("c0 must lie in [0, 1]", f"{where}.c0")
        if self.misdetect:
            # the p(1-v) fold-in is only defined for i.i.d. channels
            raise ScenarioError("misdetect is only supported on Bernoulli channels", f"{where}.misdetect")


def effective_availability(channel: Channel) -> Fraction:
    """Probability that a slot on ``channel`` is both idle and detected idle."""
    if channel.is_markov:
        raise ScenarioError("mis-detection fold-in is defined for Bernoulli channels only",
                            f"channels[id={channel.id}]")
    return channel.p * (1 - channel.misdetect)


@dataclass(frozen=True)
class Scenario:
    """Channel set plus slot timing and the size quantum."""

    slot_seconds: Fraction
    channels: tuple[Channel, ...]
    switching_delay: Fraction = Fraction(0)
    quantum: Fraction = DEFAULT_QUANTUM
    name: str = ""
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "slot_seconds", as_fraction(self.slot_seconds))
        object.__setattr__(self, "switching_delay", as_fraction(self.switching_delay))
        object.__setattr__(self, "quantum", as_fraction(self.quantum))
        object.__setattr__(self, "channels", tuple(self.channels))
        validate_scenario(self)
        object.__setattr__(self, "_by_id", {ch.id: ch for ch in self.channels})
        object.__setattr__(self, "_slot_q", {
            ch.id: _exact_int(self.slot_seconds * ch.rate / self.quantum) for ch in self.channels})

    def channel(self, channel_id: int) -> Channel:
        try:
            return self._by_id[channel_id]
        except KeyError:
            raise KeyError(f"unknown channel id {channel_id}") from None

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(ch.id for ch in self.channels)

    @property
    def is_markov(self) -> bool:
        return any(ch.is_markov for ch in self.channels)

    def slot_quanta(self, channel_id: int) -> int:
        """Quanta delivered by one full slot on ``channel_id``."""
        try:
            return self._slot_q[channel_id]
        except KeyError:
            raise KeyError(f"unknown channel id {channel_id}") from None

    def window_quanta(self, channel_id: int, switched: bool, delay: Fraction | None = None) -> int:
        """Quanta deliverable in one slot, after paying the switch penalty if any."""
        if not switched:
            return self.slot_quanta(channel_id)
        delay = self.switching_delay if delay is None else delay
        ch = self.channel(channel_id)
        return _exact_int((self.slot_seconds - delay) * ch.rate / self.quantum)

    def to_quanta(self, size_mb: Number) -> int:
        """Physical size to quanta, rounding up."""
        size = as_fraction(size_mb)
        if size <= 0:
            raise ValueError(f"file size must be positive, got {size_mb!r}")
        return math.ceil(size / self.quantum)

    def to_mb(self, quanta: int) -> Fraction:
        return quanta * self.quantum

    def with_delay(self, delay_seconds: Number) -> "Scenario":
        return replace(self, switching_delay=as_fraction(delay_seconds))

    def with_probs(self, probs: dict) -> "Scenario":
        """Same channels with Bernoulli availabilities replaced (mis-detection dropped)."""
        chans = [Channel.bernoulli(ch.id, ch.rate, probs[ch.id]) for ch in self.channels]
        return replace(self, channels=tuple(chans))


def _exact_int(value: Fraction) -> int:
    if value.denominator != 1:
        raise ScenarioError(f"{value} is not a whole number of quanta", "quantum_mb")
    return value.numerator


def validate_scenario(scenario: Scenario) -> Scenario:
    """Check every invariant; return the scenario unchanged or raise ScenarioError."""
    if scenario.slot_seconds <= 0:
        raise ScenarioError("slot length must be positive", "slot_ms")
    if not scenario.channels:
        raise ScenarioError("at least one channel is required", "channels")
    if scenario.quantum <= 0:
        raise ScenarioError("quantum must be positive", "quantum_mb")
    if not 0 <= scenario.switching_delay < scenario.slot_seconds:
        raise ScenarioError("switching delay must lie in [0, slot length)", "switching_delay_ms")
    seen = set()
    for ch in scenario.channels:
        if not isinstance(ch, Channel):
            raise ScenarioError(f"expected Channel, got {type(ch).__name__}", "channels")
        if ch.id in seen:
            raise ScenarioError(f"duplicate channel id {ch.id}", "channels")
        seen.add(ch.id)
        for label, span in (("slot", scenario.slot_seconds),
                            ("switch-shortened slot", scenario.slot_seconds - scenario.switching_delay)):
            amount = span * ch.rate / scenario.quantum
            if amount.denominator != 1:
                raise ScenarioError(
                    f"{label} on channel {ch.id} carries {float(amount):g} quanta, not an integer",
                    "quantum_mb")
    return scenario


@dataclass(frozen=True)
class FileTask:
    """A file measured in quanta."""

    size: int

    def __post_init__(self):
        if not isinstance(self.size, int) or self.size <= 0:
            raise ValueError("file size must be a positive number of quanta")

    @classmethod
    def from_mb(cls, size_mb: Number, scenario: Scenario) -> "FileTask":
        return cls(scenario.to_quanta(size_mb))

    def mb(self, scenario: Scenario) -> Fraction:
        return scenario.to_mb(self.size)


@dataclass(frozen=True)
class SlotSplit:
    """``size = (full_slots + fraction) * slot_amount`` with ``0 <= fraction < 1``."""

    slot_amount: Fraction
    full_slots: int
    fraction: Fraction


def slot_split(size: Number, slot_amount: Number) -> SlotSplit:
    size, slot_amount = as_fraction(size), as_fraction(slot_amount)
    k, rem = divmod(size, slot_amount)
    return SlotSplit(slot_amount, int(k), rem / slot_amount)


def bernoulli_scenario(rates: Sequence[Number], probs: Sequence[Number], *, slot_seconds: Number = "0.1",
                       quantum: Number = DEFAULT_QUANTUM, switching_delay: Number = 0,
                       misdetect: Iterable[Number] | None = None, name: str = "") -> Scenario:
    """Build a Bernoulli scenario with ids 1..N."""
    if len(rates) != len(probs):
        raise ValueError("rates and probs differ in length")
    misdetect = list(misdetect) if misdetect is not None else [0] * len(rates)
    chans = tuple(Channel.bernoulli(i + 1, r, p, v) for i, (r, p, v) in enumerate(zip(rates, probs, misdetect)))
    return Scenario(slot_seconds, chans, switching_delay=switching_delay, quantum=quantum, name=name)
