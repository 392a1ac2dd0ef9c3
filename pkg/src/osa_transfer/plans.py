"""Transmission plans and the state -> channel rules that execute them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .model import Scenario


class InfeasiblePlan(ValueError):
    pass


@dataclass(frozen=True)
class PolicyPlan:
    """Ordered successful transmissions.

    ``segments`` holds ``(channel id, full slots)`` runs in order; ``final``
    is the closing partial transmission ``(channel id, quanta)`` or None when
    the file ends exactly on a full slot.
    """

    segments: tuple[tuple[int, int], ...]
    final: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple((int(c), int(n)) for c, n in self.segments))
        if self.final is not None:
            object.__setattr__(self, "final", (int(self.final[0]), int(self.final[1])))
        if any(n < 0 for _, n in self.segments):
            raise InfeasiblePlan("negative slot count in plan")
        if self.final is not None and self.final[1] <= 0:
            raise InfeasiblePlan("final transmission must carry a positive amount")
        if self.length == 0:
            raise InfeasiblePlan("empty plan")

    @classmethod
    def static(cls, scenario: Scenario, channel_id: int, size: int) -> "PolicyPlan":
        """Whole file on one channel."""
        k, rem = divmod(size, scenario.slot_quanta(channel_id))
        return cls(((channel_id, k),) if k else (), (channel_id, rem) if rem else None)

    @classmethod
    def from_steps(cls, steps: list[tuple[int, int]], scenario: Scenario) -> "PolicyPlan":
        """Build from a transmission sequence of ``(channel, quanta)``."""
        segments: list[list[int]] = []
        final = None
        for n, (ch, amount) in enumerate(steps):
            full = scenario.slot_quanta(ch)
            if amount < full:
                if n != len(steps) - 1:
                    raise InfeasiblePlan("partial transmission before the last step")
                final = (ch, amount)
            elif amount == full:
                if segments and segments[-1][0] == ch:
                    segments[-1][1] += 1
                else:
                    segments.append([ch, 1])
            else:
                raise InfeasiblePlan(f"step of {amount} quanta exceeds a slot on channel {ch}")
        return cls(tuple(map(tuple, segments)), final)

    @property
    def length(self) -> int:
        """Number of successful transmissions."""
        return sum(n for _, n in self.segments) + (self.final is not None)

    @property
    def channels_used(self) -> set[int]:
        used = {c for c, n in self.segments if n}
        if self.final is not None:
            used.add(self.final[0])
        return used

    def steps(self, scenario: Scenario) -> Iterator[tuple[int, int]]:
        for ch, n in self.segments:
            full = scenario.slot_quanta(ch)
            for _ in range(n):
                yield ch, full
        if self.final is not None:
            yield self.final

    def size(self, scenario: Scenario) -> int:
        total = sum(n * scenario.slot_quanta(c) for c, n in self.segments)
        return total + (self.final[1] if self.final else 0)

    def states(self, scenario: Scenario) -> list[tuple[int, int]]:
        """``(remaining before the transmission, channel)`` along the plan."""
        remaining = self.size(scenario)
        out = []
        for ch, amount in self.steps(scenario):
            out.append((remaining, ch))
            remaining -= amount
        return out

    @property
    def switches(self) -> int:
        seq = [c for c, n in self.segments if n]
        if self.final is not None:
            seq.append(self.final[0])
        return sum(1 for a, b in zip(seq, seq[1:]) if a != b)

    def check(self, scenario: Scenario, size: int | None = None) -> None:
        for ch, _ in self.segments:
            scenario.channel(ch)
        if self.final is not None:
            ch, amount = self.final
            if amount > scenario.slot_quanta(ch):
                raise InfeasiblePlan(f"final amount {amount} exceeds one slot on channel {ch}")
        if size is not None and self.size(scenario) != size:
            raise InfeasiblePlan(f"plan carries {self.size(scenario)} quanta, file has {size}")

    def summary(self) -> str:
        parts = [f"{c}x{n}" for c, n in self.segments if n]
        if self.final is not None:
            parts.append(f"{self.final[0]}:{self.final[1]}q")
        return " ".join(parts)


class PolicyRule:
    """Maps a remaining size (quanta) to the channel to sense next."""

    def channel_for(self, remaining: int) -> int:
        raise NotImplementedError

    def channels_for(self, remaining: np.ndarray) -> np.ndarray:
        out = np.empty(remaining.shape, dtype=np.int64)
        values, inverse = np.unique(remaining, return_inverse=True)
        choice = np.array([self.channel_for(int(v)) for v in values], dtype=np.int64)
        out[:] = choice[inverse.reshape(remaining.shape)]
        return out


class StaticRule(PolicyRule):
    def __init__(self, channel_id: int):
        self.channel_id = channel_id

    def channel_for(self, remaining: int) -> int:
        return self.channel_id

    def channels_for(self, remaining: np.ndarray) -> np.ndarray:
        return np.full(remaining.shape, self.channel_id, dtype=np.int64)

    def __repr__(self):
        return f"StaticRule({self.channel_id})"


class DynamicLookup(PolicyRule):
    """Frozen state -> channel table with a memoized fallback for unseen states.

    Unseen states only arise when a transmission falls short of a full slot
    (switching delay); ``resolve`` is then asked for the best channel there.
    """

    def __init__(self, table: dict[int, int], resolve: Callable[[int], int] | None = None):
        self.table = dict(table)
        self._resolve = resolve
        self._extra: dict[int, int] = {}

    def channel_for(self, remaining: int) -> int:
        ch = self.table.get(remaining)
        if ch is not None:
            return ch
        ch = self._extra.get(remaining)
        if ch is None:
            if self._resolve is None:
                raise KeyError(f"state {remaining} not in policy table")
            ch = self._extra[remaining] = self._resolve(remaining)
        return ch


class PlanRule(DynamicLookup):
    """Executes a plan by remaining size; off-plan states re-plan via ``replan``."""

    def __init__(self, plan: PolicyPlan, scenario: Scenario,
                 replan: Callable[[int], PolicyPlan] | None = None):
        self.plan = plan
        self.scenario = scenario
        self._replan = replan
        super().__init__({s: ch for s, ch in plan.states(scenario)},
                         self._from_replan if replan is not None else None)

    def _from_replan(self, remaining: int) -> int:
        plan = self._replan(remaining)
        for s, ch in plan.states(self.scenario):
            self._extra.setdefault(s, ch)
        return plan.states(self.scenario)[0][1]
