"""Independent reference computations used by the tests."""

from fractions import Fraction
from functools import lru_cache


def enumerate_optimum(slot_quanta, probs, delta, size, cap=200_000):
    """Brute force over every transmission sequence (exact rationals).

    ``slot_quanta`` and ``probs`` are lists indexed by channel position.
    Returns ``(best value, number of plans)`` or None when more than ``cap``
    plans exist.
    """
    n = len(slot_quanta)

    @lru_cache(maxsize=None)
    def count(s):
        total = 0
        for j in range(n):
            total += 1 if s <= slot_quanta[j] else count(s - slot_quanta[j])
            if total > cap:
                return cap + 1
        return total

    if count(size) > cap:
        return None
    best = None
    plans = 0

    def walk(s, acc):
        nonlocal best, plans
        for j in range(n):
            d, p = slot_quanta[j], probs[j]
            if s <= d:
                value = acc + delta * (1 - p) / p + delta * Fraction(s, d)
                plans += 1
                if best is None or value < best:
                    best = value
            else:
                walk(s - d, acc + delta / p)

    walk(size, Fraction(0))
    return best, plans


def static_time(d, p, delta, size):
    k, rem = divmod(size, d)
    t = k * delta / p
    if rem:
        t += delta * (1 - p) / p + delta * Fraction(rem, d)
    return t
