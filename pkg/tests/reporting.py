"""Collects one verdict line per acceptance criterion for the session summary."""

RESULTS: list[str] = []


def report(number: int, ok: bool, text: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {text}"
    RESULTS.append(line)
    print(line)
    return ok
