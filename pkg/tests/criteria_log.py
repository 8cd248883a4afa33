"""Collects the one-line verdicts printed by the acceptance tests."""

LINES: list[str] = []


def record(number, passed: bool, detail: str) -> str:
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
    LINES.append(line)
    print(line, flush=True)
    return line
