import pytest

# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = {}


def record(criterion: int, name: str, ok: bool, detail: str = ""):
    key = (criterion, name)
    ACCEPTANCE_LINES[key] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    by_criterion = {}
    for (c, name), (ok, detail) in sorted(ACCEPTANCE_LINES.items()):
        by_criterion.setdefault(c, []).append((name, ok, detail))
    for c, parts in sorted(by_criterion.items()):
        ok = all(p[1] for p in parts)
        terminalreporter.write_line(f"criterion {c}: {'PASS' if ok else 'FAIL'}")
        for name, part_ok, detail in parts:
            terminalreporter.write_line(f"    {'pass' if part_ok else 'FAIL'}  {name}  {detail}")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full solves or sweeps (minutes)")
