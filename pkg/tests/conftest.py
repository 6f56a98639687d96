import pytest


@pytest.fixture
def verdict(record_property):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def check(number: int, title: str, parts: dict) -> None:
        ok = all(passed for passed, _ in parts.values())
        detail = "; ".join(f"{name}: {text} [{'ok' if passed else 'FAIL'}]"
                           for name, (passed, text) in parts.items())
        line = f"ACC {number:2d} {'PASS' if ok else 'FAIL'}  {title}  ({detail})"
        print(line)
        record_property("acceptance", line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            lines += [v for k, v in getattr(rep, "user_properties", ()) if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
