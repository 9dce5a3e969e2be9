"""Collects acceptance verdicts and prints them at the end of the session."""
import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """``verdict(label, passed, detail)`` records a PASS/FAIL line, echoes it
    immediately and fails the test when ``passed`` is false.  ``label`` is
    the criterion number, optionally with a variant suffix such as ``"9b"``."""

    def record(label, passed, detail):
        line = f"criterion {label!s:>3}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append((str(label), line))
        print(line)
        assert passed, line

    return record


def skip_criterion(label, reason):
    ACCEPTANCE_LINES.append((str(label), f"criterion {label!s:>3}: SKIP  {reason}"))
    pytest.skip(reason)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")

    def order(item):
        digits = "".join(ch for ch in item[0] if ch.isdigit())
        return int(digits), item[0]

    for _, line in sorted(ACCEPTANCE_LINES, key=order):
        terminalreporter.write_line(line)
