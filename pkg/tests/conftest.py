import contextlib

import pytest

_RESULTS: dict[int, tuple[str, bool, str]] = {}


class _Criterion:
    def __init__(self, number, title):
        self.number, self.title, self.detail = number, title, ""


@pytest.fixture()
def criterion():
    """Context manager recording one acceptance criterion's outcome."""

    @contextlib.contextmanager
    def run(number, title):
        c = _Criterion(number, title)
        try:
            yield c
        except BaseException:
            _RESULTS[number] = (title, False, c.detail)
            raise
        _RESULTS[number] = (title, True, c.detail)

    return run


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, ok, detail = _RESULTS[number]
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
