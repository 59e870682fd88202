import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit_rows(rng, n, d):
    Z = rng.normal(size=(n, d))
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(number, title)`` returns a
    ``report(passed, detail)`` callable; the summary prints at session end."""

    def start(number, title):
        def report(passed, detail=""):
            _CRITERIA[number] = (title, bool(passed), detail)
            print(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}  {detail}")
            return passed
        return report

    return start


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        terminalreporter.write_line(
            f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}  {detail}")
