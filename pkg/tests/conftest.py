import warnings

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_resample_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


class AcceptanceLog:
    """Collects sub-check outcomes per acceptance criterion for the final summary."""

    def __init__(self):
        self.titles = {}
        self.checks = {}

    def record(self, number: int, title: str, name: str, ok: bool, detail: str):
        self.titles[number] = title
        self.checks.setdefault(number, []).append((name, bool(ok), detail))

    def lines(self):
        out = []
        for n in sorted(self.checks):
            checks = self.checks[n]
            failed = [f"{name}: {detail}" for name, ok, detail in checks if not ok]
            status = "PASS" if not failed else "FAIL"
            tail = f"{len(checks)} checks" if not failed else "; ".join(failed)
            out.append(f"criterion {n:2d} {status}  {self.titles[n]}  ({tail})")
        return out


_ACCEPTANCE = AcceptanceLog()


@pytest.fixture(scope="session")
def acceptance():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    lines = _ACCEPTANCE.lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
