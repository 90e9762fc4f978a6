import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cws.cluster import ClusterConfig  # noqa: E402
from cws.generators import example_trace  # noqa: E402
from cws.simulator import build_system  # noqa: E402


@pytest.fixture
def two_slot_cluster():
    return ClusterConfig.uniform(2, cpus=1, memory_bytes=1 << 30)


@pytest.fixture
def example():
    return example_trace()


@pytest.fixture
def system(two_slot_cluster):
    """Scheduler + simulator over two single-slot nodes, ledger audited on every event."""
    return build_system(two_slot_cluster, audit=True)


ACCEPTANCE_RESULTS: list[str] = []


class _Criterion:
    def __init__(self, number: int, title: str, budget_s: float):
        self.number, self.title, self.budget_s = number, title, budget_s
        self.detail = ""

    def __enter__(self):
        import time
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        import time
        elapsed = time.perf_counter() - self._t0
        ok = exc_type is None and elapsed < self.budget_s
        note = self.detail if exc_type is None else f"{exc_type.__name__}: {exc}".splitlines()[0]
        if exc_type is None and not ok:
            note = f"over budget ({self.budget_s:g}s)"
        ACCEPTANCE_RESULTS.append(
            f"{'PASS' if ok else 'FAIL'} criterion {self.number}: {self.title} "
            f"[{elapsed:.2f}s] {note}".rstrip())
        print(ACCEPTANCE_RESULTS[-1])
        if exc_type is None and not ok:
            raise AssertionError(f"criterion {self.number} exceeded {self.budget_s}s")
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
