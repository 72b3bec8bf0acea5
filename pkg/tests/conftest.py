import numpy as np
import pytest

from pararoute.instance import GeneratorConfig, Instance, generate_instance


def small_instance(n: int, capacity: int, seed: int, mode: str = "grouped", max_group: int = 3) -> Instance:
    return generate_instance(GeneratorConfig(n, capacity, demand_mode=mode, max_group=min(max_group, capacity)), seed)


@pytest.fixture
def square_instance() -> Instance:
    """Depot at the origin, customers at the other corners of the unit square."""
    return Instance.from_points((0.0, 0.0), [(1.0, 0.0), (1.0, 1.0), (0.0, 1.0)], [1, 1, 1], capacity=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report(capsys):
    """Print one acceptance verdict line immediately and again in the final summary."""

    def emit(label: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
