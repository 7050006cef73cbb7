import numpy as np
import pytest

from gmpl import generate_synthetic, split_dataset

_criteria = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria.append((marker.args[0], item.name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label, name, outcome in _criteria:
        status = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"{status:5s} {label} [{name}]")


class FixedRng:
    """Stands in for ``np.random.Generator`` with constant uniform draws."""

    def __init__(self, value):
        self.value = value

    def random(self, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value, dtype=np.float64)


@pytest.fixture
def fixed_rng():
    return FixedRng


@pytest.fixture(scope="session")
def synthetic():
    """Noiseless rank-2, 50 x 40 matrix at density 0.3 and its truth factors."""
    return generate_synthetic(50, 40, 2, 0.3, 0.0, seed=1)


@pytest.fixture(scope="session")
def synthetic_split(synthetic):
    data, _ = synthetic
    return split_dataset(data, (0.7, 0.1, 0.2), seed=1)


@pytest.fixture
def toy_file(tmp_path):
    path = tmp_path / "toy.txt"
    lines = [f"u{k % 4} i{k} {1 + k % 5}" for k in range(10)]
    path.write_text("\n".join(lines) + "\n")
    return path
