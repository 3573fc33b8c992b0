import numpy as np
import pytest

from qihier.distillation import DistillationProblem, build_example_state, distill


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def example_state():
    return build_example_state(0.25)


@pytest.fixture(scope="session")
def separation_results(example_state):
    """Fidelity optima at t = 1/4, M = 4 for QIP and QIP with PPT."""
    return {
        cls: distill(DistillationProblem(example_state, 4, cls))
        for cls in ("qip", "qip-ppt")
    }


def pytest_configure(config):
    config._criteria = {}


@pytest.fixture
def record_criterion(request):
    """Store a one-line acceptance verdict for the end-of-run summary."""
    def record(number: int, passed: bool, detail: str = ""):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}" + (f"  {detail}" if detail else "")
        request.config._criteria[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    criteria = getattr(config, "_criteria", {})
    if criteria:
        terminalreporter.section("acceptance criteria")
        for number in sorted(criteria):
            terminalreporter.write_line(criteria[number])
