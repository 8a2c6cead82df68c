import pytest

from twinbeam.source import reference_model, sample_trace

REFERENCE_N = 200_000


@pytest.fixture(scope="session")
def reference_cov():
    return reference_model().covariance()


@pytest.fixture(scope="session")
def reference_trace(reference_cov):
    return sample_trace(reference_cov, REFERENCE_N, seed=1)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record a one-line verdict for an acceptance criterion (echoed in the terminal summary)."""

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        _ACCEPTANCE[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
