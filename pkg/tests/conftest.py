import pytest

from hermspde import kernels

ACCEPTANCE_LINES = []


@pytest.fixture(params=["python", "cython"])
def backend(request):
    """Run a test once per kernel backend; skips the compiled one when it is not built."""
    try:
        previous = kernels.use_backend(request.param)
    except ImportError:
        pytest.skip("compiled backend not built")
    yield request.param
    kernels.use_backend(previous)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
