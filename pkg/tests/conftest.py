import numpy as np
import pytest

from flis import _fallback, kernels

try:
    from flis import _kernels
except ImportError:  # extension not built
    _kernels = None

# filled by the acceptance tests and echoed at the end of the run
ACCEPTANCE_LINES = []

BACKENDS = ["python"] + (["cython"] if _kernels is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    impl = _fallback if request.param == "python" else _kernels
    for name in ("omp_gram", "lasso_cd", "nnqp_gram", "edt_sq"):
        monkeypatch.setattr(kernels, name, getattr(impl, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit_columns(A):
    return A / np.linalg.norm(A, axis=0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
