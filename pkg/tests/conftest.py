from contextlib import contextmanager

import numpy as np
import pytest
from hypothesis import strategies as st

from twopath.qcore import Ket, Subsystem, SubsystemLayout


def random_unit(rng, dim):
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_hermitian(rng, dim):
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (a + a.conj().T) / 2


def random_unitary(rng, dim):
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def layout_of(*dims, prefix="s"):
    return SubsystemLayout(
        tuple(Subsystem(f"{prefix}{i}", tuple(f"{prefix}{i}_{k}" for k in range(d))) for i, d in enumerate(dims))
    )


def random_ket(rng, layout):
    return Ket(layout, random_unit(rng, layout.dim))


seeds = st.integers(min_value=0, max_value=2**32 - 1)
small_dims = st.lists(st.integers(min_value=1, max_value=4), min_size=1, max_size=3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# Acceptance criteria report: one PASS/FAIL line each, echoed in the terminal summary.
_CRITERIA: dict[int, str] = {}


@contextmanager
def criterion(number, title):
    try:
        yield
    except BaseException:
        _record(number, title, "FAIL")
        raise
    _record(number, title, "PASS")


def _record(number, title, verdict):
    line = f"criterion {number:>2} {verdict}  {title}"
    _CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
