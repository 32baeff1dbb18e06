"""Shared, session-scoped fixtures for the expensive objects."""

import pytest

from oper_spectra.abelian import HyperellipticCurve, period_matrix
from oper_spectra.monodromy import compute_monodromy
from oper_spectra.oper import four_point, oper_family, rigid_three_point
from oper_spectra.realoper import SearchOptions, enumerate_real_opers
from oper_spectra.section import invariant_hermitian_form

FOUR_POINT_RECT = (-1.2, 0.7, -1.0, 1.0)
ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE_KEY, None)
    if not results:
        return
    from oper_spectra.acceptance import format_table

    terminalreporter.section("acceptance criteria")
    for line in format_table(results).splitlines():
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def rigid():
    return rigid_three_point()


@pytest.fixture(scope="session")
def rigid_rep(rigid):
    return compute_monodromy(rigid)


@pytest.fixture(scope="session")
def rigid_form(rigid_rep):
    return invariant_hermitian_form(rigid_rep)


@pytest.fixture(scope="session")
def four_family():
    return oper_family(four_point())


@pytest.fixture(scope="session")
def four_hits(four_family):
    return enumerate_real_opers(four_family, FOUR_POINT_RECT, (32, 32), SearchOptions())


@pytest.fixture(scope="session")
def elliptic():
    return HyperellipticCurve((0, -1, 0, 1))


@pytest.fixture(scope="session")
def genus_two():
    return HyperellipticCurve((0, -1, 0, 0, 0, 1))


@pytest.fixture(scope="session")
def elliptic_periods(elliptic):
    return period_matrix(elliptic)


@pytest.fixture(scope="session")
def genus_two_periods(genus_two):
    return period_matrix(genus_two)
