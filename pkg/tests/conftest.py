import numpy as np
import pytest

from kgs.spectral import ComplexField, Grid, RealField

CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = getattr(item, "criterion_detail", "")
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        CRITERIA[number] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        status, title, detail = CRITERIA[number]
        line = f"criterion {number:2d} {status}: {title}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture
def grid16():
    return Grid(dim=3, n=16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_field(grid, rng, decay=2.0):
    c = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * grid.bracket ** (-decay)
    return ComplexField(grid, c)


def random_real(grid, rng, decay=2.0):
    c = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * grid.bracket ** (-decay)
    return RealField.symmetrized(grid, c)


def single_mode(grid, k, value=1.0, real=False):
    """Field with one nonzero coefficient (two for real fields, at k and -k)."""
    c = grid.zeros()
    idx = tuple(int(x) % grid.n for x in k)
    c[idx] = value
    if real:
        neg = tuple(int(-x) % grid.n for x in k)
        c[neg] = np.conj(value)
        return RealField(grid, c)
    return ComplexField(grid, c)
