import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from umvd.instance import instance_from_levels

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def levels_matrix(pairs_levels, n):
    """Symmetric level matrix from ``{(i, j): level}`` with 0-based vertices."""
    M = np.zeros((n, n), dtype=np.int64)
    for (i, j), lvl in pairs_levels.items():
        M[i, j] = M[j, i] = lvl
    return M


@pytest.fixture
def pp_minus_triangle():
    """Two small distances and one large one: (+, +, -)."""
    return instance_from_levels(levels_matrix({(0, 1): 2, (0, 2): 2, (1, 2): 1}, 3))


@pytest.fixture
def five_cycle():
    lv = np.ones((5, 5), dtype=np.int64)
    for a in range(5):
        b = (a + 1) % 5
        lv[a, b] = lv[b, a] = 2
    np.fill_diagonal(lv, 0)
    return instance_from_levels(lv)


_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = dict(item.user_properties).get("detail", "")
        _CRITERIA[marker.args[0]] = ("PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        status, detail = _CRITERIA[num]
        terminalreporter.line(f"criterion {num:2d}: {status}  {detail}")
