import pytest

from stokesshape.flow import FlowConfig, solve_states
from stokesshape.geometry import build_ogrid, circle


@pytest.fixture(scope="session")
def flow_cfg():
    return FlowConfig()


@pytest.fixture(scope="session")
def small_mesh():
    return build_ogrid(circle(64), 16, 20.0)


@pytest.fixture(scope="session")
def medium_mesh():
    return build_ogrid(circle(128), 32, 40.0)


@pytest.fixture(scope="session")
def cylinder_mesh():
    """The reference 256 x 64 O-grid around the unit cylinder."""
    return build_ogrid(circle(256), 64, 40.0)


@pytest.fixture(scope="session")
def small_states(small_mesh, flow_cfg):
    return solve_states(small_mesh, flow_cfg)


@pytest.fixture(scope="session")
def medium_states(medium_mesh, flow_cfg):
    return solve_states(medium_mesh, flow_cfg)


@pytest.fixture(scope="session")
def cylinder_states(cylinder_mesh, flow_cfg):
    return solve_states(cylinder_mesh, flow_cfg)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
