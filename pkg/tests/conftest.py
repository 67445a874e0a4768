import numpy as np
import pytest

from traction_gap.constitutive import Material
from traction_gap.loads import LoadSystem
from traction_gap.mesh import generate_mesh, normalize_frame


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def mesh8():
    return normalize_frame(generate_mesh("unit_square", 8))


@pytest.fixture(scope="session")
def mesh4():
    return normalize_frame(generate_mesh("unit_square", 4))


@pytest.fixture
def mat():
    return Material(1.0, 1.0)


@pytest.fixture
def tension():
    return LoadSystem.normal(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_field(rng, mesh, shrink=0.0):
    """Random nodal field, optionally plus a multiple of -x so the trace integral changes sign."""
    v = rng.standard_normal((mesh.n_nodes, 2))
    return v - shrink * rng.uniform(0, 3) * mesh.nodes
