import numpy as np
import pytest

from eflesh.mesh import box_mesh, emit_mesh
from eflesh.sensormodel import SensorModel


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def reference_box(tmp_path_factory):
    """Binary STL of the 40 x 40 x 24 mm sensor body."""
    path = tmp_path_factory.mktemp("ref") / "box.stl"
    emit_mesh(box_mesh((0, 0, 0), (40, 40, 24)), str(path))
    return str(path)


@pytest.fixture(scope="session")
def default_model():
    return SensorModel.default()


def pytest_terminal_summary(terminalreporter):
    from .test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
