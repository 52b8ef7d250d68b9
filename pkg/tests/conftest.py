import pytest

from mono3d_dse.evaluator import Evaluator
from mono3d_dse.power import load_calibration
from mono3d_dse.thermal import load_stack
from mono3d_dse.workload import bundled_network


@pytest.fixture(scope="session")
def cal():
    return load_calibration()


@pytest.fixture(scope="session")
def stack():
    return load_stack()


@pytest.fixture(scope="session")
def unet():
    return bundled_network("unet")


@pytest.fixture(scope="session")
def resnet():
    return bundled_network("resnet50")


@pytest.fixture(scope="session")
def unet_eval(unet, cal, stack):
    return Evaluator(unet, cal, stack, (16, 16))


@pytest.fixture(scope="session")
def resnet_eval(resnet, cal, stack):
    return Evaluator(resnet, cal, stack, (16, 16))


_CRITERIA = {}


@pytest.fixture
def record():
    """Register the outcome of one acceptance criterion for the summary."""
    def _record(number, title, ok, detail):
        _CRITERIA[number] = (title, ok, detail)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
