import numpy as np
import pytest
from scipy.linalg import hadamard

from cohdict import Dictionary, SparseCoding


def mercedes_benz() -> np.ndarray:
    """Three unit vectors in the plane at 90, 210 and 330 degrees."""
    ang = np.deg2rad([90.0, 210.0, 330.0])
    return np.vstack([np.cos(ang), np.sin(ang)])


def random_dictionary(rng, dim, size) -> Dictionary:
    return Dictionary(rng.standard_normal((dim, size)))


def two_ortho_bases(dim, rng):
    """[I, H/sqrt(D)] under a random rotation: coherence exactly 1/sqrt(D)."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return Dictionary(q @ np.hstack([np.eye(dim), hadamard(dim) / np.sqrt(dim)]))


def coherent_replacement_instance():
    """Two coherent atom pairs; the two worst-coded columns are nearly parallel."""
    e1, e2, e3 = np.eye(3)
    d = Dictionary(np.column_stack([e1, e1, e2, e2]))
    x = np.column_stack([5 * e3, 5 * (e3 + 0.1 * e1), 0.2 * e1, 0.1 * e2])
    coding = SparseCoding.from_dense(np.array([[0, 0, 0.2, 0], [0, 0, 0, 0], [0, 0, 0, 0.1], [0, 0, 0, 0.0]]))
    return d, x, coding


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def mb_frame():
    return Dictionary(mercedes_benz())


_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when == "teardown":
        return
    number, title = mark.args
    if rep.when == "call" or rep.failed:
        _ACCEPTANCE[number] = (title, "PASS" if rep.passed else "FAIL", rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, seconds = _ACCEPTANCE[number]
        terminalreporter.write_line(f"{status} {number:2d}. {title} ({seconds:.1f} s)")
