import numpy as np
import pytest

from hoibc.mesh import TriangleMesh, gen_geodesic_sphere, gen_icosphere

TETRA_V = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
TETRA_T = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])


def tetra_off() -> str:
    lines = ["OFF", "4 4 6"]
    lines += [" ".join(f"{c:g}" for c in v) for v in TETRA_V]
    lines += ["3 " + " ".join(str(i) for i in t) for t in TETRA_T]
    return "\n".join(lines) + "\n"


@pytest.fixture
def tetra():
    return TriangleMesh(TETRA_V * 0.1, TETRA_T, name="tetra").validate()


@pytest.fixture(scope="session")
def ico1():
    return gen_icosphere(0.3, 1)


@pytest.fixture(scope="session")
def sphere_small():
    return gen_geodesic_sphere(0.25, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion, printed at the end of the run
_ACCEPTANCE: dict = {}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
