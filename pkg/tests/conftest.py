import numpy as np
import pytest

from stablemaps.labels import LabelledTree
from stablemaps.trees import PlaneTree
from stablemaps.weights import OffspringLaw

# Hand-checked 17-vertex tree in lex order, with its encodings and labels.
REF_K = [4, 0, 0, 2, 1, 4, 0, 0, 0, 0, 0, 2, 3, 0, 0, 0, 0]
REF_W = [0, 3, 2, 1, 2, 2, 5, 4, 3, 2, 1, 0, 1, 3, 2, 1, 0, -1]
REF_H = [0, 1, 1, 1, 2, 3, 4, 4, 4, 4, 2, 1, 2, 3, 3, 3, 2]
REF_LABELS = [0, -1, -2, 1, 0, 0, -1, -2, -1, 0, 1, 0, -1, -2, 0, -1, 0]


@pytest.fixture
def ref_tree():
    return PlaneTree(REF_K)


@pytest.fixture
def ref_labelled():
    return LabelledTree(PlaneTree(REF_K), REF_LABELS)


@pytest.fixture
def binary_law():
    """mu(0) = mu(2) = 1/2: the quadrangulation offspring law."""
    return OffspringLaw(np.array([0.5, 0.0, 0.5]))


@pytest.fixture
def mixed_law():
    """Aperiodic finite-variance law used where the binary law's parity gets in the way."""
    return OffspringLaw(np.array([0.6, 0.0, 0.2, 0.2]))


@pytest.fixture
def edge_map_tree():
    return LabelledTree(PlaneTree([1, 0]), [0, 0])


@pytest.fixture
def path_map_tree():
    return LabelledTree(PlaneTree([2, 0, 0]), [0, -1, 0])


def rng(seed=0):
    return np.random.default_rng(seed)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split()[0])):
        terminalreporter.write_line(line)
