import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fairrepair.datasets import EncodedDataset  # noqa: E402
from fairrepair.nn import Network, NetworkConfig  # noqa: E402
from fairrepair.slicing import BACKENDS  # noqa: E402

REPO = Path(__file__).resolve().parent.parent
DATA_DIR = Path(os.environ.get("FAIRREPAIR_DATA", REPO / "data"))

# Worked example: 2-3-2-2 net, zero biases, sample (3, 1).
WORKED_WEIGHTS = [
    [[2.0, -1.0], [1.0, -2.0], [1.0, 3.0]],
    [[1.0, 0.0, -0.5], [-1.0, -1.0, 2.0]],
    [[1.0, 0.5], [-1.5, 2.0]],
]
WORKED_SAMPLE = [3.0, 1.0]
WORKED_PATH = {(0, 0, 2), (0, 1, 2), (1, 2, 1), (2, 1, 1)}


def worked_network(head="softmax"):
    sizes = [2, 3, 2, 2]
    weights = [np.array(w) for w in WORKED_WEIGHTS]
    biases = [np.zeros(s) for s in sizes[1:]]
    return Network(NetworkConfig(sizes, output_head=head), weights, biases)


def random_network(rng, sizes, head="softmax", scale=1.0, bias=True):
    weights = [rng.normal(0, scale, size=(b, a)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [rng.normal(0, 0.3, size=b) if bias else np.zeros(b) for b in sizes[1:]]
    return Network(NetworkConfig(list(sizes), output_head=head, seed=int(rng.integers(2**31))), weights, biases)


def toy_dataset(rng, n=200, d=4, bias_strength=1.0):
    """Synthetic binary task whose label leans on the sensitive attribute."""
    s = rng.integers(0, 2, size=n)
    X = rng.random((n, d))
    X[:, 0] = s
    logit = 3 * (X[:, 1] - 0.5) + bias_strength * (s - 0.5)
    y = (logit + 0.3 * rng.normal(size=n) > 0).astype(np.int64)
    return EncodedDataset(X=X, Y=y, S=s.astype(np.int64), feature_names=[f"f{i}" for i in range(d)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=sorted(BACKENDS))
def backend(request):
    return request.param


def dataset_path(name):
    files = {"adult": "adult.data", "compas": "compas-scores-two-years.csv", "german": "german.data"}
    return DATA_DIR / files[name]


requires_data = pytest.mark.skipif(
    not (DATA_DIR / "adult.data").exists(), reason="raw datasets not present under data/"
)


# One line per acceptance criterion, printed at the end of the session.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
