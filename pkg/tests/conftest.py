import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from evosynth.data import load_mnist_idx, mnist_paths  # noqa: E402

MNIST_DIR = os.environ.get("EVOSYNTH_MNIST_DIR", "/root/data/mnist")

_criteria = {}


def mnist_available():
    images, labels = mnist_paths(MNIST_DIR, "train")
    return os.path.exists(images) and os.path.exists(labels)


@pytest.fixture(scope="session")
def mnist_dir():
    if not mnist_available():
        pytest.skip(f"MNIST IDX files not found in {MNIST_DIR}")
    return MNIST_DIR


@pytest.fixture(scope="session")
def mnist_train(mnist_dir):
    return load_mnist_idx(*mnist_paths(mnist_dir, "train"))


@pytest.fixture(scope="session")
def mnist_test(mnist_dir):
    return load_mnist_idx(*mnist_paths(mnist_dir, "test"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_mnist(tmp_path):
    from helpers import write_tiny_mnist

    return write_tiny_mnist(tmp_path)


# -- acceptance summary: one line per criterion ------------------------------

def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        marker = _criteria.get(report.nodeid)
        if marker is not None:
            marker["outcome"] = report.outcome


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _criteria[item.nodeid] = {"number": m.args[0], "text": m.args[1], "outcome": None,
                                      "notes": []}


@pytest.fixture
def note(request):
    """Attach a measured value to the acceptance summary line of this test."""
    entry = _criteria.get(request.node.nodeid)

    def add(text):
        print(text)
        if entry is not None:
            entry["notes"].append(text)

    return add


def pytest_terminal_summary(terminalreporter):
    ran = [c for c in _criteria.values() if c["outcome"] is not None]
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ran, key=lambda c: c["number"]):
        verdict = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[c["outcome"]]
        terminalreporter.write_line(f"criterion {c['number']:>2}: {verdict}  {c['text']}")
        for text in c["notes"]:
            terminalreporter.write_line(f"              {text}")
