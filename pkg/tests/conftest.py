import os

import numpy as np
import pytest

from rbfinet import attacks

MNIST_DIR = os.environ.get("RBFINET_MNIST", "/root/data/mnist")

# every batch emitted by an attack generator during the session
AUDIT = {"batches": 0, "examples": 0, "violations": []}
# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def _audit(kind, x, x_adv, eps):
    AUDIT["batches"] += 1
    AUDIT["examples"] += x_adv.shape[0]
    bad = attacks.perturbation_violations(x, x_adv, eps)
    if bad:
        AUDIT["violations"].append((kind, eps, bad))


@pytest.fixture(scope="session", autouse=True)
def attack_audit():
    attacks.add_observer(_audit)
    yield AUDIT
    attacks.remove_observer(_audit)


def pytest_collection_modifyitems(config, items):
    # acceptance criteria run last so that the validity audit covers the whole suite
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def mnist_dir():
    if not os.path.exists(os.path.join(MNIST_DIR, "t10k-labels.idx1-ubyte")) and not os.path.exists(
            os.path.join(MNIST_DIR, "t10k-labels-idx1-ubyte")):
        pytest.fail(f"MNIST files not found in {MNIST_DIR}; set RBFINET_MNIST")
    return MNIST_DIR
