import numpy as np
import pytest
from hypothesis import settings

from learned_bloom.encoding import build_vocabulary
from learned_bloom.synthetic import make_corpus

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_corpus():
    """1.5k keys, 6k non-keys; enough for every kind to learn something."""
    return make_corpus(1500, 6000, seed=7)


@pytest.fixture(scope="session")
def small_vocab(small_corpus):
    return build_vocabulary(small_corpus)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_keys(n: int, seed: int, prefix: bytes = b"k") -> list[bytes]:
    r = np.random.default_rng(seed)
    return [prefix + r.bytes(12).hex().encode() for _ in range(n)]


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
