import numpy as np
import pytest

from fedpb.embedding import EncodedSample, table_from_arrays
from fedpb.nn.model import ModelShape

TINY_SHAPE = ModelShape(seq_len=12, embed_dim=4, hidden=3, dense=5)


def make_sample(tokens, label, max_len=12, source_id=""):
    idx = np.zeros(max_len, dtype=np.int32)
    idx[: len(tokens)] = tokens
    return EncodedSample(idx, len(tokens), label, source_id)


@pytest.fixture
def tiny_table():
    rng = np.random.default_rng(7)
    words = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel"]
    return table_from_arrays(words, rng.normal(size=(len(words), TINY_SHAPE.embed_dim)))


@pytest.fixture
def separable_samples():
    """Class 1 uses words 1-4, class 0 words 5-8; 20 of each."""
    rng = np.random.default_rng(3)
    out = []
    for k in range(40):
        label = k % 2
        pool = np.arange(1, 5) if label else np.arange(5, 9)
        n = int(rng.integers(10, 13))
        out.append(make_sample(rng.choice(pool, size=n), label, source_id=f"s{k}"))
    return out


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
