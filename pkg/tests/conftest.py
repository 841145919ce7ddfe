import random
from pathlib import Path

import pytest

from mtparser.neural import Hyperparameters

FIXTURES = Path(__file__).parent / "fixtures"

# dimensions of the finite-difference model
TINY = Hyperparameters(dim_word=4, dim_char=3, hidden_char=3, hidden_word=5, dim_tb=2, mlp_hidden=6)
# small enough for training inside unit tests
SMALL = Hyperparameters(dim_word=16, dim_char=8, hidden_char=8, hidden_word=16, dim_tb=4, mlp_hidden=32)


def random_tree(n: int, rng: random.Random) -> list[int]:
    """Uniform random head vector, resampled until it is a single-rooted tree."""
    while True:
        head = [rng.randint(0, n) for _ in range(n)]
        if any(h == i + 1 for i, h in enumerate(head)) or head.count(0) != 1:
            continue
        ok = True
        for i in range(1, n + 1):
            seen, j = set(), i
            while j != 0:
                if j in seen:
                    ok = False
                    break
                seen.add(j)
                j = head[j - 1]
            if not ok:
                break
        if ok:
            return head


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``record(number, passed, detail)``: one pass/fail line per acceptance criterion."""

    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
