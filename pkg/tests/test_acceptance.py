"""Full-budget acceptance criteria, one test per criterion.

Each result line is echoed to the terminal summary so the pass/fail table
appears in the pytest output.
"""

import pytest

from critaffine.acceptance import CRITERIA, DEFAULT_SEED, run_criterion

pytestmark = pytest.mark.acceptance

ACCEPTANCE_LINES: list[str] = []


@pytest.mark.parametrize("number", sorted(CRITERIA), ids=lambda n: f"criterion_{n:02d}")
def test_criterion(number):
    res = run_criterion(number, DEFAULT_SEED, quick=False)
    ACCEPTANCE_LINES.append(res.line())
    assert res.passed, res.to_dict()["details"]
