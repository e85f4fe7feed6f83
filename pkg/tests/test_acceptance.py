"""Acceptance criteria 1-12, one test each.

``ETALE_LAB_PROFILE=quick`` runs the reduced budgets; the default is the
full profile.
"""

import os

import pytest

from etale_lab.selftest import CRITERIA, run_criterion


PROFILE = os.environ.get("ETALE_LAB_PROFILE", "full")


@pytest.mark.parametrize("number", [n for n, _, _ in CRITERIA], ids=lambda n: f"criterion-{n}")
def test_criterion(number, capsys):
    result = run_criterion(number, PROFILE)
    with capsys.disabled():
        print(f"\n{result.line()} ({result.seconds:.1f}s, {PROFILE})")
    assert result.passed, result.detail
