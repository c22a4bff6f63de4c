"""Acceptance gate: one line per criterion, each at its stated tolerance."""

import pytest

from markov_cg.acceptance import CRITERIA


@pytest.mark.parametrize("criterion", CRITERIA, ids=lambda c: c.__name__)
def test_criterion(criterion, capsys):
    result = criterion(42)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.detail
