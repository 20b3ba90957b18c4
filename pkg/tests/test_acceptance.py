"""Every acceptance criterion at its stated tolerance, one PASS/FAIL line each.

The lines are printed in the terminal summary under "acceptance criteria".
Criterion 12 reruns 1-11 with two workers and compares payload digests.
"""
import pytest

from allelopathy.acceptance import CRITERIA, criterion_12

_RESULTS = {}


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, acceptance_lines):
    res = CRITERIA[number](None, 1)
    _RESULTS[number] = res
    acceptance_lines.append(res.line())
    assert res.passed, res.detail


def test_criterion_12_determinism_across_worker_counts(acceptance_lines):
    missing = sorted(set(CRITERIA) - set(_RESULTS))
    if missing:
        pytest.skip(f"criteria {missing} did not run in this session")
    res = criterion_12(_RESULTS, workers=1)
    acceptance_lines.append(res.line())
    assert res.passed, res.detail
