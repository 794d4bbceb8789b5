"""Acceptance suite: one test per acceptance criterion, each printing its
pass/fail line.  Runtime budgets (wall-clock caps from the contract) are
asserted alongside correctness.
"""

import pytest

from scorepnp import verification as V


def _run(fn, budget_s):
    result = fn()
    print()
    print(V._fmt(result))
    assert result.seconds < budget_s, f"runtime {result.seconds:.1f}s over budget"
    assert result.passed, result.detail
    return result


def test_criterion_1_tweedie_identity_suite():
    _run(V.criterion_tweedie_identity, budget_s=10)


def test_criterion_2_cross_convention_equivalence():
    _run(V.criterion_cross_convention, budget_s=5)


def test_criterion_3_param_matching_round_trip():
    _run(V.criterion_param_matching, budget_s=5)


def test_criterion_4_prox_adjoint_oracles():
    _run(V.criterion_prox_adjoint, budget_s=5)


def test_criterion_5_fixed_point_oracles():
    _run(V.criterion_fixed_points, budget_s=60)


def test_criterion_6_diffpir_conjugate_check():
    _run(V.criterion_diffpir_conjugate, budget_s=60)


@pytest.mark.slow
def test_criterion_7_toy_end_to_end():
    _run(V.criterion_toy_end_to_end, budget_s=600)


@pytest.mark.slow
def test_criterion_8_deblurring_improvement(tmp_path):
    result = V.criterion_deblurring_improvement(workdir=tmp_path)
    print()
    print(V._fmt(result))
    assert result.seconds < 300
    assert result.passed, result.detail
