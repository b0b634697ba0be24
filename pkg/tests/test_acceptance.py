"""Acceptance criteria 1-11, one test each.

Every test prints a single ``[PASS]``/``[FAIL]`` line (also without ``-s``)
and then asserts the criterion.  The checks themselves live in
:mod:`heavytail.harness.verify` so that ``heavytail verify`` runs exactly the
same code.
"""

import json

import pytest

from heavytail.harness.verify import CHECKS, _jsonable

NAMES = {
    1: "analytic_moments_match_monte_carlo",
    2: "delta_values_for_both_dof_regimes",
    3: "zeroth_order_bias_bound",
    4: "zeroth_order_variance_bound",
    5: "moment_difference_bound_dominates",
    6: "bias_floor_shrinks_with_step_size",
    7: "complexity_orders_and_step_consistency",
    8: "gamma_ratio_bound_has_no_counterexample",
    9: "weighted_poincare_constants",
    10: "radial_ks_oracle_and_ula_control",
    11: "outputs_independent_of_threads",
}


@pytest.mark.parametrize("number", sorted(CHECKS), ids=[f"{n:02d}-{NAMES[n]}" for n in sorted(CHECKS)])
def test_criterion(number, capsys):
    result = CHECKS[number]()
    with capsys.disabled():
        print(f"\n{result.line()}")
    assert result.passed, json.dumps(_jsonable(result.details), indent=1, sort_keys=True)
