"""Acceptance criteria 1-10 at their stated tolerances and runtime budgets.

Each test prints one line ``criterion N <name>: PASS|FAIL`` followed by the
individual measurements, then asserts the verdict.
"""
import time

import pytest

from acoustoelastic import verification as v

CRITERIA = [
    (1, "map identities", (v.check_map_identities,), 1.0),
    (2, "pullback lemmas", (v.check_lemmas,), 5.0),
    (3, "coefficient structure", (v.check_coefficients,), 1.0),
    (4, "discrete energy cancellation", (v.check_cancellation,), 1.0),
    (5, "zero-data uniqueness", (v.check_zero_data,), 5.0),
    (6, "energy conservation", (v.check_energy,), 120.0),
    (7, "finite speed of propagation", (v.check_causality,), 120.0),
    (8, "compressed vs direct equivalence", (v.check_equivalence,), 600.0),
    (9, "manufactured-solution convergence", (v.check_mms,), 600.0),
    (10, "a priori bound structure", (v.check_apriori,), 300.0),
]
SLOW = {6, 7, 8, 9, 10}


def _params():
    for number, name, funcs, budget in CRITERIA:
        marks = [pytest.mark.slow] if number in SLOW else []
        yield pytest.param(number, name, funcs, budget, id=f"criterion_{number:02d}", marks=marks)


@pytest.mark.parametrize("number, name, funcs, budget", list(_params()))
def test_criterion(number, name, funcs, budget, capsys):
    t0 = time.perf_counter()
    results = [r for f in funcs for r in f()]
    elapsed = time.perf_counter() - t0
    in_budget = elapsed < budget
    passed = all(r.passed for r in results) and in_budget
    with capsys.disabled():
        print(f"\ncriterion {number} {name}: {'PASS' if passed else 'FAIL'} "
              f"(runtime {elapsed:.2f} s, budget {budget:g} s{'' if in_budget else ' EXCEEDED'})")
        for r in results:
            print(f"    {r.line()}")
    failed = [r.name for r in results if not r.passed] + ([] if in_budget else ["runtime"])
    assert passed, f"criterion {number} failed: {', '.join(failed)}"
