import numpy as np
import pytest

from bcomd.acceptance import check_oracle_equivalence
from bcomd.environment import make_trace, stationary_trace
from bcomd.exceptions import InfeasibleError, InvalidInputError
from bcomd.oracle import (
    certify_comparator,
    comparator_on_truncated_simplex,
    comparator_sequence,
    evaluate_run,
    expected_regret_series,
    per_slot_optimum,
    regularity_measures,
)
from bcomd.policies import BcomdPolicy, RoundRecord
from bcomd.harness import execute


def _record(t, action, loss, constraint, probs):
    probs = np.asarray(probs, dtype=float)
    return RoundRecord(t=t, action=action, loss=loss, constraint=constraint, lam=0.0, probs=probs, x_next=probs)


def test_tight_constraint_mixes_two_arms():
    x = per_slot_optimum([0.2, 0.8], [0.5, -0.5])
    np.testing.assert_allclose(x, [0.5, 0.5])


def test_cheap_feasible_arm_is_pure():
    np.testing.assert_array_equal(per_slot_optimum([0.2, 0.8], [-0.5, 0.5]), [1.0, 0.0])


def test_ties_go_to_the_lowest_arm():
    np.testing.assert_array_equal(per_slot_optimum([0.3, 0.3, 0.3], [-0.1, -0.1, -0.1]), [1.0, 0.0, 0.0])


def test_mixture_weight_solves_the_constraint():
    f = np.array([0.1, 0.9, 0.5])
    g = np.array([0.6, -0.2, 0.4])
    x = per_slot_optimum(f, g)
    assert x @ g == pytest.approx(0.0, abs=1e-12)
    assert x[0] == pytest.approx(0.25)
    assert x[1] == pytest.approx(0.75)


def test_infeasible_slot():
    with pytest.raises(InfeasibleError):
        per_slot_optimum([0.2, 0.8], [0.3, 0.2])
    np.testing.assert_array_equal(per_slot_optimum([0.2, 0.8], [0.3, 0.2], relax=True), [0.0, 1.0])


def test_slot_shapes_must_match():
    with pytest.raises(InvalidInputError):
        per_slot_optimum([0.2, 0.8], [0.1, 0.2, 0.3])


def test_infeasible_slot_is_named():
    trace = make_trace([[0.2, 0.8], [0.2, 0.8]], [[-0.5, 0.5], [0.3, 0.2]])
    with pytest.raises(InfeasibleError, match="slot 1"):
        comparator_sequence(trace)


def test_alternating_measures(alternating):
    comparator, measures = regularity_measures(alternating)
    np.testing.assert_array_equal(comparator.points[:, 0], [1.0, 0.0, 1.0, 0.0])
    assert measures.P_T == 6.0
    assert measures.V_T == 3.0


def test_single_round_measures_are_zero():
    _, measures = regularity_measures(stationary_trace((0.2, 0.8), (-0.5, 0.5), 1))
    assert (measures.P_T, measures.V_T) == (0.0, 0.0)


def test_comparator_prefix_does_not_depend_on_the_suffix(stationary):
    full = comparator_sequence(stationary)
    short = comparator_sequence(stationary.truncated(10))
    np.testing.assert_array_equal(full.points[:10], short.points)
    np.testing.assert_array_equal(full.values[:10], short.values)


def test_single_round_regret():
    trace = make_trace([[0.2, 0.8]], [[-0.5, 0.5]])
    frame = evaluate_run(trace, [_record(0, 1, 0.8, 0.5, [0.5, 0.5])])
    row = frame.iloc[0]
    assert row["comparator_value"] == pytest.approx(0.2)
    assert row["regret_prefix"] == pytest.approx(0.6)
    assert row["expected_regret_prefix"] == pytest.approx(0.3)
    assert row["cum_violation"] == pytest.approx(0.5)


def test_prefix_series_accumulate(stationary):
    records = [
        _record(0, 0, 0.2, -0.5, [0.5, 0.5]),
        _record(1, 1, 0.8, 0.5, [0.5, 0.5]),
        _record(2, 1, 0.8, 0.5, [0.5, 0.5]),
    ]
    frame = evaluate_run(stationary, records)
    np.testing.assert_allclose(frame["cum_loss"], [0.2, 1.0, 1.8])
    np.testing.assert_allclose(frame["cum_violation"], [-0.5, 0.0, 0.5])
    np.testing.assert_allclose(frame["regret_prefix"], [0.0, 0.6, 1.2])
    np.testing.assert_allclose(expected_regret_series(stationary, records), [0.3, 0.6, 0.9])


def test_run_must_fit_the_trace():
    trace = make_trace([[0.2, 0.8]], [[-0.5, 0.5]])
    records = [_record(0, 0, 0.2, -0.5, [0.5, 0.5]), _record(1, 0, 0.2, -0.5, [0.5, 0.5])]
    with pytest.raises(InvalidInputError, match="run has 2 rounds"):
        evaluate_run(trace, records)


def test_run_rounds_must_be_in_order(stationary):
    records = [_record(1, 0, 0.2, -0.5, [0.5, 0.5]), _record(0, 0, 0.2, -0.5, [0.5, 0.5])]
    with pytest.raises(InvalidInputError, match="in order"):
        evaluate_run(stationary, records)


def test_comparator_is_certified(stationary):
    comparator = comparator_sequence(stationary)
    assert certify_comparator(stationary, comparator)
    comparator.points[3] = [0.0, 1.0]
    assert not certify_comparator(stationary, comparator)


def test_comparator_on_truncated_simplex():
    projected = comparator_on_truncated_simplex(np.array([[1.0, 0.0], [0.5, 0.5]]), 0.1)
    np.testing.assert_allclose(projected, [[0.9, 0.1], [0.5, 0.5]])


def test_policy_run_evaluates_consistently(stationary):
    policy = BcomdPolicy.exp3(stationary.n, stationary.T, seed=1)
    records = execute(policy, stationary)
    frame = evaluate_run(stationary, records)
    assert len(frame) == stationary.T
    np.testing.assert_allclose(frame["cum_loss"], np.cumsum([r.loss for r in records]))
    comparator_total = 0.2 * np.arange(1, stationary.T + 1)
    np.testing.assert_allclose(frame["regret_prefix"], frame["cum_loss"] - comparator_total, atol=1e-9)


def test_matches_a_generic_lp_solver():
    result = check_oracle_equivalence(200, seed=7)
    assert result.passed, result.measured
    assert result.measured["infeasible_points"] == 0.0


def test_stationary_suffix_leaves_the_measures_unchanged(alternating):
    _, base = regularity_measures(alternating)
    last_f = np.tile(alternating.losses[-1], (12, 1))
    last_g = np.tile(alternating.constraints[-1], (12, 1))
    extended = make_trace(
        np.vstack([alternating.losses, last_f]), np.vstack([alternating.constraints, last_g])
    )
    _, measures = regularity_measures(extended)
    assert (measures.P_T, measures.V_T) == (base.P_T, base.V_T)
