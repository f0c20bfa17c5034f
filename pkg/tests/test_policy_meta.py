import math

import numpy as np
import pytest

from bcomd.environment import make_trace, stationary_trace
from bcomd.exceptions import InvalidInputError, NumericalError
from bcomd.policies import BcomdState, MbcomdPolicy, bcomd_step, compute_parameters, initial_state, meta_step
from bcomd.policies.base import make_generator
from bcomd.policies.meta import (
    BcomdExpert,
    ExpertSpec,
    FixedExpert,
    expert_count,
    expert_grid,
    expert_loss_estimate,
    meta_update,
    mix_distributions,
    phase_schedule,
    single_phase_state,
)
from bcomd.schemas import ManualParams


def test_phase_lengths():
    assert phase_schedule(10).lengths == [1, 2, 4, 3]
    assert phase_schedule(1).lengths == [1]
    assert phase_schedule(1).expert_counts == [1]
    plan = phase_schedule(15)
    assert plan.lengths == [1, 2, 4, 8]
    assert plan.expert_counts == [1, 1, 2, 3]
    assert [p.start for p in plan.phases] == [0, 1, 3, 7]


def test_expert_count():
    assert [expert_count(L) for L in (1, 2, 3, 4, 5, 8, 9)] == [1, 1, 2, 2, 3, 3, 4]


def test_expert_grid_example():
    grid = expert_grid(8, 2, 1.0)
    assert [e.c for e in grid] == [2.0, 4.0, 8.0]
    for e in grid:
        assert e.mu == pytest.approx(1 / (324 * math.sqrt(8)))
        assert e.eta == pytest.approx(e.c / (324 * math.sqrt(8)))
        assert e.gamma == pytest.approx(min(1 / 2, 1 / 8))
    assert [e.c for e in expert_grid(1, 2, 1.0)] == [1.0]


def test_expert_grid_cap_and_stabilizer_options():
    capped = expert_grid(8, 2, 1.0, cap=True)
    assert max(e.c for e in capped) == pytest.approx(math.sqrt(8))
    assert all(e.omega == 0.0 for e in expert_grid(8, 2, 1.0, stabilizer=False))
    with pytest.raises(InvalidInputError):
        expert_grid(0, 2, 1.0)


def test_meta_parameters():
    phase = phase_schedule(15).phases[-1]
    assert phase.eta_meta == pytest.approx(1 / math.sqrt(8))
    assert phase.gamma_meta == pytest.approx(min(1 / 3, 1 / 8 ** (1 / 3)))


def test_expert_loss_estimate_examples():
    assert expert_loss_estimate(0.5, 0.25, 0.8) == pytest.approx(1.6)
    assert expert_loss_estimate(0.3, 0.3, 0.7) == pytest.approx(0.7)
    assert expert_loss_estimate(0.3, 0.6, 0.0) == 0.0
    with pytest.raises(NumericalError):
        expert_loss_estimate(0.3, 0.0, 0.5)


def test_meta_update_favours_the_cheaper_expert():
    weights = np.array([0.5, 0.5])
    history = [weights[0]]
    for _ in range(50):
        weights = meta_update(weights, np.array([0.0, 0.5]), 0.1, 0.01)
        history.append(weights[0])
    assert np.all(np.diff(history) > 0)
    assert weights[1] >= 0.01


def test_mixture_is_weighted_sum():
    xs = [np.array([0.2, 0.8]), np.array([0.6, 0.4]), np.array([0.5, 0.5])]
    w = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(mix_distributions(w, xs), 0.2 * xs[0] + 0.3 * xs[1] + 0.5 * xs[2])


def test_single_expert_collapses_to_bcomd():
    trace = stationary_trace((0.3, 0.6, 0.9), (0.2, -0.4, 0.1), 200)
    params = compute_parameters(3, trace.T, 1.0, mode="manual",
                                manual=ManualParams(eta=0.05, mu=0.02, gamma=0.01, omega=0.5))
    state = initial_state(params, seed=7)
    expert = BcomdExpert(BcomdState(x=np.full(3, 1 / 3), lam=0.0, t=0, params=params, rng=make_generator(0)))
    meta = single_phase_state([expert], trace.T, seed=7)

    for t in range(trace.T):
        state, record = bcomd_step(state, trace.oracle(t))
        meta, meta_record = meta_step(meta, trace.oracle(t))
        assert record.action == meta_record.action
        np.testing.assert_array_equal(record.x_next, meta_record.x_next)
        assert record.lam == meta_record.lam


def test_identical_experts_keep_uniform_weights():
    trace = stationary_trace((0.1, 0.5, 0.9), (0.3, -0.3, 0.0), 150)
    spec = ExpertSpec(c=2.0, eta=0.05, mu=0.01, gamma=0.01, omega=0.2)
    rng = make_generator(3)
    experts = [BcomdExpert.from_spec(spec, 3, trace.T, 1.0, rng) for _ in range(2)]
    meta = single_phase_state(experts, trace.T, rng=rng)
    for t in range(trace.T):
        meta, _ = meta_step(meta, trace.oracle(t))
        np.testing.assert_allclose(meta.weights, [0.5, 0.5], atol=1e-9)


def test_mixture_floor_keeps_estimates_defined():
    losses = np.random.default_rng(0).random((64, 3))
    trace = make_trace(losses, np.full((64, 3), -0.2))
    policy = MbcomdPolicy(3, trace.T, rho=0.2, seed=1)
    for t in range(trace.T):
        record = policy.step(trace.oracle(t))
        assert record.probs.min() > 0
        assert record.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_phase_rollover_resets_experts_and_weights():
    trace = stationary_trace((0.2, 0.8), (-0.5, 0.5), 10)
    policy = MbcomdPolicy(2, trace.T, seed=0)
    phases = []
    for t in range(trace.T):
        record = policy.step(trace.oracle(t))
        phases.append(record.phase)
        state = policy.state
        if t + 1 in (1, 3, 7):
            assert state.phase_round == 0
            np.testing.assert_array_equal(state.weights, np.full(state.phase.K, 1.0 / state.phase.K))
            assert all(e.lam == 0.0 for e in state.experts)
            assert all(np.array_equal(e.distribution, [0.5, 0.5]) for e in state.experts)
    assert phases == [1, 2, 2, 3, 3, 3, 3, 4, 4, 4]


def test_meta_step_past_phase_end_is_an_error():
    meta = single_phase_state([FixedExpert([0.5, 0.5])], 1)
    meta, _ = meta_step(meta, lambda a: (0.5, 0.0))
    with pytest.raises(AssertionError):
        meta_step(meta, lambda a: (0.5, 0.0))


def test_mbcomd_is_deterministic(stationary):
    runs = []
    for _ in range(2):
        policy = MbcomdPolicy(2, stationary.T, seed=4)
        runs.append([policy.step(stationary.oracle(t)).action for t in range(stationary.T)])
    assert runs[0] == runs[1]
