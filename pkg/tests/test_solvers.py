import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastslow.analysis import measured_regret, optimal_value, policy_value
from fastslow.envs import fixture_decomposition, make_chain, make_random_fastslow, make_random_mdp
from fastslow.envs.queue import queue_decomposition
from fastslow.nominal import (
    DecompositionError,
    NominalDecomposition,
    build_nominal_lower,
    evenly_spaced_nominal,
    fit_additive,
    nearest_nominal,
    nominal_fsvi,
    ratio_multiplicative,
)
from fastslow.operators import backup_frozen, backup_slow_agnostic
from fastslow.policies import FiniteHorizonPolicy, StationaryPolicy, TPeriodicPolicy
from fastslow.qlearning import QLearningHyper, q_learning
from fastslow.simulate import evaluate_policy
from fastslow.solvers import exact_vi, fsvi, slow_agnostic_vi, solve_lower_frozen

seeds = st.integers(0, 10_000)


# ---------------------------------------------------------------------------
# exact value iteration
# ---------------------------------------------------------------------------


def test_vi_partial_geometric_sum():
    V, _, _ = exact_vi(make_chain([1.0], [0], gamma=0.9), 50)
    assert V[0] == pytest.approx((1 - 0.9**50) / 0.1, abs=1e-12)
    assert V[0] == pytest.approx(9.948, abs=1e-3)


def test_zero_iterations_return_initial_values():
    mdp = make_random_mdp(2)
    V0 = np.random.default_rng(2).normal(size=mdp.n_states)
    V, pol, trace = exact_vi(mdp, 0, V0)
    assert np.array_equal(V, V0)
    assert pol == StationaryPolicy(np.argmax(mdp.reward + mdp.gamma * mdp.expect(V0), axis=1))
    assert trace.cost == 0


def test_vi_error_after_many_sweeps():
    mdp = make_random_mdp(12, n_states=12, n_actions=3)
    V, _, _ = exact_vi(mdp, 200)
    V_star, _, res = optimal_value(mdp)
    assert res < 1e-12
    assert np.max(np.abs(V - V_star)) <= 0.9**200 * mdp.r_max / (1 - 0.9)


def test_negative_iterations_are_rejected():
    with pytest.raises(ValueError):
        exact_vi(make_random_mdp(0), -1)


@pytest.mark.parametrize("solver", ["base", "fsvi", "agnostic"])
def test_trace_is_reproducible_and_monotone(solver):
    mdp = make_random_fastslow(3, n_slow=3, n_fast=5)
    run = {
        "base": lambda: exact_vi(mdp, 6, seed=4, cadence=3)[2],
        "fsvi": lambda: fsvi(mdp, 3, 6, seed=4, cadence=3)[2],
        "agnostic": lambda: slow_agnostic_vi(mdp, 6, seed=4, cadence=2)[1],
    }[solver]
    a, b = run(), run()
    assert a.costs() == b.costs()
    assert [e.units for e in a.events] == [e.units for e in b.events]
    assert [s.policy() for s in a.snapshots] == [s.policy() for s in b.snapshots]
    assert all(x < y for x, y in zip(a.costs(), a.costs()[1:]))
    assert a.recount() == a.cost


def test_mid_sweep_snapshots_interpolate_between_sweeps():
    mdp = make_random_mdp(5, n_states=16)
    _, _, trace = exact_vi(mdp, 2, seed=1, cadence=4)
    assert len(trace.snapshots) == 8  # four prefixes per sweep
    V1 = exact_vi(mdp, 1)[0]
    last_of_first = trace.snapshots[3].policy()
    assert last_of_first == StationaryPolicy(np.argmax(mdp.reward + mdp.gamma * mdp.expect(V1), axis=1))


# ---------------------------------------------------------------------------
# lower level
# ---------------------------------------------------------------------------


def test_unit_period_has_no_lower_steps():
    mdp = make_random_fastslow(1)
    J, pi, trace = solve_lower_frozen(mdp, 1)
    assert len(pi) == 0 and np.all(J[1] == 0) and trace.cost == 0


def test_two_period_lower_is_myopic():
    mdp = make_random_fastslow(1)
    J, pi, _ = solve_lower_frozen(mdp, 2)
    assert np.array_equal(J[1], mdp.reward.max(axis=1))
    assert np.array_equal(pi[1], mdp.reward.argmax(axis=1))


@pytest.mark.parametrize("T", [2, 4, 7])
def test_lower_serial_and_per_slow_state_agree_bitwise(T):
    mdp = make_random_fastslow(9, n_slow=4, n_fast=5)
    a, pa, _ = solve_lower_frozen(mdp, T)
    b, pb, _ = solve_lower_frozen(mdp, T, per_slow_state=True)
    assert a.values.tobytes() == b.values.tobytes()
    assert pa == pb


def _frozen_tree_value(mdp, s, depth):
    """Frozen-state optimal value of ``depth`` remaining steps by explicit tree expansion."""
    if depth == 0:
        return 0.0
    x, nY = s // mdp.n_fast, mdp.n_fast
    return max(
        mdp.reward[s, a]
        + mdp.gamma * sum(p * _frozen_tree_value(mdp, x * nY + y2, depth - 1) for y2, p in mdp.frozen.row(s, a).items())
        for a in range(mdp.n_actions)
    )


def test_queue_lower_value_matches_tree(queue):
    # truncated to three lower steps: J_1 of T=4
    J, _, _ = solve_lower_frozen(queue, 4)
    X = queue.slow_states
    x = int(np.flatnonzero((np.abs(X - 0.2) < 1e-12).all(axis=1))[0])
    y = int(np.flatnonzero((queue.fast_states == [3, 3, 0]).all(axis=1))[0])
    s = queue.state_index(x, y)
    assert J[1][s] == pytest.approx(_frozen_tree_value(queue, s, 3), abs=1e-12)


# ---------------------------------------------------------------------------
# FSVI
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("k", [0, 1, 7])
def test_unit_period_fsvi_is_exact_vi(k):
    mdp = make_random_fastslow(2)
    _, V, _ = fsvi(mdp, 1, k)
    assert np.max(np.abs(V - exact_vi(mdp, k)[0])) <= 1e-12


INERT_SEEDS = range(10)


def test_fsvi_exact_when_slow_state_is_inert():
    misses = []
    for seed in INERT_SEEDS:
        mdp = make_random_fastslow(seed, alpha=0.0, x_free=True)
        V_star = optimal_value(mdp)[0]
        for T in (2, 3, 5):
            _, V, _ = fsvi(mdp, T, 400)
            gap = np.max(np.abs(V - V_star))
            if gap > 1e-9:
                misses.append((seed, T, round(float(gap), 4)))
    assert not misses


def test_zero_terminal_value_is_the_only_source_of_inexactness():
    """On an inert slow state, swapping the lower policy for the optimal one closes the gap."""
    mdp = make_random_fastslow(7, alpha=0.0, x_free=True)
    V_star, nu, _ = optimal_value(mdp)
    T = 3
    _, pi, _ = solve_lower_frozen(mdp, T)
    assert not np.array_equal(pi[T - 1], nu.actions)  # myopic last step differs from the optimum
    periodic = TPeriodicPolicy(nu.actions, FiniteHorizonPolicy([nu.actions] * (T - 1)))
    assert np.max(np.abs(policy_value(mdp, periodic) - V_star)) < 1e-10


def test_fsvi_upper_gaps_shrink_by_period_discount():
    mdp = make_random_fastslow(4, gamma=0.85)
    T = 3
    gaps = []
    prev = None
    for k in range(1, 8):
        V = fsvi(mdp, T, k)[1]
        if prev is not None:
            gaps.append(np.max(np.abs(V - prev)))
        prev = V
    for g0, g1 in zip(gaps, gaps[1:]):
        assert g1 <= mdp.gamma**T * g0 + 1e-12


def test_fsvi_regret_is_small_on_slowly_moving_fixture():
    mdp = make_random_fastslow(0, n_slow=3, n_fast=4, n_actions=2, alpha=0.05)
    pol, _, _ = fsvi(mdp, 3, 60)
    assert -1e-9 <= measured_regret(mdp, pol) <= 1.0


# ---------------------------------------------------------------------------
# nominal FSVI
# ---------------------------------------------------------------------------


def test_single_nominal_state_is_exact_for_factored_x_free_fixture():
    mdp = make_random_fastslow(3, n_slow=4, alpha=0.1, reward_mode="factored", x_free=True)
    dec = fixture_decomposition(mdp)
    for T in (2, 3, 6):
        J_nom, _, _ = build_nominal_lower(mdp, T, [1], dec)
        J, _, _ = solve_lower_frozen(mdp, T)
        assert np.max(np.abs(J_nom.values - J.values)) < 1e-10


def test_two_period_nominal_value_is_corrected_myopic():
    mdp = make_random_fastslow(5, n_slow=3, reward_mode="factored")
    dec = fixture_decomposition(mdp)
    J, _, _ = build_nominal_lower(mdp, 2, [0], dec)
    expected = dec.g[:, None] + dec.h.max(axis=1)[None, :]
    assert np.allclose(J[1].reshape(mdp.n_slow, mdp.n_fast), expected, atol=1e-12)


def test_all_nominal_states_reproduce_fsvi_policy():
    mdp = make_random_fastslow(6, n_slow=3, alpha=0.1, reward_mode="factored", x_free=True)
    dec = fixture_decomposition(mdp)
    a, _, _ = nominal_fsvi(mdp, 3, 40, list(range(mdp.n_slow)), dec)
    b, _, _ = fsvi(mdp, 3, 40)
    assert a == b


def test_decomposition_gap_is_validated():
    mdp = make_random_fastslow(6, reward_mode="factored", zeta=0.2)
    dec = fixture_decomposition(mdp)
    assert dec.validate(mdp) <= 0.2
    tight = NominalDecomposition("additive", dec.g, dec.h, 0.0)
    with pytest.raises(DecompositionError):
        tight.validate(mdp)


def test_fitted_additive_split_is_exact_on_additive_rewards():
    mdp = make_random_fastslow(8, reward_mode="factored")
    dec = fit_additive(mdp)
    assert dec.zeta < 1e-12


def test_multiplicative_correction_is_identity_at_the_nominal_state():
    mdp = make_random_fastslow(8, n_slow=4)
    g = 1.0 + np.arange(mdp.n_slow)
    dec = ratio_multiplicative(mdp, g)
    J, _, _ = build_nominal_lower(mdp, 3, [2], dec)
    J_true, _, _ = solve_lower_frozen(mdp, 3)
    x = 2
    block = slice(x * mdp.n_fast, (x + 1) * mdp.n_fast)
    assert np.allclose(J[1][block], J_true[1][block], atol=1e-12)


def test_nearest_nominal_assignment():
    mdp = make_random_fastslow(1, n_slow=6, alpha=0.1)
    assert nearest_nominal(mdp, [0, 5]).tolist() == [0, 0, 0, 1, 1, 1]


def test_queue_nominal_lower_cost_ratio(queue):
    xs = evenly_spaced_nominal(queue, 3)
    assert len(xs) == 9
    _, _, nom = nominal_fsvi(queue, 10, 0, xs, queue_decomposition(queue))
    _, _, full = fsvi(queue, 10, 0)
    lower = lambda tr: sum(e.units for e in tr.events if e.label.startswith("lower"))  # noqa: E731
    ratio = lower(full) / lower(nom)
    assert lower(nom) < lower(full)
    assert 2.5 <= ratio <= queue.n_slow / 9


def test_bandit_five_nominal_states(bandit):
    from fastslow.envs.bandit import bandit_decomposition

    xs = evenly_spaced_nominal(bandit, 5)
    assert xs == [0, 6, 12, 18, 24]
    pol, _, trace = nominal_fsvi(bandit, 10, 3, xs, bandit_decomposition(bandit))
    assert trace.recount() == trace.cost and trace.snapshots


# ---------------------------------------------------------------------------
# slow-agnostic VI
# ---------------------------------------------------------------------------


def test_single_slow_state_agnostic_equals_frozen_vi():
    mdp = make_random_fastslow(2, n_slow=1)
    pol, trace = slow_agnostic_vi(mdp, 30)
    W = np.zeros(mdp.n_fast)
    for _ in range(30):
        W, a = backup_frozen(W, mdp)
    assert np.allclose(trace.values["W"], W, atol=1e-13)
    assert np.array_equal(pol.actions, a.actions)


def test_agnostic_matches_frozen_when_slow_state_is_irrelevant():
    mdp = make_random_fastslow(4, n_slow=3, alpha=0.1, x_free=True)
    a, _ = slow_agnostic_vi(mdp, 80)
    b, _, _ = fsvi(mdp, 1, 80)
    ra = evaluate_policy(mdp, a, 60, n_seeds=1, seed=3, n_episodes=20_000)[0]
    rb = evaluate_policy(mdp, b, 60, n_seeds=1, seed=3, n_episodes=20_000)[0]
    assert abs(ra - rb) < 0.05


def test_queue_agnostic_fixed_point(queue):
    _, trace = slow_agnostic_vi(queue, 100)
    W = trace.values["W"]
    assert np.max(np.abs(backup_slow_agnostic(W, queue)[0] - W)) < 1e-8


# ---------------------------------------------------------------------------
# Q-learning
# ---------------------------------------------------------------------------


def test_q_learning_self_loop_converges():
    mdp = make_chain([1.0], [0], gamma=0.9)
    _, trace = q_learning(mdp, 10_000, seed=0)
    assert trace.values["Q"][0, 0] == pytest.approx(10.0, abs=0.05)


def test_q_learning_zero_budget_returns_initial_policy():
    mdp = make_random_mdp(3)
    pol, trace = q_learning(mdp, 0)
    assert np.all(pol.actions == 0) and trace.cost == 0


def test_q_learning_charges_actions_per_step():
    mdp = make_random_mdp(3, n_actions=3)
    _, trace = q_learning(mdp, 5_000, QLearningHyper(n_snapshots=5))
    assert trace.cost == 5_000 * 3
    assert len(trace.snapshots) == 5


def test_q_learning_recovers_optimal_policy():
    agree = []
    for seed in range(3):
        mdp = make_random_mdp(seed, n_states=8, n_actions=2)
        pol, _ = q_learning(mdp, 500_000, seed=seed)
        agree.append(np.mean(pol.actions == exact_vi(mdp, 300)[1].actions))
    assert np.mean(agree) >= 0.9


def test_q_learning_is_seed_deterministic():
    mdp = make_random_mdp(4)
    a = q_learning(mdp, 20_000, seed=5)[1].values["Q"]
    b = q_learning(mdp, 20_000, seed=5)[1].values["Q"]
    assert a.tobytes() == b.tobytes()


# ---------------------------------------------------------------------------
# properties
# ---------------------------------------------------------------------------


@settings(max_examples=15, deadline=None)
@given(seeds, st.integers(1, 5))
def test_fsvi_regret_is_nonnegative(seed, T):
    mdp = make_random_fastslow(seed % 100, n_slow=3, n_fast=3)
    pol, _, _ = fsvi(mdp, T, 40)
    assert measured_regret(mdp, pol) >= -1e-9


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_policy_value_never_exceeds_optimum(seed):
    mdp = make_random_mdp(seed % 100, n_states=6, n_actions=3)
    a = np.random.default_rng(seed).integers(3, size=6)
    assert np.all(policy_value(mdp, StationaryPolicy(a)) <= optimal_value(mdp)[0] + 1e-9)
