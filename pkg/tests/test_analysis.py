import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_kernel, tiny_mdp
from fastslow.analysis import (
    BoundDomainError,
    BoundInputs,
    NonConvergedReference,
    bound_report,
    check_hierarchical_equivalence,
    estimate_lipschitz,
    jump_sizes,
    lookahead_distance,
    lower_nominal_gap_bound,
    measured_regret,
    optimal_value,
    periodic_value,
    policy_value,
    regret_bound_fsavi,
    regret_bound_fsvi,
    regret_bound_nominal,
    reward_gap_bound,
    vi_regret_bound,
    vi_value_error,
)
from fastslow.analysis.bounds import avi_reward_gap, lipschitz_value_bound, nominal_reward_gap
from fastslow.analysis.lipschitz import reward_lipschitz, transition_lipschitz, value_lipschitz, wasserstein1
from fastslow.envs import make_chain, make_random_fastslow, make_random_mdp
from fastslow.policies import StationaryPolicy, TPeriodicPolicy
from fastslow.simulate import rollout_returns
from fastslow.solvers import fsvi

# ---------------------------------------------------------------------------
# independent evaluator: literal nested sums in exact rational arithmetic
# ---------------------------------------------------------------------------


def Q(v) -> Fraction:
    return Fraction(v).limit_denominator(10**12) if not isinstance(v, Fraction) else v


def ref_reward_gap(g, a, dY, Lr, Lf, LU, T) -> Fraction:
    g, a, dY, Lr, Lf, LU = map(Q, (g, a, dY, Lr, Lf, LU))
    first = Fraction(0)
    for i in range(1, T - 1):
        inner = Fraction(0)
        for j in range(0, i):
            inner += Lf**j
        first += g**i * inner
    first *= a * dY * Lr
    lf_sum = Fraction(0)
    for j in range(0, T - 1):
        lf_sum += Lf**j
    second = g ** (T - 1) * LU * (a * dY * lf_sum + g * dY * (a + 2) * (T - 1))
    return first + second


def ref_nominal_gap(g, a, dY, Lr, Lf, LU, T, zeta, dist) -> Fraction:
    out = ref_reward_gap(g, a, dY, Lr, Lf, LU, T)
    g, Lr, Lf, zeta, dist = map(Q, (g, Lr, Lf, zeta, dist))
    for i in range(1, T):
        out += g**i * zeta
    for i in range(1, T - 1):
        for j in range(i + 1, T):
            out += Lf**i * g**j * Lr * dist
    return out


def ref_fsvi_bound(g, a, dY, Lr, Lf, LU, T, k, r_max, eps) -> float:
    g, a, dY, LU, r_max = map(Q, (g, a, dY, LU, r_max))
    gT = g**T
    d = 2 * dY * (a + 1) * (T - 1)
    out = (2 * gT / (1 - gT) ** 2 + 2 / (1 - gT)) * eps
    out += (2 * gT**2 / (1 - gT) ** 2 + 2 * gT / (1 - gT)) * LU * d
    out += 2 * r_max * g ** ((k + 1) * T) / ((1 - g) * (1 - gT))
    return float(out)


bound_args = st.fixed_dictionaries(
    {
        "gamma": st.floats(0.05, 0.95),
        "alpha": st.floats(0.0, 0.5),
        "d_Y": st.floats(0.0, 3.0),
        "L_r": st.floats(0.0, 3.0),
        "L_f": st.floats(0.0, 3.0),
        "L_U": st.floats(0.0, 5.0),
        "T": st.integers(1, 7),
        "k": st.integers(0, 30),
        "r_max": st.floats(0.0, 2.0),
    }
)


# ---------------------------------------------------------------------------
# bound calculators
# ---------------------------------------------------------------------------


def test_reward_gap_vanishes_at_unit_period():
    assert reward_gap_bound(BoundInputs(0.9, 1, alpha=0.3, d_Y=2, L_r=1, L_f=2, L_U=3)) == 0.0


@pytest.mark.parametrize("gamma, L_U, d_Y", [(0.9, 1.0, 1.0), (0.5, 3.0, 2.0), (0.99, 0.2, 0.7)])
def test_reward_gap_without_slow_motion_at_period_two(gamma, L_U, d_Y):
    inp = BoundInputs(gamma, 2, alpha=0.0, d_Y=d_Y, L_r=5.0, L_f=7.0, L_U=L_U)
    assert reward_gap_bound(inp) == pytest.approx(2 * gamma**2 * L_U * d_Y, rel=1e-14)


def test_reward_gap_nested_sum_example():
    inp = BoundInputs(0.9, 3, alpha=0.1, d_Y=1.0, L_r=1.0, L_f=1.0, L_U=1.0)
    ref = ref_reward_gap(Fraction(9, 10), Fraction(1, 10), 1, 1, 1, 1, 3)
    assert ref == Fraction(9, 100) + Fraction(81, 100) * (Fraction(2, 10) + Fraction(9, 10) * Fraction(21, 10) * 2)
    assert reward_gap_bound(inp) == pytest.approx(float(ref), rel=1e-14)


@given(bound_args)
@settings(max_examples=100, deadline=None)
def test_reward_gap_matches_independent_evaluator(p):
    inp = BoundInputs(p["gamma"], p["T"], p["alpha"], p["d_Y"], L_r=p["L_r"], L_f=p["L_f"], L_U=p["L_U"])
    ref = ref_reward_gap(p["gamma"], p["alpha"], p["d_Y"], p["L_r"], p["L_f"], p["L_U"], p["T"])
    assert reward_gap_bound(inp) == pytest.approx(float(ref), rel=1e-9, abs=1e-12)


def test_lookahead_distance_formula():
    assert lookahead_distance(BoundInputs(0.5, 4, alpha=0.5, d_Y=2.0)) == 2 * 2.0 * 1.5 * 3


def test_fsvi_bound_vanishes_at_unit_period_in_the_limit():
    inp = BoundInputs(0.9, 1, alpha=0.1, d_Y=1, L_r=1, L_f=1, L_U=1, r_max=1, k=math.inf)
    assert regret_bound_fsvi(inp) == 0.0


def test_fsvi_bound_iteration_term_alone():
    inp = BoundInputs(0.5, 2, k=1, r_max=1.0)
    assert regret_bound_fsvi(inp) == pytest.approx(2 * 0.5**4 / (0.5 * 0.75), rel=1e-14)
    assert regret_bound_fsvi(inp) == pytest.approx(1 / 3, rel=1e-14)


@given(bound_args)
@settings(max_examples=100, deadline=None)
def test_fsvi_bound_matches_independent_evaluator(p):
    inp = BoundInputs(p["gamma"], p["T"], p["alpha"], p["d_Y"], p["k"], p["L_r"], p["L_f"], p["L_U"], p["r_max"])
    eps = ref_reward_gap(p["gamma"], p["alpha"], p["d_Y"], p["L_r"], p["L_f"], p["L_U"], p["T"])
    ref = ref_fsvi_bound(p["gamma"], p["alpha"], p["d_Y"], p["L_r"], p["L_f"], p["L_U"], p["T"], p["k"], p["r_max"], eps)
    assert regret_bound_fsvi(inp) == pytest.approx(ref, rel=1e-9, abs=1e-12)


@given(bound_args, st.integers(0, 50))
@settings(max_examples=50, deadline=None)
def test_fsvi_bound_shrinks_with_iterations(p, extra):
    inp = BoundInputs(p["gamma"], p["T"], p["alpha"], p["d_Y"], p["k"], p["L_r"], p["L_f"], p["L_U"], p["r_max"])
    more = inp.with_(k=p["k"] + extra)
    assert regret_bound_fsvi(more) <= regret_bound_fsvi(inp)
    assert regret_bound_fsvi(inp.with_(k=math.inf)) <= regret_bound_fsvi(more)


@given(bound_args, st.sampled_from(["L_r", "L_f", "L_U", "d_Y", "alpha"]), st.floats(0.0, 2.0))
@settings(max_examples=80, deadline=None)
def test_fsvi_bound_grows_with_each_constant(p, name, bump):
    inp = BoundInputs(p["gamma"], p["T"], p["alpha"], p["d_Y"], p["k"], p["L_r"], p["L_f"], p["L_U"], p["r_max"])
    bigger = inp.with_(**{name: getattr(inp, name) + bump})
    assert regret_bound_fsvi(bigger) >= regret_bound_fsvi(inp) * (1 - 1e-12)


def test_nominal_bound_reduces_to_fsvi_when_exact():
    inp = BoundInputs(0.8, 4, alpha=0.1, d_Y=1, k=10, L_r=1, L_f=1.5, L_U=2, r_max=1, zeta=0.0, max_nominal_dist=0.0)
    assert regret_bound_nominal(inp) == regret_bound_fsvi(inp)


@pytest.mark.parametrize("zeta", [0.1, 0.7])
def test_nominal_gap_at_period_two_adds_one_zeta_term(zeta):
    inp = BoundInputs(0.9, 2, alpha=0.1, d_Y=1, L_r=1, L_f=2, L_U=1, zeta=zeta, max_nominal_dist=3.0)
    assert nominal_reward_gap(inp) - reward_gap_bound(inp) == pytest.approx(0.9 * zeta, rel=1e-12)


@given(bound_args, st.floats(0.0, 1.0), st.floats(0.0, 3.0))
@settings(max_examples=100, deadline=None)
def test_nominal_bound_matches_independent_evaluator(p, zeta, dist):
    inp = BoundInputs(
        p["gamma"], p["T"], p["alpha"], p["d_Y"], p["k"], p["L_r"], p["L_f"], p["L_U"], p["r_max"], zeta, dist
    )
    eps = ref_nominal_gap(p["gamma"], p["alpha"], p["d_Y"], p["L_r"], p["L_f"], p["L_U"], p["T"], zeta, dist)
    assert nominal_reward_gap(inp) == pytest.approx(float(eps), rel=1e-9, abs=1e-12)
    ref = ref_fsvi_bound(p["gamma"], p["alpha"], p["d_Y"], p["L_r"], p["L_f"], p["L_U"], p["T"], p["k"], p["r_max"], eps)
    assert regret_bound_nominal(inp) == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_fsavi_bound_with_exact_architecture_is_limit_fsvi_bound():
    inp = BoundInputs(0.9, 3, alpha=0.1, d_Y=1, k=math.inf, L_r=1, L_f=1, L_U=1, r_max=1, kappa=1.0)
    assert regret_bound_fsavi(inp) == pytest.approx(regret_bound_fsvi(inp), rel=1e-14)


def test_fsavi_iteration_tail_plug_in():
    inp = BoundInputs(0.5, 1, k=0, r_max=1.0, kappa=1.0)
    assert regret_bound_fsavi(inp) == pytest.approx((1 - 0.25) / (0.5 * 0.5), rel=1e-14)
    assert regret_bound_fsavi(inp) == pytest.approx(3.0, rel=1e-14)


@given(st.floats(0.05, 0.9), st.floats(1.0, 1.05), st.integers(1, 6), st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=60, deadline=None)
def test_fsavi_architecture_terms_match_formula(g, kap, T, eps_low, eps_up):
    if kap * g >= 1:
        return
    inp = BoundInputs(g, T, kappa=kap, eps_low=eps_low, eps_up=eps_up)
    coef = (1 + kap) / (1 - kap * g) - (kap * g) ** T * (1 + g) / (g - kap * g**2)
    assert avi_reward_gap(inp) == pytest.approx(coef * eps_low, rel=1e-9, abs=1e-12)
    gT = g**T
    expected = (2 * gT / (1 - gT) ** 2 + 2 / (1 - gT)) * coef * eps_low + (1 + kap) / (1 - kap * gT) * eps_up
    assert regret_bound_fsavi(inp) == pytest.approx(expected, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("kappa, gamma", [(2.0, 0.6), (1.2, 0.9)])
def test_fsavi_bound_rejects_expanding_architecture(kappa, gamma):
    with pytest.raises(BoundDomainError):
        regret_bound_fsavi(BoundInputs(gamma, 2, kappa=kappa))


@pytest.mark.parametrize(
    "kwargs",
    [{"gamma": 1.0, "T": 2}, {"gamma": -0.1, "T": 2}, {"gamma": 0.5, "T": 0}, {"gamma": 0.5, "T": 2, "k": -1},
     {"gamma": 0.5, "T": 2, "L_f": -1.0}, {"gamma": 0.5, "T": 2, "zeta": -0.1}],
)  # fmt: skip
def test_bound_inputs_domain_is_enforced(kwargs):
    with pytest.raises(BoundDomainError):
        BoundInputs(**kwargs)


def test_bound_report_itemizes_terms():
    inp = BoundInputs.from_dict({"gamma": 0.9, "T": 3, "alpha": 0.1, "d_Y": 1, "L_r": 1, "L_f": 1, "L_U": 1, "r_max": 1, "k": "inf"})
    for which in ("fsvi", "nominal", "fsavi"):
        rep = bound_report(inp, which)
        assert rep["inputs"]["k"] is None
        parts = [v for key, v in rep["terms"].items() if key in ("reward_block", "horizon_block", "vi_tail", "upper_architecture")]
        assert rep["total"] == pytest.approx(sum(parts), rel=1e-12)
    with pytest.raises(ValueError):
        bound_report(inp, "magic")


def test_vi_bounds_formulas():
    assert vi_value_error(0.9, 5, 2.0) == pytest.approx(0.9**5 * 2 / 0.1)
    assert vi_regret_bound(0.9, 5, 2.0) == pytest.approx(2 * 2 * 0.9**6 / 0.01)


def test_lower_nominal_gap_bound_at_last_step_is_zeta_plus_distance():
    inp = BoundInputs(0.9, 4, L_r=2.0, L_f=1.5, zeta=0.1, max_nominal_dist=1.0)
    # h = T - t - 1 = 0: only the immediate-reward terms remain
    assert lower_nominal_gap_bound(inp, 3, dist_x=0.5, dist_y=0.25) == pytest.approx(0.1 + 2 * 0.5 + 2 * 0.25)


# ---------------------------------------------------------------------------
# Lipschitz estimation
# ---------------------------------------------------------------------------


def test_constant_reward_has_zero_reward_constant():
    mdp = make_random_fastslow(0)
    flat = tiny_mdp(np.full_like(mdp.reward, 0.3), dense_kernel(mdp), 0.9, n_slow=mdp.n_slow)
    assert reward_lipschitz(flat)[0] == 0.0


def test_value_bound_formula():
    assert lipschitz_value_bound(2.0, 1.0, 0.5) == pytest.approx(4.0)
    with pytest.raises(BoundDomainError):
        lipschitz_value_bound(2.0, 2.5, 0.5)


def test_reward_constant_exhaustive_oracle():
    mdp = make_random_fastslow(3, n_slow=2, n_fast=3)
    S = np.repeat(mdp.state_coords, mdp.n_actions, axis=0)
    A = np.tile(np.asarray(mdp.actions, float).reshape(mdp.n_actions, -1), (mdp.n_states, 1))
    Z = np.hstack([S, A])
    r = mdp.reward.ravel()
    best = 0.0
    for i in range(len(r)):
        for j in range(i + 1, len(r)):
            d = np.linalg.norm(Z[i] - Z[j])
            if d > 0:
                best = max(best, abs(r[i] - r[j]) / d)
    assert reward_lipschitz(mdp, max_pairs=None)[0] == pytest.approx(best, rel=1e-12)


def test_wasserstein_of_point_masses_is_their_distance():
    coords = np.array([[0.0, 0.0], [3.0, 4.0]])
    w, _ = wasserstein1(np.array([0]), np.array([1.0]), np.array([1]), np.array([1.0]), coords)
    assert w == pytest.approx(5.0)


def test_smooth_mdp_value_constant_is_below_formula():
    # slowly varying rewards on a line with shift-invariant dynamics keep gamma L_f < 1
    n = 8
    R = np.linspace(0, 0.7, n)[:, None] * np.ones((1, 2))
    P = np.zeros((n, 2, n))
    for s in range(n):
        P[s, 0, s] = 1.0
        P[s, 1, min(s + 1, n - 1)] = 1.0
    mdp = tiny_mdp(R, P, 0.5)
    est = estimate_lipschitz(mdp, mode="auto")
    assert mdp.gamma * est.L_f < 1
    assert est.method == "prop5_bound"
    V, _, _ = optimal_value(mdp)
    assert value_lipschitz(mdp, V) <= est.L_U + 1e-12


def test_formula_mode_fails_when_transitions_expand():
    mdp = make_random_fastslow(1)
    L_f = transition_lipschitz(mdp)[0]
    assert mdp.gamma * L_f >= 1
    with pytest.raises(BoundDomainError):
        estimate_lipschitz(mdp, mode="prop5_bound")
    est = estimate_lipschitz(mdp)
    assert est.method == "empirical" and est.L_U > 0


def test_jump_sizes_on_static_slow_state():
    dy, a = jump_sizes(make_random_fastslow(2, alpha=0.0, d_Y=1.0))
    assert dy == 1.0 and a == 0.0


# ---------------------------------------------------------------------------
# regret and hierarchical equivalence
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_optimal_policy_has_zero_regret(seed):
    mdp = make_random_mdp(seed, n_states=10, n_actions=3)
    V, nu, res = optimal_value(mdp)
    assert res < 1e-10
    assert abs(measured_regret(mdp, nu)) < 1e-9


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_random_policy_regret_is_nonnegative(seed):
    mdp = make_random_fastslow(seed % 50)
    rng = np.random.default_rng(seed)
    pol = StationaryPolicy(rng.integers(0, mdp.n_actions, size=mdp.n_states))
    assert measured_regret(mdp, pol) >= -1e-10


def test_non_converged_reference_is_rejected():
    mdp = make_random_mdp(0)
    with pytest.raises(NonConvergedReference):
        measured_regret(mdp, StationaryPolicy(np.zeros(mdp.n_states, int)), reference=np.zeros(mdp.n_states))


def test_fsvi_regret_matches_simulated_gap():
    mdp = make_random_fastslow(8, n_slow=3, n_fast=3)
    pol, _, _ = fsvi(mdp, 3, 200)
    V_star, nu, _ = optimal_value(mdp)
    gaps = V_star - policy_value(mdp, pol)
    s0 = int(np.argmax(gaps))
    start = np.full(20_000, s0)
    a = rollout_returns(mdp, nu, 300, 1, seed=1, n_episodes=len(start), start_states=start)[0]
    b = rollout_returns(mdp, pol, 300, 1, seed=2, n_episodes=len(start), start_states=start)[0]
    se = np.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
    assert abs((a.mean() - b.mean()) - measured_regret(mdp, pol)) < 3 * se


def block_value_oracle(mdp, policy: TPeriodicPolicy) -> np.ndarray:
    """Dense T-block recursion U = R_T + gamma^T P_T U for a T-periodic policy."""
    P, R = dense_kernel(mdp), mdp.reward
    n, T, g = mdp.n_states, policy.T, mdp.gamma
    idx = np.arange(n)
    maps = [policy.mu] + [policy.pi[t] for t in range(1, T)]
    R_T = np.zeros(n)
    M = np.eye(n)
    for t in range(T):
        a = np.asarray(maps[t])
        R_T += g**t * M @ R[idx, a]
        M = M @ P[idx, a]
    return np.linalg.solve(np.eye(n) - g**T * M, R_T)


@pytest.mark.parametrize("T", [1, 2, 3, 5])
def test_periodic_value_matches_block_oracle(T):
    mdp = make_random_fastslow(4)
    pol, _, _ = fsvi(mdp, T, 30)
    assert np.max(np.abs(periodic_value(mdp, pol) - block_value_oracle(mdp, pol))) < 1e-10


def test_equivalence_with_unit_period():
    assert check_hierarchical_equivalence(make_random_mdp(3, n_states=8), 1) < 1e-10


def test_equivalence_on_two_state_mdp():
    R = [[1.0, 0.0], [0.0, 2.0]]
    P = np.array([[[0.2, 0.8], [0.9, 0.1]], [[0.5, 0.5], [0.3, 0.7]]])
    assert check_hierarchical_equivalence(tiny_mdp(R, P, 0.9), 4) < 1e-8


@pytest.mark.parametrize("T", [2, 3, 5])
def test_equivalence_on_random_fastslow(T):
    mdp = make_random_fastslow(5, n_slow=3, n_fast=3, n_actions=2)
    assert check_hierarchical_equivalence(mdp, T) < 1e-8


def test_chain_regret_of_wrong_action():
    # two actions at state 0: stay for reward 1, or leave to an absorbing zero state
    R = [[1.0, 0.0], [0.0, 0.0]]
    P = np.array([[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [0.0, 1.0]]])
    mdp = tiny_mdp(R, P, 0.9)
    assert measured_regret(mdp, StationaryPolicy([1, 0])) == pytest.approx(10.0, abs=1e-10)
    assert measured_regret(make_chain([1.0], [0]), StationaryPolicy([0])) == pytest.approx(0.0, abs=1e-12)
