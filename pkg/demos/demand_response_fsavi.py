"""Frozen-state AVI with sparse RBF features on the demand-response market.

Builds the features, reports their size and projection expansion factor,
runs a short FSAVI solve and evaluates the policy by rollouts.
"""

from fastslow.avi import SimConfig, fsavi
from fastslow.envs import make_demand_response_env
from fastslow.features import build_features
from fastslow.simulate import evaluate_policy

T, K = 10, 5


def main():
    mdp = make_demand_response_env()
    fm = build_features(mdp, "rbf", fraction=0.3, width=0.02)
    print(f"states={mdp.n_states} anchors={fm.n_features} nnz(phi)={fm.phi.nnz} kappa~{fm.kappa:.2f}")
    pol, _, trace = fsavi(mdp, fm, T, K, SimConfig(paths=25), seed=0)
    print("successive weight changes:", [round(d, 1) for d in trace.values["phi_deltas"]])
    ret = evaluate_policy(mdp, pol, horizon=10 * T, n_seeds=3, seed=0, n_episodes=50)
    print(f"cost={trace.cost:,d} mean return={ret.mean():.2f}")


if __name__ == "__main__":
    main()
