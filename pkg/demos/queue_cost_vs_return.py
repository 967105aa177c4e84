"""Exact VI, frozen-state VI and slow-agnostic VI on the two-class queue.

Prints the metered cost of each solve and the Monte Carlo return of the
resulting policy, then the exact regret of each against the optimum.
"""

import numpy as np

from fastslow.analysis import measured_regret, optimal_value
from fastslow.envs import make_queue_env
from fastslow.simulate import evaluate_policy
from fastslow.solvers import exact_vi, fsvi, slow_agnostic_vi

T = 10


def main():
    mdp = make_queue_env()
    print(f"queue: |X|={mdp.n_slow} |Y|={mdp.n_fast} |A|={mdp.n_actions} gamma={mdp.gamma}")
    V_star = optimal_value(mdp)[0]
    runs = {
        "base_vi k=60": exact_vi(mdp, 60)[1:],
        "fsvi T=10 k=15": fsvi(mdp, T, 15)[::2],
        "slow_agnostic_vi k=100": slow_agnostic_vi(mdp, 100),
    }
    print(f"{'method':<24}{'cost':>14}{'return':>10}{'regret':>10}")
    for name, (pol, trace) in runs.items():
        ret = evaluate_policy(mdp, pol, horizon=10 * T, n_seeds=5, seed=0).mean()
        reg = measured_regret(mdp, pol, reference=V_star)
        print(f"{name:<24}{trace.cost:>14,d}{ret:>10.3f}{reg:>10.3f}")


if __name__ == "__main__":
    np.set_printoptions(precision=4)
    main()
