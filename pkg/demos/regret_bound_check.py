"""Measured regret of frozen-state VI against its closed-form bound.

Estimates the Lipschitz constants and jump sizes of small random fast-slow
MDPs, evaluates the bound and compares it with the exact regret.
"""

import numpy as np

from fastslow.analysis import estimate_lipschitz, jump_sizes, measured_regret
from fastslow.analysis.bounds import BoundInputs, bound_report
from fastslow.envs import make_random_fastslow
from fastslow.solvers import fsvi


def main():
    print(f"{'seed':>4}{'T':>3}{'L_r':>8}{'L_f':>8}{'L_U':>8}{'regret':>12}{'bound':>12}")
    for seed in range(5):
        mdp = make_random_fastslow(seed, n_slow=3, n_fast=3, alpha=0.1)
        est = estimate_lipschitz(mdp)
        d_Y, alpha = jump_sizes(mdp)
        for T in (2, 3):
            pol, _, _ = fsvi(mdp, T, 60)
            inp = BoundInputs(mdp.gamma, T, alpha, d_Y, 60, est.L_r, est.L_f, est.L_U, float(np.abs(mdp.reward).max()))
            rep = bound_report(inp, "fsvi")
            print(
                f"{seed:>4}{T:>3}{est.L_r:>8.2f}{est.L_f:>8.2f}{est.L_U:>8.2f}"
                f"{measured_regret(mdp, pol):>12.2e}{rep['total']:>12.2e}"
            )


if __name__ == "__main__":
    main()
