"""Energy aggregator selling demand reduction against a day-ahead price.

Slow state: day-ahead price x on a 0.1 grid over [10, 30], a discretized
Ornstein-Uhlenbeck process.  Fast state: real-time adjustment factors
(y_minus, y_plus), redrawn uniformly every period.  Action: committed amount
and one compensation fraction per customer.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
from scipy.stats import norm

from ..mdp import FastSlowMdp, ProductKernel, build_mdp
from .queue import EnvParamError


@dataclass(frozen=True)
class DemandResponseParams:
    reversion: float = 0.2237
    long_run_mean: float = 21.4095
    price_low: float = 10.0
    price_high: float = 30.0
    price_step: float = 0.1
    price_noise: float = 1.0
    y_minus: tuple = (0.5, 0.8)
    y_plus: tuple = (1.05, 1.25)
    n_adjust: int = 10
    bids: tuple = (10, 12, 14, 16, 18, 20)
    fractions: tuple = (0.1, 0.275, 0.45, 0.625, 0.8)
    demand_base: tuple = (1.72, 5.87)
    demand_slope: tuple = (0.55, 0.26)
    demand_noise: float = 0.5
    noise_points: int = 21
    gamma: float = 0.95

    def validate(self) -> None:
        if not self.price_low < self.price_high or self.price_step <= 0:
            raise EnvParamError("price grid must be increasing with a positive step")
        if self.price_noise <= 0 or self.demand_noise < 0:
            raise EnvParamError("noise scales must be positive")
        if len(self.demand_base) != len(self.demand_slope):
            raise EnvParamError("one demand intercept and slope per customer")
        if self.noise_points < 1 or self.n_adjust < 1:
            raise EnvParamError("discretizations need at least one point")

    @classmethod
    def from_dict(cls, d: dict) -> "DemandResponseParams":
        d = dict(d)
        for key, v in d.items():
            if isinstance(v, list):
                d[key] = tuple(v)
        return cls(**d)


def price_grid(p: DemandResponseParams) -> np.ndarray:
    n = int(round((p.price_high - p.price_low) / p.price_step)) + 1
    return np.round(p.price_low + p.price_step * np.arange(n), 10)


def price_kernel(p: DemandResponseParams) -> np.ndarray:
    """Each grid cell gets the normal mass of its width; tails fold onto the ends."""
    grid = price_grid(p)
    mean = grid + p.reversion * (p.long_run_mean - grid)
    edges = np.concatenate([[-np.inf], (grid[:-1] + grid[1:]) / 2, [np.inf]])
    cdf = norm.cdf((edges[None, :] - mean[:, None]) / p.price_noise)
    return np.diff(cdf, axis=1)


def noise_support(p: DemandResponseParams) -> np.ndarray:
    """Equal-mass quantile points of the demand noise (bin midpoints in probability)."""
    n = p.noise_points
    return norm.ppf((np.arange(n) + 0.5) / n) * p.demand_noise


def expected_reward(p: DemandResponseParams, x, y_minus, y_plus, bid, alpha) -> np.ndarray:
    """Reward expectation by exact summation over the discretized demand noise.

    ``x``, ``y_minus``, ``y_plus`` and ``bid`` broadcast against each other;
    ``alpha`` carries the customer axis last.
    """
    x = np.asarray(x, float)
    alpha = np.asarray(alpha, float)
    b1, b2 = np.asarray(p.demand_base), np.asarray(p.demand_slope)
    mean_d = b1 + b2 * alpha * x[..., None]
    eps = noise_support(p)
    total_noise = eps
    for _ in range(len(b1) - 1):
        total_noise = (total_noise[:, None] + eps[None, :]).ravel()
    D = mean_d.sum(axis=-1)[..., None] + total_noise
    bid = np.asarray(bid, float)[..., None]
    over = np.maximum(D - bid, 0).mean(axis=-1)
    under = np.maximum(bid - D, 0).mean(axis=-1)
    pay = (alpha * x[..., None] * mean_d).sum(axis=-1)
    return x * bid[..., 0] - pay + x * np.asarray(y_plus) * over - x * np.asarray(y_minus) * under


def make_demand_response_env(p: DemandResponseParams | None = None) -> FastSlowMdp:
    p = DemandResponseParams() if p is None else p
    p.validate()
    grid = price_grid(p)
    ym = np.linspace(*p.y_minus, p.n_adjust)
    yp = np.linspace(*p.y_plus, p.n_adjust)
    fast = np.array(list(itertools.product(ym, yp)))
    m = len(p.demand_base)
    acts = np.array([(b, *al) for b in p.bids for al in itertools.product(p.fractions, repeat=m)])
    nX, nY, nA = len(grid), len(fast), len(acts)

    # over/under expectations do not involve y: compute per (x, a), then combine
    bid, alpha = acts[:, 0], acts[:, 1:]
    base = expected_reward(p, grid[:, None], 0.0, 0.0, bid[None, :], alpha[None, :, :])
    over = expected_reward(p, grid[:, None], 0.0, 1.0, bid[None, :], alpha[None, :, :]) - base
    under = base - expected_reward(p, grid[:, None], 1.0, 0.0, bid[None, :], alpha[None, :, :])
    reward = (
        base[:, None, :]
        + fast[None, :, 1, None] * over[:, None, :]
        - fast[None, :, 0, None] * under[:, None, :]
    )

    slow_k = sp.csr_matrix(price_kernel(p))
    fast_k = sp.csr_matrix(np.full((1, nY), 1.0 / nY))
    s = np.arange(nX * nY)
    slow_index = np.repeat((s // nY)[:, None], nA, axis=1)
    fast_index = np.zeros((nX * nY, nA), dtype=np.int64)
    kernel = ProductKernel(slow_k, slow_index, fast_k, fast_index, nX, nY, nA)
    meta = {"env": "demand_response", "params": asdict(p), "nominal_per_dim": 5,
            "coord_names": ["price", "y_minus", "y_plus"], "action_names": ["bid", "alpha1", "alpha2"]}
    return build_mdp(grid, fast, acts, reward, kernel, p.gamma, meta)


def demand_response_decomposition(mdp: FastSlowMdp):
    """Multiplicative split with slow factor g(x) = x."""
    from ..nominal import ratio_multiplicative

    return ratio_multiplicative(mdp, mdp.slow_states[:, 0])
