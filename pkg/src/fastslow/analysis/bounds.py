"""Closed-form regret and approximation-error bounds for the frozen-state family.

Every calculator takes a :class:`BoundInputs` record.  ``bound_report``
itemizes the terms for auditing.  Empty sums are zero throughout.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace


class BoundDomainError(ValueError):
    pass


@dataclass(frozen=True)
class BoundInputs:
    gamma: float
    T: int
    alpha: float = 0.0
    d_Y: float = 0.0
    k: float = math.inf
    L_r: float = 0.0
    L_f: float = 0.0
    L_U: float = 0.0
    r_max: float = 0.0
    zeta: float = 0.0
    max_nominal_dist: float = 0.0
    kappa: float = 1.0
    eps_low: float = 0.0
    eps_up: float = 0.0

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise BoundDomainError("gamma must lie in [0, 1)")
        if self.T < 1:
            raise BoundDomainError("T must be at least 1")
        if self.k < 0:
            raise BoundDomainError("k must be nonnegative")
        for name in ("alpha", "d_Y", "L_r", "L_f", "L_U", "r_max", "zeta", "max_nominal_dist", "eps_low", "eps_up"):
            if getattr(self, name) < 0:
                raise BoundDomainError(f"{name} must be nonnegative")

    def with_(self, **kw) -> "BoundInputs":
        return replace(self, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "BoundInputs":
        d = dict(d)
        if d.get("k") in (None, "inf", "infinity"):
            d["k"] = math.inf
        return cls(**d)


def _geom(base: float, lo: int, hi: int) -> float:
    """sum_{i=lo}^{hi} base^i (zero when hi < lo)."""
    return float(sum(base**i for i in range(lo, hi + 1)))


def _pow_k(base: float, k: float) -> float:
    if math.isinf(k):
        return 0.0 if base < 1 else math.inf
    return base**k


def lookahead_distance(inp: BoundInputs) -> float:
    """d(alpha, d_Y, T) = 2 d_Y (alpha + 1)(T - 1)."""
    return 2 * inp.d_Y * (inp.alpha + 1) * (inp.T - 1)


def reward_gap_bound(inp: BoundInputs) -> float:
    """Error of the one-step T-period reward built from the frozen lower level."""
    g, T, Lf = inp.gamma, inp.T, inp.L_f
    inner = sum(g**i * _geom(Lf, 0, i - 1) for i in range(1, T - 1))
    first = inp.alpha * inp.d_Y * inp.L_r * inner
    second = g ** (T - 1) * inp.L_U * (
        inp.alpha * inp.d_Y * _geom(Lf, 0, T - 2) + g * inp.d_Y * (inp.alpha + 2) * (T - 1)
    )
    return first + second


def _reward_block(inp: BoundInputs, eps_r: float) -> float:
    gT = inp.gamma**inp.T
    return (2 * gT / (1 - gT) ** 2 + 2 / (1 - gT)) * eps_r


def _horizon_block(inp: BoundInputs) -> float:
    gT = inp.gamma**inp.T
    return (2 * gT**2 / (1 - gT) ** 2 + 2 * gT / (1 - gT)) * inp.L_U * lookahead_distance(inp)


def _vi_tail(inp: BoundInputs) -> float:
    g, T = inp.gamma, inp.T
    if inp.r_max == 0:
        return 0.0
    return 2 * inp.r_max * _pow_k(g, (inp.k + 1) * T) / ((1 - g) * (1 - g**T))


def regret_bound_fsvi(inp: BoundInputs) -> float:
    """Regret of the FSVI policy after k upper iterations (k = inf gives the limit)."""
    return _reward_block(inp, reward_gap_bound(inp)) + _horizon_block(inp) + _vi_tail(inp)


def nominal_reward_gap(inp: BoundInputs) -> float:
    g, T, Lf = inp.gamma, inp.T, inp.L_f
    zeta_term = _geom(g, 1, T - 1) * inp.zeta
    double = sum(Lf**i * _geom(g, i + 1, T - 1) for i in range(1, T - 1))
    return reward_gap_bound(inp) + zeta_term + double * inp.L_r * inp.max_nominal_dist


def regret_bound_nominal(inp: BoundInputs) -> float:
    return _reward_block(inp, nominal_reward_gap(inp)) + _horizon_block(inp) + _vi_tail(inp)


def avi_reward_gap(inp: BoundInputs) -> float:
    g, T, kap = inp.gamma, inp.T, inp.kappa
    if kap * g >= 1:
        raise BoundDomainError("need kappa * gamma < 1")
    coef = (1 + kap) / (1 - kap * g) - (kap * g) ** T * (1 + g) / (g - kap * g**2) if g > 0 else (1 + kap)
    return reward_gap_bound(inp) + coef * inp.eps_low


def _avi_tail(inp: BoundInputs) -> float:
    g, T, kap = inp.gamma, inp.T, inp.kappa
    kgT = kap * g**T
    if inp.r_max == 0:
        return 0.0
    return _pow_k(kgT, inp.k) * (kap**2 - kap**2 * (kap * g) ** (T + 1)) / ((1 - kgT) * (1 - kap * g)) * inp.r_max


def regret_bound_fsavi(inp: BoundInputs) -> float:
    g, T, kap = inp.gamma, inp.T, inp.kappa
    if kap * g**T >= 1 or kap * g >= 1:
        raise BoundDomainError("need kappa * gamma < 1 and kappa * gamma^T < 1")
    up = (1 + kap) / (1 - kap * g**T) * inp.eps_up
    return _reward_block(inp, avi_reward_gap(inp)) + _horizon_block(inp) + up + _avi_tail(inp)


def lower_nominal_gap_bound(
    inp: BoundInputs, t: int, dist_x: float = 0.0, dist_y: float = 0.0, dist_nominal: float | None = None
) -> float:
    """Bound on |Jbar_t(x, y) - J*_t(x~, y~)| for the nominal-state lower level.

    ``dist_x`` = |x - x~|, ``dist_y`` = |y - y~|, ``dist_nominal`` = |x* - x~|.
    """
    g, T, Lf, Lr = inp.gamma, inp.T, inp.L_f, inp.L_r
    h = T - t - 1
    dn = inp.max_nominal_dist if dist_nominal is None else dist_nominal
    a = _geom(g, 0, h) * (inp.zeta + Lr * dist_x)
    b = sum((g * Lf) ** i for i in range(0, h + 1)) * Lr * dist_y
    c = sum(Lf**i * _geom(g, i, h) for i in range(1, h + 1)) * Lr * dn
    return a + b + c


def vi_value_error(gamma: float, k: int, r_max: float) -> float:
    """||U^k - U*|| <= gamma^k r_max / (1 - gamma) from a zero start."""
    return gamma**k * r_max / (1 - gamma)


def vi_regret_bound(gamma: float, k: int, r_max: float) -> float:
    """Regret of the greedy policy after k VI sweeps."""
    return 2 * r_max * gamma ** (k + 1) / (1 - gamma) ** 2


def lipschitz_value_bound(L_r: float, L_f: float, gamma: float) -> float:
    """L_U <= L_r / (1 - gamma L_f), valid when gamma L_f < 1."""
    if gamma * L_f >= 1:
        raise BoundDomainError("value Lipschitz bound needs gamma * L_f < 1")
    return L_r / (1 - gamma * L_f)


def bound_report(inp: BoundInputs, which: str = "fsvi") -> dict:
    """Itemized bound record with the inputs echoed."""
    terms: dict = {"lookahead_distance": lookahead_distance(inp), "reward_gap": reward_gap_bound(inp)}
    if which == "fsvi":
        terms.update(
            reward_block=_reward_block(inp, terms["reward_gap"]),
            horizon_block=_horizon_block(inp),
            vi_tail=_vi_tail(inp),
        )
        total = regret_bound_fsvi(inp)
    elif which == "nominal":
        eps = nominal_reward_gap(inp)
        terms.update(
            nominal_reward_gap=eps,
            reward_block=_reward_block(inp, eps),
            horizon_block=_horizon_block(inp),
            vi_tail=_vi_tail(inp),
        )
        total = regret_bound_nominal(inp)
    elif which == "fsavi":
        eps = avi_reward_gap(inp)
        terms.update(
            avi_reward_gap=eps,
            reward_block=_reward_block(inp, eps),
            horizon_block=_horizon_block(inp),
            upper_architecture=(1 + inp.kappa) / (1 - inp.kappa * inp.gamma**inp.T) * inp.eps_up,
            vi_tail=_avi_tail(inp),
        )
        total = regret_bound_fsavi(inp)
    else:
        raise ValueError(f"unknown bound {which!r}")
    inputs = {k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in asdict(inp).items()}
    clean = {k: float(v) for k, v in terms.items()}
    return {"bound": which, "inputs": inputs, "terms": clean, "total": float(total)}


__all__ = [
    "BoundDomainError",
    "BoundInputs",
    "avi_reward_gap",
    "bound_report",
    "lipschitz_value_bound",
    "lookahead_distance",
    "lower_nominal_gap_bound",
    "nominal_reward_gap",
    "regret_bound_fsavi",
    "regret_bound_fsvi",
    "regret_bound_nominal",
    "reward_gap_bound",
    "vi_regret_bound",
    "vi_value_error",
]

