"""Optimal-threshold search: first-crossing rule, boundary-regime tests,
step-utility candidate set via the Lambert W function, multi-optimum
enumeration, and the two-threshold grid search.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import chain
from .model import SystemParams

_INV_E = math.exp(-1.0)


@dataclass(frozen=True)
class ThresholdResult:
    s_star: int
    reward: float
    all_optima: tuple[int, ...]
    always_active: bool
    always_inactive: bool
    fallback_sweep: bool = False  # step search only: candidate set was unusable


@dataclass(frozen=True)
class TwoThresholdResult:
    s_wifi: int
    s_3g: int
    reward: float


@dataclass(frozen=True)
class MonotonicityReport:
    parameter: str
    grid: tuple[float, ...]
    thresholds: tuple[int, ...]
    violation: tuple[int, int, int] | None  # (grid index, s_i, s_{i+1})

    @property
    def ok(self) -> bool:
        return self.violation is None


def _first_crossing(rewards: np.ndarray) -> int:
    """min { s : E[r; s] >= E[r; s+1] }, the first-crossing characterization."""
    for s in range(1, len(rewards)):
        if rewards[s - 1] >= rewards[s]:
            return s
    return len(rewards)


def _optima(rewards: np.ndarray, tie_tol: float) -> tuple[int, ...]:
    best = float(np.max(rewards))
    return tuple(int(s) for s in range(1, len(rewards) + 1) if rewards[s - 1] >= best - tie_tol)


def optimal_threshold(params: SystemParams, tie_tol: float = chain.TIE_TOL) -> ThresholdResult:
    """Optimal WiFi threshold by the first-crossing rule over s in [1, M+1].

    Unimodality of the reward curve makes the first crossing coincide with the
    argmax; ``all_optima`` collects every threshold within ``tie_tol`` of the
    maximum.
    """
    rewards = chain.threshold_reward_curve(params)
    s_star = _first_crossing(rewards)
    return ThresholdResult(
        s_star=s_star,
        reward=float(rewards[s_star - 1]),
        all_optima=_optima(rewards, tie_tol),
        always_active=always_active(params),
        always_inactive=always_inactive(params),
    )


def always_active(params: SystemParams) -> bool:
    """Closed-form test for s* = 1 (activate at every age)."""
    p = params.contact_prob
    q = 1.0 - p
    u = params.utility.values
    discounted = sum(u[x - 1] * q ** (x - 1) for x in range(1, params.max_age))
    lhs = (u[0] - p * discounted) / q
    return lhs >= params.scan_cost / p + params.wifi_price - params.bonus


def always_inactive(params: SystemParams) -> bool:
    """Closed-form test for s* = M + 1 (never activate)."""
    total = sum(params.utility.values[: params.max_age - 1])
    return total <= params.scan_cost / params.contact_prob + params.wifi_price - params.bonus


def lambert_w(x: float, tol: float = 1e-12, max_iter: int = 100) -> float:
    """Principal branch of the Lambert W function: w with w * e^w = x.

    Defined for x >= -1/e.  Halley iterations from a branch-aware start point;
    the residual |w e^w - x| is driven below ``tol * max(1, |x|)``.
    """
    if x < -_INV_E - 1e-15:
        raise ValueError(f"lambert_w needs x >= -1/e, got {x}")
    if x == 0.0:
        return 0.0
    if abs(x + _INV_E) < 1e-15:
        return -1.0
    if x < 0.0:
        w = -1.0 + math.sqrt(2.0 * (1.0 + math.e * x))  # series around the branch point
    elif x < math.e:
        w = x / (1.0 + x)  # crude rational start; Halley polishes it
    else:
        lx = math.log(x)
        w = lx - math.log(lx)
    target = tol * max(1.0, abs(x))
    for _ in range(max_iter):
        ew = math.exp(w)
        f = w * ew - x
        if abs(f) <= target:
            return w
        wp1 = w + 1.0
        w -= f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
    raise ArithmeticError(f"lambert_w failed to converge for x={x}")


def _step_interior_root(params: SystemParams) -> float | None:
    """Stationary point of the step-utility reward curve on the s <= cutoff branch.

    Returns None when the Lambert argument leaves the principal-branch domain
    or overflows, in which case callers fall back to the exhaustive sweep.
    """
    u = params.utility
    v, k = u.step_value, u.step_cutoff
    if not v or v <= 0:
        return None
    p = params.contact_prob
    lnq = math.log1p(-p)
    costs = params.scan_cost + p * params.wifi_price - p * params.bonus
    try:
        arg = costs * math.exp(-(lnq * (1.0 + k * p) + p) / p) / v
        w = lambert_w(arg)
    except (OverflowError, ValueError, ArithmeticError):
        return None
    return -(p + w * p + lnq * (1.0 - p)) / (lnq * p)


def step_utility_threshold(
    params: SystemParams, tie_tol: float = chain.TIE_TOL
) -> ThresholdResult:
    """Optimal threshold for a step utility from the five-candidate set
    {1, k-1, floor(phi), ceil(phi), M, M+1}, phi being the Lambert-W interior
    stationary point.  Falls back to the exhaustive sweep (flagged) when phi
    is undefined."""
    if params.utility.form != "step":
        raise ValueError("step_utility_threshold needs a step utility")
    M = params.max_age
    phi = _step_interior_root(params)
    fallback = phi is None
    if fallback:
        result = optimal_threshold(params, tie_tol)
        return replace(result, fallback_sweep=True)

    k = params.utility.step_cutoff
    candidates = sorted(
        {min(max(c, 1), M + 1) for c in (1, k - 1, math.floor(phi), math.ceil(phi), M, M + 1)}
    )
    rewards = {s: chain.expected_reward_threshold(params, s) for s in candidates}
    best = max(rewards.values())
    winners = tuple(s for s in candidates if rewards[s] >= best - tie_tol)
    s_star = winners[0]
    return ThresholdResult(
        s_star=s_star,
        reward=rewards[s_star],
        all_optima=winners,
        always_active=always_active(params),
        always_inactive=always_inactive(params),
    )


def enumerate_optimal_thresholds(
    params: SystemParams, tie_tol: float = chain.TIE_TOL
) -> tuple[tuple[int, ...], bool]:
    """All maximizers of E[r; s] by full sweep, plus the degeneracy flag
    (three or more optima, which forces the optimal reward to zero and puts
    always-inactive among the optima)."""
    rewards = chain.threshold_reward_curve(params)
    optima = _optima(rewards, tie_tol)
    return optima, len(optima) >= 3


def multi_optimum_condition(params: SystemParams, tie_tol: float = chain.TIE_TOL) -> bool:
    """Closed-form condition for three or more optimal thresholds:
    some m < M - 1 has cumulative utility below m exactly equal to the cycle
    cost while the utility vanishes beyond m.  Kept as an independent
    cross-check of the sweep-based enumeration."""
    u = params.utility.values
    cost = params.scan_cost / params.contact_prob + params.wifi_price - params.bonus
    head = 0.0
    for m in range(1, params.max_age - 1):
        if abs(head - cost) <= tie_tol and all(x <= tie_tol for x in u[m:]):
            return True
        head += u[m - 1]
    return False


def optimal_two_thresholds(
    params: SystemParams, tie_tol: float = chain.TIE_TOL
) -> TwoThresholdResult:
    """Best (s_wifi, s_3g) pair by exhaustive closed-form evaluation.

    When the 3G price is dominated by the WiFi cycle cost G/p + P the WiFi
    band is empty and only the 3G-only family competes with always-inactive;
    otherwise the full triangular grid plus the WiFi-only edge is searched.
    Ties prefer smaller s_3g, then smaller s_wifi (least escalation).
    """
    if not params.has_3g:
        raise ValueError("optimal_two_thresholds needs a finite 3G price")
    M = params.max_age
    p = params.contact_prob
    never = M + 1

    best = TwoThresholdResult(s_wifi=never, s_3g=never, reward=0.0)  # always inactive
    if params.price_3g <= params.scan_cost / p + params.wifi_price:
        for s3 in range(1, M + 1):
            r = chain.expected_reward_3g_only(params, s3)
            if r > best.reward + tie_tol:
                best = TwoThresholdResult(s_wifi=s3, s_3g=s3, reward=r)
        return best

    wifi_only = chain.threshold_reward_curve(params)
    grid = chain.two_threshold_reward_grid(params)
    for s3 in range(1, M + 1):
        for s_w in range(1, s3 + 1):
            r = float(grid[s_w - 1, s3 - 1])
            if r > best.reward + tie_tol:
                best = TwoThresholdResult(s_wifi=s_w, s_3g=s3, reward=r)
    for s_w in range(1, M + 1):
        r = float(wifi_only[s_w - 1])
        if r > best.reward + tie_tol:
            best = TwoThresholdResult(s_wifi=s_w, s_3g=never, reward=r)
    return best


def threshold_response(params: SystemParams, bonuses: np.ndarray | list[float]) -> np.ndarray:
    """s*(B) for every bonus in ``bonuses``, via the affine-in-bonus reward curve.

    Applies the same first-crossing rule as :func:`optimal_threshold`, so the
    two never disagree.  Only valid for bonuses within [0, min price]; beyond
    that the closed form stops describing the model.
    """
    base, slope = chain.threshold_reward_affine(params)
    b = np.atleast_1d(np.asarray(bonuses, dtype=float))
    curves = base[None, :] + b[:, None] * slope[None, :]
    crossed = curves[:, :-1] >= curves[:, 1:]
    has_crossing = crossed.any(axis=1)
    return np.where(has_crossing, crossed.argmax(axis=1) + 1, base.size)


_SWEEPABLE = {"G": "scan_cost", "P": "wifi_price", "B": "bonus"}
_DIRECTION = {"G": 1, "P": 1, "B": -1}  # +1: s* must not decrease along the grid


def monotonicity_check(
    params: SystemParams, parameter: str, grid: tuple[float, ...] | list[float]
) -> MonotonicityReport:
    """Sweep one cost parameter and check the direction of s* along the grid:
    non-decreasing in G and P, non-increasing in B."""
    if parameter not in _SWEEPABLE:
        raise ValueError(f"unknown sweep parameter {parameter!r}; choose one of G, P, B")
    field = _SWEEPABLE[parameter]
    thresholds = []
    for value in grid:
        swept = replace(params, **{field: float(value)})
        thresholds.append(optimal_threshold(swept).s_star)
    violation = None
    sign = _DIRECTION[parameter]
    for i in range(len(thresholds) - 1):
        if sign * (thresholds[i + 1] - thresholds[i]) < 0:
            violation = (i, thresholds[i], thresholds[i + 1])
            break
    return MonotonicityReport(
        parameter=parameter,
        grid=tuple(float(v) for v in grid),
        thresholds=tuple(thresholds),
        violation=violation,
    )
