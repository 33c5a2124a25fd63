"""Average-reward MDP solver: relative value iteration on the optimality
conditions, greedy policy extraction, and threshold-structure verification.

This route is independent of the closed-form chain analytics; agreement of the
two is a core correctness check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Action, Policy, SystemParams

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 1_000_000
#: actions within this margin of the best are treated as ties (cheapest wins)
ACTION_TIE_TOL = 1e-9


class ConvergenceError(RuntimeError):
    """Relative value iteration ran out of iterations; carries the last residual."""

    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"no convergence after {iterations} iterations (residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


class StructureViolation(ValueError):
    """A policy is not of two-threshold type; records the first inversion."""

    def __init__(self, age: int, action: Action, next_action: Action):
        super().__init__(
            f"action order inverted at age {age}: a({age})={int(action)}, "
            f"a({age + 1})={int(next_action)}"
        )
        self.age = age
        self.action = action
        self.next_action = next_action


@dataclass(frozen=True)
class ValueFunction:
    """Relative rewards over ages 1..M (gauge: value at age 1 is 0) plus the gain."""

    values: np.ndarray
    gain: float

    def __call__(self, age: int) -> float:
        return float(self.values[age - 1])


@dataclass(frozen=True)
class SolveReport:
    value: ValueFunction
    policy: Policy
    iterations: int
    residual: float  # sup-norm Bellman error


def bellman_values(
    x: int, value: ValueFunction, params: SystemParams
) -> tuple[float, float, float | None]:
    """Relative action values (F0, F1, F2) at age ``x``; F2 is None without 3G."""
    v = value.values
    M = params.max_age
    p = params.contact_prob
    u = params.utility(x)
    v1 = float(v[0])
    vnext = float(v[min(x + 1, M) - 1])
    f0 = u + vnext
    f1 = (
        u - params.scan_cost + p * (v1 - params.wifi_price + params.bonus) + (1.0 - p) * vnext
    )
    if not params.has_3g:
        return f0, f1, None
    f2 = (
        u - params.scan_cost + v1
        - p * params.wifi_price - (1.0 - p) * params.price_3g + params.bonus
    )
    return f0, f1, f2


def _action_value_arrays(v: np.ndarray, params: SystemParams) -> list[np.ndarray]:
    """Vectorized F(a, .) over all ages for the current relative values."""
    p = params.contact_prob
    u = np.asarray(params.utility.values)
    vnext = np.append(v[1:], v[-1])  # V(min(x+1, M))
    f0 = u + vnext
    f1 = u - params.scan_cost + p * (v[0] - params.wifi_price + params.bonus) + (1.0 - p) * vnext
    values = [f0, f1]
    if params.has_3g:
        f2 = (
            u - params.scan_cost + v[0]
            - p * params.wifi_price - (1.0 - p) * params.price_3g + params.bonus
        )
        values.append(f2)
    return values


def solve_user_problem(
    params: SystemParams,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SolveReport:
    """Relative value iteration with the value at age 1 pinned to zero.

    Stops when the span seminorm of successive Bellman differences drops to
    ``tol``; the reported residual is then the sup-norm error of the
    optimality conditions.  Updates are damped half-steps — the aperiodicity
    transform — because deterministic reset cycles (3G bands, p near 1) make
    the undamped iteration oscillate.  The fixed point is unchanged.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    M = params.max_age
    v = np.zeros(M)
    damp = 0.5
    for iteration in range(1, max_iter + 1):
        tv = np.maximum.reduce(_action_value_arrays(v, params))
        delta = tv - v
        span = float(delta.max() - delta.min())
        if span <= tol:
            gain = 0.5 * float(delta.max() + delta.min())
            residual = float(np.max(np.abs(delta - gain)))
            v = v - v[0]
            value = ValueFunction(values=v, gain=gain)
            return SolveReport(
                value=value,
                policy=greedy_policy(value, params),
                iterations=iteration,
                residual=residual,
            )
        v = v + damp * delta
        v = v - v[0]
    raise ConvergenceError(max_iter, span)


def greedy_policy(
    value: ValueFunction, params: SystemParams, tie_tol: float = ACTION_TIE_TOL
) -> Policy:
    """Per-age argmax over action values; ties go to the lower-numbered action."""
    fs = _action_value_arrays(np.asarray(value.values), params)
    best = np.maximum.reduce(fs)
    actions = []
    for x in range(params.max_age):
        if fs[0][x] >= best[x] - tie_tol:
            actions.append(Action.INACTIVE)
        elif fs[1][x] >= best[x] - tie_tol:
            actions.append(Action.WIFI)
        else:
            actions.append(Action.WIFI_THEN_3G)
    return Policy(actions=tuple(actions))


def verify_threshold_structure(policy: Policy) -> tuple[int, int]:
    """Check that actions are non-decreasing in age as a 0/1/2 sequence.

    Returns the two switch points (WiFi threshold, 3G threshold); an absent
    switch is encoded as max_age + 1.  Raises :class:`StructureViolation` at
    the first inversion otherwise.
    """
    acts = policy.actions
    for age in range(1, len(acts)):
        if acts[age] < acts[age - 1]:
            raise StructureViolation(age, acts[age - 1], acts[age])
    never = len(acts) + 1
    s_wifi = next((i + 1 for i, a in enumerate(acts) if a >= Action.WIFI), never)
    s_3g = next((i + 1 for i, a in enumerate(acts) if a is Action.WIFI_THEN_3G), never)
    return s_wifi, s_3g
