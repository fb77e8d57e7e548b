"""Exhaustive reference solvers, no pruning.

Every binary input sequence of the horizon is rolled out in full and checked
from scratch.  Exponential in the horizon; meant for horizons of about 12
steps or fewer, for tests and for the ``oracle`` CLI command.
"""

from __future__ import annotations

import itertools
import math

from .assessment import AssessmentProblem, AssessmentResult
from .constraints import FlexibilityWindow, SlackPair
from .dispatch import DispatchProblem, DispatchResult
from .hydronic import rollout


def _switches_ok(past, plan, m: int, limit: int) -> bool:
    full = list(past) + list(plan)
    first = full[0]
    offset = len(past)
    for t in range(len(plan)):
        end = offset + t
        count = 0
        for j in range(end - m + 1, end + 1):
            a = full[j] if j >= 0 else first
            b = full[j - 1] if j - 1 >= 0 else first
            count += a != b
        if count > limit:
            return False
    return True


def _windows(indices):
    yield ()
    n = len(indices)
    for i in range(n):
        for j in range(i + 1, n + 1):
            yield tuple(indices[i:j])


def exhaustive_assess(problem: AssessmentProblem) -> AssessmentResult:
    if problem.stage_cost is not None:
        raise NotImplementedError("the oracle only covers the electricity stage cost")
    n = problem.horizon_n
    low = (
        problem.temperature.t1_low_soft
        if problem.temperature.assess_soft_floor
        else problem.temperature.t1_low_hard
    )
    high = problem.temperature.t1_high_hard
    idx = problem.temperature.monitored_state_index
    kwh = problem.params.p_rated / 1000.0 * problem.params.dt
    windows = list(_windows(problem.assess_indices))
    best = None
    for plan in itertools.product((0, 1), repeat=n):
        if not _switches_ok(problem.past_inputs, plan, problem.budget.window_m, problem.budget.max_switches):
            continue
        traj = rollout(problem.state0, plan, problem.u_init, problem.demand_forecast, problem.params)
        if any(not (low <= x[idx] <= high) for x in traj):
            continue
        if problem.include_operating_cost:
            stage = [problem.price_forecast[t] * kwh if plan[t] else 0.0 for t in range(n)]
        else:
            stage = [0.0] * n
        cost = 0.0
        for c in stage:
            cost += c
        for w in windows:
            if any(plan[t] for t in w):
                continue
            objective = cost - problem.lam * len(w)
            key = (objective, -len(w), w[0] if w else 0, plan)
            if best is None or key < best[0]:
                best = (key, w, plan, stage, traj)
    t_abs = tuple(problem.start_index + t for t in problem.assess_indices)
    if best is None:
        return AssessmentResult(FlexibilityWindow((), t_abs), (), math.inf, (), False,
                                start_index=problem.start_index)
    key, w, plan, stage, traj = best
    return AssessmentResult(
        window=FlexibilityWindow(tuple(problem.start_index + t for t in w), t_abs),
        plan_u=tuple(plan),
        objective=key[0],
        per_step_cost=tuple(stage),
        feasible=True,
        trajectory=tuple(traj),
        start_index=problem.start_index,
    )


def exhaustive_dispatch(problem: DispatchProblem) -> DispatchResult:
    n = problem.horizon_n
    spec = problem.temperature
    idx = spec.monitored_state_index
    kwh = problem.params.p_rated / 1000.0 * problem.params.dt
    pinned = {t - problem.start_index for t in problem.request.indices}
    best = None
    for plan in itertools.product((0, 1), repeat=n):
        if any(plan[t] for t in pinned if 0 <= t < n):
            continue
        if not _switches_ok(problem.past_inputs, plan, problem.budget.window_m, problem.budget.max_switches):
            continue
        traj = rollout(problem.state0, plan, problem.u_init, problem.demand_forecast, problem.params)
        t1 = [x[idx] for x in traj]
        d1 = max(0.0, max(spec.t1_low_hard - v for v in t1), max(v - spec.t1_high_hard for v in t1))
        d2 = max(0.0, max(spec.t1_low_soft - v for v in t1))
        cost = 0.0
        for t in range(n):
            if plan[t]:
                cost += problem.price_forecast[t] * kwh
        objective = cost + problem.m1_penalty * d1 + problem.m2_penalty * d2
        key = (objective, plan)
        if best is None or key < best[0]:
            best = (key, plan, SlackPair(d1, d2), traj, cost)
    if best is None:
        raise ValueError("no input plan satisfies the switching budget and the pins")
    key, plan, slacks, traj, cost = best
    return DispatchResult(tuple(plan), slacks, key[0], tuple(traj), cost)
