"""Flexibility assessment: the longest/most valuable promised off-window.

The continuous states are eliminated by rolling the plant forward, so the
problem is a search over binary input sequences.  Each contiguous candidate
window W of the assessment period is an independent sub-problem in which the
inputs on W are pinned to zero; a depth-first branch-and-bound explores the
remaining inputs.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

from .constraints import (
    FlexibilityWindow,
    FlexLogicTriple,
    SwitchBudget,
    TemperatureConstraintSpec,
    flex_logic_for_window,
    switch_count,
)
from .hydronic import Disturbance, PlantParameters, StateVector, step

log = logging.getLogger(__name__)

StageCost = Callable[[int, StateVector, int], float]
"""``(t, state_after_step, u_t) -> cost``; must be non-negative."""

_REL_TOL = 1e-9


class InfeasibleProblem(ValueError):
    """No input sequence satisfies the hard constraints."""


@dataclass(frozen=True)
class AssessmentProblem:
    horizon_n: int
    assess_indices: tuple[int, ...]
    state0: StateVector
    u_init: int
    demand_forecast: tuple[Disturbance, ...]
    price_forecast: tuple[float, ...]
    params: PlantParameters
    temperature: TemperatureConstraintSpec = field(default_factory=TemperatureConstraintSpec)
    budget: SwitchBudget = field(default_factory=SwitchBudget)
    input_history: tuple[int, ...] = ()
    lam: float = 0.0
    include_operating_cost: bool = False
    start_index: int = 0
    stage_cost: Optional[StageCost] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "assess_indices", tuple(int(t) for t in self.assess_indices))
        object.__setattr__(self, "demand_forecast", tuple(_as_disturbance(d) for d in self.demand_forecast))
        object.__setattr__(self, "price_forecast", tuple(float(p) for p in self.price_forecast))
        object.__setattr__(self, "input_history", tuple(int(u) for u in self.input_history))
        object.__setattr__(self, "state0", StateVector(*self.state0))
        validate_horizon(self)
        idx = self.assess_indices
        if idx:
            if any(b != a + 1 for a, b in zip(idx, idx[1:])):
                raise ValueError("assess_indices must be a contiguous range")
            if idx[0] < 0 or idx[-1] >= self.horizon_n:
                raise ValueError("assess_indices must lie within the horizon")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ValueError("lam must be a non-negative revenue per committed step")

    @property
    def past_inputs(self) -> tuple[int, ...]:
        return self.input_history if self.input_history else (self.u_init,)


@dataclass(frozen=True)
class AssessmentResult:
    window: FlexibilityWindow
    plan_u: tuple[int, ...]
    objective: float
    per_step_cost: tuple[float, ...]
    feasible: bool
    trajectory: tuple[StateVector, ...] = ()
    violation: Optional[str] = None
    start_index: int = 0
    nodes: int = 0

    def certificate(self) -> Optional[FlexLogicTriple]:
        """(u, s, z) on the assessment period that satisfies the window logic."""
        if not self.feasible:
            return None
        t_idx = self.window.assess_indices
        u = tuple(self.plan_u[t - self.start_index] for t in t_idx)
        return flex_logic_for_window(u, self.window.indices, t_idx)


def _as_disturbance(d) -> Disturbance:
    if isinstance(d, Disturbance):
        return d
    if isinstance(d, (int, float)):
        return Disturbance(float(d))
    return Disturbance(*d)


def validate_horizon(problem) -> None:
    n = problem.horizon_n
    if n < 1:
        raise ValueError("horizon_n must be at least 1")
    if len(problem.demand_forecast) != n:
        raise ValueError(f"demand_forecast has length {len(problem.demand_forecast)}, expected {n}")
    if len(problem.price_forecast) != n:
        raise ValueError(f"price_forecast has length {len(problem.price_forecast)}, expected {n}")
    if any(not math.isfinite(p) for p in problem.price_forecast):
        raise ValueError("prices must be finite")
    if problem.u_init not in (0, 1):
        raise ValueError("u_init must be binary")
    if any(u not in (0, 1) for u in problem.input_history):
        raise ValueError("input_history must be binary")
    if problem.input_history and problem.input_history[-1] != problem.u_init:
        raise ValueError("the last entry of input_history must equal u_init")


def contiguous_windows(indices: Sequence[int]) -> list[tuple[int, ...]]:
    """All contiguous sub-runs of ``indices`` plus the empty window.

    Ordered by decreasing length, then by start, which is also the tie-break
    preference.
    """
    n = len(indices)
    out: list[tuple[int, ...]] = []
    for length in range(n, 0, -1):
        for start in range(0, n - length + 1):
            out.append(tuple(indices[start : start + length]))
    out.append(())
    return out


def _step_costs(problem) -> list[float]:
    """Electricity cost of running the heat pump during each horizon step."""
    kwh = problem.params.energy_per_on_step_kwh
    return [e * kwh for e in problem.price_forecast]


def _candidate_key(objective: float, window: tuple[int, ...], plan: tuple[int, ...]):
    return (objective, -len(window), window[0] if window else 0, plan)


def _search_window(problem: AssessmentProblem, window: tuple[int, ...], incumbent):
    """Best (key, plan, costs, trajectory) for one pinned window, or ``incumbent``.

    ``incumbent`` is the best key found so far (or None); it only tightens
    pruning, the returned value is the better of the two.
    """
    n = problem.horizon_n
    params = problem.params
    budget = problem.budget
    low, high = problem.temperature.assessment_bounds()
    ti = problem.temperature.monitored_state_index
    pinned = [False] * n
    for t in window:
        pinned[t] = True
    use_cost = problem.include_operating_cost
    callback = problem.stage_cost if use_cost else None
    costs = _step_costs(problem) if use_cost and callback is None else [0.0] * n
    # smallest possible cost still to come from step t on (negative prices)
    tail_min = [0.0] * (n + 1)
    for t in range(n - 1, -1, -1):
        tail_min[t] = tail_min[t + 1] + (min(0.0, costs[t]) if not pinned[t] else 0.0)
    revenue = problem.lam * len(window)
    past = list(problem.past_inputs)
    n_past = len(past)
    seq = past + [0] * n
    plan = [0] * n
    stage = [0.0] * n
    states: list[StateVector] = [problem.state0] * n
    best = {"key": incumbent[0] if incumbent else None, "sol": incumbent}
    nodes = 0

    def bound_ok(lower: float) -> bool:
        key = best["key"]
        if key is None:
            return True
        return lower <= key[0] + _REL_TOL * max(1.0, abs(key[0]))

    def dfs(t: int, x: StateVector, cost: float) -> None:
        nonlocal nodes
        if t == n:
            objective = cost - revenue
            key = _candidate_key(objective, window, tuple(plan))
            if best["key"] is None or key < best["key"]:
                best["key"] = key
                best["sol"] = (key, tuple(plan), tuple(stage), tuple(states))
            return
        choices = (0,) if pinned[t] else (0, 1)
        u_prev = seq[n_past + t - 1]
        for u in choices:
            nodes += 1
            seq[n_past + t] = u
            if switch_count(seq, n_past + t, budget) > budget.max_switches:
                continue
            x_next = step(x, u, u_prev, problem.demand_forecast[t], params)
            if not low <= x_next[ti] <= high:
                continue
            if callback is not None:
                c = callback(t, x_next, u)
            else:
                c = costs[t] if u else 0.0
            new_cost = cost + c
            if not bound_ok(new_cost + tail_min[t + 1] - revenue):
                continue
            plan[t] = u
            stage[t] = c
            states[t] = x_next
            dfs(t + 1, x_next, new_cost)
        seq[n_past + t] = 0
        plan[t] = 0

    dfs(0, problem.state0, 0.0)
    return best["sol"], nodes


def _search_window_standalone(args):
    problem, window = args
    return _search_window(problem, window, None)


def _switch_feasible_at_all(problem: AssessmentProblem) -> bool:
    """Holding the last input adds no switch, so it is feasible iff anything is."""
    past = list(problem.past_inputs)
    seq = past + [past[-1]] * problem.horizon_n
    return all(
        switch_count(seq, len(past) + t, problem.budget) <= problem.budget.max_switches
        for t in range(problem.horizon_n)
    )


def assess(problem: AssessmentProblem, workers: int = 1) -> AssessmentResult:
    """Exact optimum of operating cost minus flexibility revenue.

    Ties are broken towards the longer window, then the earlier window, then
    the lexicographically smallest input plan.  With ``workers > 1`` the
    windows are searched in separate processes; the result is identical.
    """
    windows = contiguous_windows(problem.assess_indices)
    best = None
    nodes = 0
    if workers > 1 and len(windows) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for sol, k in pool.map(_search_window_standalone, [(problem, w) for w in windows]):
                nodes += k
                if sol is not None and (best is None or sol[0] < best[0]):
                    best = sol
    else:
        for w in windows:
            best, k = _search_window(problem, w, best)
            nodes += k

    t_abs = tuple(problem.start_index + t for t in problem.assess_indices)
    if best is None:
        violation = "switching budget" if not _switch_feasible_at_all(problem) else "temperature bounds"
        log.info("assessment infeasible at step %d: %s", problem.start_index, violation)
        return AssessmentResult(
            window=FlexibilityWindow((), t_abs),
            plan_u=(),
            objective=math.inf,
            per_step_cost=(),
            feasible=False,
            violation=violation,
            start_index=problem.start_index,
            nodes=nodes,
        )
    key, plan, stage, states = best
    length = -key[1]
    start = key[2]
    window_rel = tuple(range(start, start + length)) if length else ()
    return AssessmentResult(
        window=FlexibilityWindow(tuple(problem.start_index + t for t in window_rel), t_abs),
        plan_u=plan,
        objective=key[0],
        per_step_cost=stage,
        feasible=True,
        trajectory=states,
        start_index=problem.start_index,
        nodes=nodes,
    )


def max_flex_window(problem: AssessmentProblem, workers: int = 1) -> FlexibilityWindow:
    """Longest contiguous off-window that keeps every hard constraint."""
    res = assess(replace(problem, include_operating_cost=False, lam=1.0), workers=workers)
    if not res.feasible:
        raise InfeasibleProblem(f"no feasible input sequence ({res.violation})")
    return res.window
