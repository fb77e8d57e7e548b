"""Flexibility exploitation and the rule-based baseline.

``dispatch`` solves the economic problem with the heat pump pinned off on the
requested steps: electricity cost plus penalised scalar slacks on the T1
bounds.  For a fixed binary plan the trajectory is fixed, so the optimal
slacks are the worst-case violations and only the plan is searched.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

from .assessment import InfeasibleProblem, _as_disturbance, _step_costs, validate_horizon
from .constraints import (
    FlexibilityWindow,
    SlackPair,
    SwitchBudget,
    TemperatureConstraintSpec,
    switch_count,
)
from .hydronic import T1_INDEX, TANK_BOTTOM_INDEX, Disturbance, PlantParameters, StateVector, step

_REL_TOL = 1e-9


@dataclass(frozen=True)
class DrRequest:
    """Steps (absolute indices) on which the grid operator wants the HP off."""

    indices: frozenset[int] = frozenset()
    source_window: FlexibilityWindow = field(default_factory=FlexibilityWindow)

    def __post_init__(self) -> None:
        object.__setattr__(self, "indices", frozenset(int(i) for i in self.indices))
        if not self.indices <= set(self.source_window.indices):
            raise ValueError("a DR request must be a subset of the promised window")

    def __contains__(self, t: object) -> bool:
        return t in self.indices

    def __len__(self) -> int:
        return len(self.indices)


NO_REQUEST = DrRequest()


@dataclass(frozen=True)
class DispatchProblem:
    horizon_n: int
    state0: StateVector
    u_init: int
    demand_forecast: tuple[Disturbance, ...]
    price_forecast: tuple[float, ...]
    params: PlantParameters
    temperature: TemperatureConstraintSpec = field(default_factory=TemperatureConstraintSpec)
    budget: SwitchBudget = field(default_factory=SwitchBudget)
    input_history: tuple[int, ...] = ()
    request: DrRequest = NO_REQUEST
    m1_penalty: float = 1e3  # EUR per degC of band violation
    m2_penalty: float = 1e2  # EUR per degC below the comfort floor
    start_index: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "demand_forecast", tuple(_as_disturbance(d) for d in self.demand_forecast))
        object.__setattr__(self, "price_forecast", tuple(float(p) for p in self.price_forecast))
        object.__setattr__(self, "input_history", tuple(int(u) for u in self.input_history))
        object.__setattr__(self, "state0", StateVector(*self.state0))
        validate_horizon(self)
        if not (self.m1_penalty > 0 and self.m2_penalty > 0):
            raise ValueError("slack penalties must be positive")
        if self.m1_penalty < self.m2_penalty:
            raise ValueError("m1_penalty must be at least m2_penalty")

    @property
    def past_inputs(self) -> tuple[int, ...]:
        return self.input_history if self.input_history else (self.u_init,)

    def pinned(self) -> list[bool]:
        """Horizon-relative pins of the request (steps outside the horizon are dropped)."""
        pins = [False] * self.horizon_n
        for t in self.request.indices:
            rel = t - self.start_index
            if 0 <= rel < self.horizon_n:
                pins[rel] = True
        return pins


@dataclass(frozen=True)
class DispatchResult:
    plan_u: tuple[int, ...]
    slacks: SlackPair
    objective: float
    trajectory: tuple[StateVector, ...]
    energy_cost: float = 0.0
    nodes: int = 0


def dispatch(problem: DispatchProblem) -> DispatchResult:
    """Exact minimum of electricity cost plus slack penalties.

    Depth-first branch-and-bound, off before on, so among equal objectives the
    lexicographically smallest plan is returned.  Pruning uses the switching
    budget and a lower bound of cost so far plus the penalty of the slacks
    already forced by the partial trajectory.
    """
    n = problem.horizon_n
    params = problem.params
    budget = problem.budget
    spec = problem.temperature
    ti = spec.monitored_state_index
    lo_hard, hi_hard, lo_soft = spec.t1_low_hard, spec.t1_high_hard, spec.t1_low_soft
    m1, m2 = problem.m1_penalty, problem.m2_penalty
    pinned = problem.pinned()
    costs = _step_costs(problem)
    tail_min = [0.0] * (n + 1)
    for t in range(n - 1, -1, -1):
        tail_min[t] = tail_min[t + 1] + (min(0.0, costs[t]) if not pinned[t] else 0.0)

    past = list(problem.past_inputs)
    n_past = len(past)
    seq = past + [0] * n
    plan = [0] * n
    states: list[StateVector] = [problem.state0] * n
    best_key: Optional[tuple] = None
    best_sol = None
    nodes = 0

    def dfs(t: int, x: StateVector, cost: float, d1: float, d2: float) -> None:
        nonlocal best_key, best_sol, nodes
        if t == n:
            objective = cost + m1 * d1 + m2 * d2
            key = (objective, tuple(plan))
            if best_key is None or key < best_key:
                best_key = key
                best_sol = (tuple(plan), SlackPair(d1, d2), objective, tuple(states), cost)
            return
        u_prev = seq[n_past + t - 1]
        for u in ((0,) if pinned[t] else (0, 1)):
            nodes += 1
            seq[n_past + t] = u
            if switch_count(seq, n_past + t, budget) > budget.max_switches:
                continue
            x_next = step(x, u, u_prev, problem.demand_forecast[t], params)
            t1 = x_next[ti]
            nd1 = max(d1, lo_hard - t1, t1 - hi_hard)
            nd2 = max(d2, lo_soft - t1)
            new_cost = cost + (costs[t] if u else 0.0)
            if best_key is not None:
                lower = new_cost + tail_min[t + 1] + m1 * nd1 + m2 * nd2
                if lower > best_key[0] + _REL_TOL * max(1.0, abs(best_key[0])):
                    continue
            plan[t] = u
            states[t] = x_next
            dfs(t + 1, x_next, new_cost, nd1, nd2)
        seq[n_past + t] = 0
        plan[t] = 0

    dfs(0, problem.state0, 0.0, 0.0, 0.0)
    if best_sol is None:
        raise InfeasibleProblem(
            "no input plan satisfies the switching budget together with the pinned steps"
        )
    plan_u, slacks, objective, trajectory, energy_cost = best_sol
    return DispatchResult(plan_u, slacks, objective, trajectory, energy_cost, nodes)


@dataclass(frozen=True)
class HysteresisState:
    mode: int = 0
    on_threshold: float = 62.0
    off_threshold: float = 62.0
    sensor_on: int = T1_INDEX
    sensor_off: int = TANK_BOTTOM_INDEX

    def __post_init__(self) -> None:
        for value in (self.on_threshold, self.off_threshold):
            if not 55.0 <= value <= 75.0:
                raise ValueError("hysteresis thresholds must lie in [55, 75] degC")
        if self.mode not in (0, 1):
            raise ValueError("mode must be binary")


def rule_based_step(hyst: HysteresisState, state: StateVector) -> tuple[int, HysteresisState]:
    """Installed thermostat logic: off if the tank bottom is hot, on if the top is cold."""
    if state[hyst.sensor_off] > hyst.off_threshold:
        u = 0
    elif state[hyst.sensor_on] < hyst.on_threshold:
        u = 1
    else:
        u = hyst.mode
    return u, replace(hyst, mode=u)


class RequestPolicy(NamedTuple):
    kind: str  # "full" | "prefix" | "random"
    count: Optional[int] = None
    seed: Optional[int] = None

    @classmethod
    def parse(cls, text: str) -> "RequestPolicy":
        """Parse ``full``, ``prefix:K`` or ``random:SEED:K``."""
        text = text.strip()
        if text == "full":
            return cls("full")
        m = re.fullmatch(r"prefix:(\d+)", text)
        if m:
            return cls("prefix", int(m.group(1)))
        m = re.fullmatch(r"random:(-?\d+):(\d+)", text)
        if m:
            return cls("random", int(m.group(2)), int(m.group(1)))
        raise ValueError(f"unknown request policy {text!r} (use full, prefix:K or random:SEED:K)")

    def __str__(self) -> str:
        if self.kind == "full":
            return "full"
        if self.kind == "prefix":
            return f"prefix:{self.count}"
        return f"random:{self.seed}:{self.count}"


def make_request(window: FlexibilityWindow, policy: RequestPolicy | str = "full") -> DrRequest:
    """Stand-in for the grid operator: draw a feasible request from a promised window."""
    if isinstance(policy, str):
        policy = RequestPolicy.parse(policy)
    idx = list(window.indices)
    if policy.kind == "full":
        chosen = idx
    else:
        k = policy.count or 0
        if k > len(idx):
            raise ValueError(f"request size {k} exceeds the promised window ({len(idx)} steps)")
        if policy.kind == "prefix":
            chosen = idx[:k]
        else:
            chosen = random.Random(policy.seed).sample(idx, k)
    return DrRequest(frozenset(chosen), window)


def request_from_indices(indices, window: Optional[FlexibilityWindow] = None) -> DrRequest:
    """Explicit request; without a window it is its own source (no feasibility claim)."""
    ids = tuple(sorted(int(i) for i in indices))
    if window is None:
        window = FlexibilityWindow(ids, ids)
    return DrRequest(frozenset(ids), window)
