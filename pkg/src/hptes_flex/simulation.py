"""Closed-loop receding-horizon simulation of one working day.

The plant is advanced with the *actual* hot water draw-off; controllers only
see the measured state and the *predicted* draw-off.  With the DR-enabled
controller a flexibility assessment runs every ``assess_interval_steps``
steps, the promised window is turned into a request, and the economic
dispatch is re-solved every step with the remaining part of that request
pinned.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .assessment import AssessmentProblem, assess
from .constraints import (
    FlexibilityWindow,
    SwitchBudget,
    TemperatureConstraintSpec,
    instantaneous_violation,
    switch_count,
)
from .dispatch import (
    NO_REQUEST,
    DispatchProblem,
    DrRequest,
    HysteresisState,
    RequestPolicy,
    dispatch,
    make_request,
    rule_based_step,
)
from .hydronic import Disturbance, PlantParameters, StateVector, cop, hp_inlet_temperature, step

log = logging.getLogger(__name__)

CONTROLLERS = ("mpc_with_dr", "mpc_no_dr", "rule_based")


def working_steps(start_hour: float, end_hour: float, step_hours: float) -> int:
    """Number of whole sampling intervals that fit between start and end."""
    return int(math.floor((end_hour - start_hour) / step_hours + 1e-9))


@dataclass(frozen=True)
class Scenario:
    params: PlantParameters
    state0: StateVector
    demand_actual: tuple[float, ...]  # kg/h, one entry per step
    demand_predicted: tuple[float, ...]
    price: tuple[float, ...]  # EUR/kWh
    u_init: int = 0
    start_hour: float = 7.0
    end_hour: float = 17.5
    horizon_steps: int = 12
    assess_period_steps: int = 9
    assess_interval_steps: int = 9
    temperature: TemperatureConstraintSpec = field(default_factory=TemperatureConstraintSpec)
    budget: SwitchBudget = field(default_factory=SwitchBudget)
    m1_penalty: float = 1e3
    m2_penalty: float = 1e2
    lam: float = 0.0
    include_operating_cost: bool = False
    controller: str = "mpc_with_dr"
    request_policy: str = "full"
    hysteresis_on: float = 62.0
    hysteresis_off: float = 62.0
    rule_respects_budget: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "state0", StateVector(*self.state0))
        for name in ("demand_actual", "demand_predicted", "price"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if self.controller not in CONTROLLERS:
            raise ValueError(f"controller must be one of {CONTROLLERS}, got {self.controller!r}")
        if not 1 <= self.assess_period_steps <= self.horizon_steps:
            raise ValueError("assess_period_steps must lie in [1, horizon_steps]")
        if self.assess_interval_steps < 1:
            raise ValueError("assess_interval_steps must be at least 1")
        if self.end_hour <= self.start_hour:
            raise ValueError("end_hour must be after start_hour")
        if self.n_steps < 1:
            raise ValueError("the working day holds no complete step")
        for name in ("demand_actual", "demand_predicted", "price"):
            if len(getattr(self, name)) < self.n_steps:
                raise ValueError(
                    f"{name} has {len(getattr(self, name))} entries, the day needs {self.n_steps}"
                )
        for name in ("demand_actual", "demand_predicted"):
            bad = [v for v in getattr(self, name) if not 0.0 <= v <= self.params.mdot_p]
            if bad:
                raise ValueError(f"{name} must lie in [0, mdot_p] kg/h, got {bad[0]!r}")
        RequestPolicy.parse(self.request_policy)
        HysteresisState(0, self.hysteresis_on, self.hysteresis_off)

    @property
    def step_hours(self) -> float:
        return self.params.dt

    @property
    def n_steps(self) -> int:
        return working_steps(self.start_hour, self.end_hour, self.params.dt)

    def is_assessment_step(self, k: int) -> bool:
        """Assess every interval, as long as the whole assessment period fits in the day."""
        return k % self.assess_interval_steps == 0 and k + self.assess_period_steps <= self.n_steps

    def forecast(self, series: Sequence[float], k: int) -> list[float]:
        """``horizon_steps`` values from step k, padded with the last value."""
        window = list(series[k : k + self.horizon_steps])
        while len(window) < self.horizon_steps:
            window.append(series[-1])
        return window


@dataclass
class StepRecord:
    step: int
    hour: float
    state: StateVector  # measured at the start of the step
    u: int
    mode: str  # "normal" | "committed_off" | "rule_based"
    in_f: bool
    in_r: bool
    energy_kwh: float
    cost_eur: float
    delta1: float
    delta2: float
    diagnostics: list[str] = field(default_factory=list)


@dataclass
class ClosedLoopTrace:
    records: list[StepRecord] = field(default_factory=list)
    final_state: Optional[StateVector] = None
    u_init: int = 0
    controller: str = ""
    events: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def inputs(self) -> list[int]:
        return [r.u for r in self.records]

    def t1_samples(self, index: int = 2) -> list[float]:
        values = [r.state[index] for r in self.records]
        if self.final_state is not None:
            values.append(self.final_state[index])
        return values


@dataclass(frozen=True)
class KpiReport:
    avg_t1: float
    max_violation: float
    energy_kwh: float
    cost_eur: float
    switch_total: int
    relative_to_baseline: Optional[tuple[float, float]] = None  # (energy %, cost %)


def run_closed_loop(scenario: Scenario) -> ClosedLoopTrace:
    sc = scenario
    params = sc.params
    n = sc.n_steps
    kwh = params.energy_per_on_step_kwh
    trace = ClosedLoopTrace(u_init=sc.u_init, controller=sc.controller)
    history = [sc.u_init]
    x = sc.state0
    hyst = HysteresisState(sc.u_init, sc.hysteresis_on, sc.hysteresis_off)
    window = FlexibilityWindow()
    request: DrRequest = NO_REQUEST

    for k in range(n):
        diagnostics: list[str] = []
        d1 = d2 = math.nan
        if sc.controller == "rule_based":
            u, hyst = rule_based_step(hyst, x)
            if sc.rule_respects_budget and u != history[-1]:
                if switch_count(history + [u], len(history), sc.budget) > sc.budget.max_switches:
                    u = history[-1]
                    hyst = replace(hyst, mode=u)
                    diagnostics.append("switch deferred by budget")
            mode = "rule_based"
        else:
            demand = [Disturbance(v) for v in sc.forecast(sc.demand_predicted, k)]
            prices = sc.forecast(sc.price, k)
            if sc.controller == "mpc_with_dr" and sc.is_assessment_step(k):
                result = assess(
                    AssessmentProblem(
                        horizon_n=sc.horizon_steps,
                        assess_indices=tuple(range(sc.assess_period_steps)),
                        state0=x,
                        u_init=history[-1],
                        demand_forecast=tuple(demand),
                        price_forecast=tuple(prices),
                        params=params,
                        temperature=sc.temperature,
                        budget=sc.budget,
                        input_history=tuple(history),
                        lam=sc.lam,
                        include_operating_cost=sc.include_operating_cost,
                        start_index=k,
                    ),
                    workers=sc.workers,
                )
                if result.feasible:
                    window = result.window
                    request = make_request(window, sc.request_policy)
                    trace.events.append(
                        f"step {k}: promised window {_fmt_set(window.indices)}, "
                        f"request {_fmt_set(sorted(request.indices))}"
                    )
                else:
                    window = FlexibilityWindow((), result.window.assess_indices)
                    request = NO_REQUEST
                    msg = f"step {k}: assessment infeasible ({result.violation}), dispatching without request"
                    trace.events.append(msg)
                    diagnostics.append("assessment infeasible")
                    log.warning(msg)
            res = dispatch(
                DispatchProblem(
                    horizon_n=sc.horizon_steps,
                    state0=x,
                    u_init=history[-1],
                    demand_forecast=tuple(demand),
                    price_forecast=tuple(prices),
                    params=params,
                    temperature=sc.temperature,
                    budget=sc.budget,
                    input_history=tuple(history),
                    request=request,
                    m1_penalty=sc.m1_penalty,
                    m2_penalty=sc.m2_penalty,
                    start_index=k,
                )
            )
            u = res.plan_u[0]
            d1, d2 = res.slacks
            mode = "committed_off" if k in request else "normal"

        if u and cop(hp_inlet_temperature(x, params), params.t_amb, params) <= 0:
            diagnostics.append("non-positive COP")
        x_next = step(x, u, history[-1], Disturbance(sc.demand_actual[k]), params)
        if not x_next.is_plausible():
            raise RuntimeError(f"step {k}: implausible plant state {x_next}")
        energy = kwh * u
        trace.records.append(
            StepRecord(
                step=k,
                hour=sc.start_hour + k * sc.step_hours,
                state=x,
                u=u,
                mode=mode,
                in_f=k in window,
                in_r=k in request,
                energy_kwh=energy,
                cost_eur=sc.price[k] * energy,
                delta1=d1,
                delta2=d2,
                diagnostics=diagnostics,
            )
        )
        history.append(u)
        x = x_next
    trace.final_state = x
    return trace


def _fmt_set(values) -> str:
    return "{" + ", ".join(str(v) for v in values) + "}"


def count_switches(inputs: Sequence[int], u_init: int = 0) -> int:
    prev = u_init
    total = 0
    for u in inputs:
        total += u != prev
        prev = u
    return total


def max_window_switches(inputs: Sequence[int], u_init: int, budget: SwitchBudget) -> int:
    """Largest switch count over every window ending at an applied step."""
    seq = [u_init] + list(inputs)
    if len(seq) == 1:
        return 0
    return max(switch_count(seq, t, budget) for t in range(1, len(seq)))


def compute_kpis(
    trace: ClosedLoopTrace,
    baseline: Optional[ClosedLoopTrace] = None,
    spec: TemperatureConstraintSpec = TemperatureConstraintSpec(),
) -> KpiReport:
    if not trace.records:
        raise ValueError("cannot compute KPIs of an empty trace")
    t1 = trace.t1_samples(spec.monitored_state_index)
    energy = sum(r.energy_kwh for r in trace.records)
    cost = sum(r.cost_eur for r in trace.records)
    relative = None
    if baseline is not None:
        if len(baseline) != len(trace):
            raise ValueError(
                f"baseline spans {len(baseline)} steps, trace spans {len(trace)}"
            )
        base = compute_kpis(baseline, spec=spec)
        relative = (_percent(energy, base.energy_kwh), _percent(cost, base.cost_eur))
    return KpiReport(
        avg_t1=sum(t1) / len(t1),
        max_violation=max(instantaneous_violation(v, spec) for v in t1),
        energy_kwh=energy,
        cost_eur=cost,
        switch_total=count_switches(trace.inputs, trace.u_init),
        relative_to_baseline=relative,
    )


def _percent(value: float, reference: float) -> float:
    if reference == 0:
        return 100.0 if value == 0 else math.inf
    return 100.0 * value / reference


def compare_controllers(
    scenario: Scenario, mpc_controller: str = "mpc_with_dr"
) -> tuple[KpiReport, KpiReport, ClosedLoopTrace, ClosedLoopTrace]:
    """Rule-based baseline and MPC on identical data; MPC relative to baseline."""
    base_trace = run_closed_loop(replace(scenario, controller="rule_based"))
    mpc_trace = run_closed_loop(replace(scenario, controller=mpc_controller))
    base = compute_kpis(base_trace, spec=scenario.temperature)
    mpc = compute_kpis(mpc_trace, base_trace, spec=scenario.temperature)
    base = replace(base, relative_to_baseline=(100.0, 100.0))
    return base, mpc, base_trace, mpc_trace
