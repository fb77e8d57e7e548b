"""Command-line entry point (``hptes-flex``).

Exit status: 0 success, 1 infeasible assessment or dispatch, 2 input error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .assessment import AssessmentProblem, AssessmentResult, InfeasibleProblem, assess
from .config import ScenarioError, kpi_table, load_scenario, write_kpis, write_trace
from .dispatch import NO_REQUEST, DispatchProblem, DrRequest, RequestPolicy, make_request, request_from_indices, dispatch
from .hydronic import Disturbance, StateVector
from .oracle import exhaustive_assess, exhaustive_dispatch
from .simulation import CONTROLLERS, Scenario, compare_controllers, compute_kpis, run_closed_loop

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT = 0, 1, 2
ORACLE_MAX_HORIZON = 16


def state_at_step(scenario: Scenario, k: int) -> tuple[StateVector, tuple[int, ...]]:
    """Measured state and applied input history at the start of step k of the closed loop."""
    if not 0 <= k < scenario.n_steps:
        raise ScenarioError(f"--at-step must lie in [0, {scenario.n_steps - 1}], got {k}")
    if k == 0:
        return scenario.state0, (scenario.u_init,)
    trace = run_closed_loop(scenario)
    return trace.records[k].state, (scenario.u_init, *trace.inputs[:k])


def _assessment_problem(sc: Scenario, k: int) -> AssessmentProblem:
    x, history = state_at_step(sc, k)
    return AssessmentProblem(
        horizon_n=sc.horizon_steps,
        assess_indices=tuple(range(sc.assess_period_steps)),
        state0=x,
        u_init=history[-1],
        demand_forecast=tuple(Disturbance(v) for v in sc.forecast(sc.demand_predicted, k)),
        price_forecast=tuple(sc.forecast(sc.price, k)),
        params=sc.params,
        temperature=sc.temperature,
        budget=sc.budget,
        input_history=history,
        lam=sc.lam,
        include_operating_cost=sc.include_operating_cost,
        start_index=k,
    )


def _print_assessment(res: AssessmentResult, label: str) -> int:
    if not res.feasible:
        print(f"{label}: infeasible ({res.violation})")
        return EXIT_INFEASIBLE
    window = "{" + ", ".join(map(str, res.window.indices)) + "}"
    print(f"{label}: F = {window} ({len(res.window)} steps)")
    print(f"objective = {res.objective!r}")
    print("plan u = " + "".join(map(str, res.plan_u)))
    return EXIT_OK


def _request(sc: Scenario, k: int, spec: str, workers: int) -> DrRequest:
    spec = spec.strip()
    if spec == "none":
        return NO_REQUEST
    if spec and all(part.strip().isdigit() for part in spec.split(",")):
        return request_from_indices(int(p) for p in spec.split(","))
    policy = RequestPolicy.parse(spec)
    res = assess(_assessment_problem(sc, k), workers=workers)
    if not res.feasible:
        raise InfeasibleProblem(f"assessment at step {k} is infeasible ({res.violation})")
    return make_request(res.window, policy)


def _dispatch_problem(sc: Scenario, k: int, request: DrRequest) -> DispatchProblem:
    x, history = state_at_step(sc, k)
    return DispatchProblem(
        horizon_n=sc.horizon_steps,
        state0=x,
        u_init=history[-1],
        demand_forecast=tuple(Disturbance(v) for v in sc.forecast(sc.demand_predicted, k)),
        price_forecast=tuple(sc.forecast(sc.price, k)),
        params=sc.params,
        temperature=sc.temperature,
        budget=sc.budget,
        input_history=history,
        request=request,
        m1_penalty=sc.m1_penalty,
        m2_penalty=sc.m2_penalty,
        start_index=k,
    )


def cmd_validate(sc: Scenario, args) -> int:
    assessments = [k for k in range(sc.n_steps) if sc.is_assessment_step(k)]
    print(f"scenario ok: {sc.n_steps} steps of {sc.step_hours!r} h from {sc.start_hour}, "
          f"controller {sc.controller}, P_rated {sc.params.p_rated} W, "
          f"{sc.params.effective_substeps} sub-steps per step, assessments at {assessments}")
    return EXIT_OK


def cmd_simulate(sc: Scenario, args) -> int:
    trace = run_closed_loop(sc)
    report = compute_kpis(trace, spec=sc.temperature)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trace(trace, out / "trace.csv")
    write_kpis({sc.controller: report}, out / "kpis.json")
    (out / "events.log").write_text("".join(e + "\n" for e in trace.events))
    for line in trace.events:
        print(line)
    print(kpi_table({sc.controller: report}), end="")
    return EXIT_OK


def cmd_compare(sc: Scenario, args) -> int:
    base, mpc, base_trace, mpc_trace = compare_controllers(sc, args.mpc)
    reports = {"rule_based": base, args.mpc: mpc}
    print(kpi_table(reports), end="")
    print(f"energy ratio {args.mpc}/rule_based: {mpc.relative_to_baseline[0]:.2f}%")
    print(f"cost ratio {args.mpc}/rule_based: {mpc.relative_to_baseline[1]:.2f}%")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trace(base_trace, out / "trace_rule_based.csv")
        write_trace(mpc_trace, out / f"trace_{args.mpc}.csv")
        write_kpis(reports, out / "kpis.json")
    return EXIT_OK


def cmd_assess(sc: Scenario, args) -> int:
    res = assess(_assessment_problem(sc, args.at_step), workers=sc.workers)
    return _print_assessment(res, f"assessment at step {args.at_step}")


def cmd_oracle(sc: Scenario, args) -> int:
    if sc.horizon_steps > ORACLE_MAX_HORIZON:
        raise ScenarioError(f"oracle enumeration limited to horizon_steps <= {ORACLE_MAX_HORIZON}")
    if args.request is None:
        res = exhaustive_assess(_assessment_problem(sc, args.at_step))
        return _print_assessment(res, f"oracle assessment at step {args.at_step}")
    request = _request(sc, args.at_step, args.request, sc.workers)
    res = exhaustive_dispatch(_dispatch_problem(sc, args.at_step, request))
    _print_dispatch(res)
    return EXIT_OK


def _print_dispatch(res) -> None:
    print("plan u = " + "".join(map(str, res.plan_u)))
    print(f"delta1 = {res.slacks.delta1!r}, delta2 = {res.slacks.delta2!r}")
    print(f"objective = {res.objective!r}, energy cost = {res.energy_cost!r} EUR")


def cmd_dispatch(sc: Scenario, args) -> int:
    request = _request(sc, args.at_step, args.request, sc.workers)
    print("request R = {" + ", ".join(map(str, sorted(request.indices))) + "}")
    _print_dispatch(dispatch(_dispatch_problem(sc, args.at_step, request)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hptes-flex",
        description="Flexibility assessment and demand-response dispatch for a heat pump hot water system.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver events")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("scenario", help="scenario JSON file")
        p.add_argument("--workers", type=int, help="processes for the assessment search")
        p.add_argument("--controller", choices=CONTROLLERS, help="override the scenario controller")
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "run the closed loop and write trace and KPIs")
    p.add_argument("--out-dir", default="out", help="output directory (default: out)")
    p = add("assess", cmd_assess, "one flexibility assessment")
    p.add_argument("--at-step", type=int, default=0)
    p = add("dispatch", cmd_dispatch, "one dispatch with a DR request")
    p.add_argument("--at-step", type=int, default=0)
    p.add_argument("--request", required=True,
                   help="none, explicit steps like 3,4,5, or a policy applied to the assessment "
                        "at the same step: full, prefix:K, random:SEED:K")
    p = add("compare", cmd_compare, "rule-based baseline against an MPC controller")
    p.add_argument("--mpc", choices=CONTROLLERS[:2], default="mpc_with_dr")
    p.add_argument("--out-dir", help="also write traces and KPIs here")
    add("validate", cmd_validate, "check the scenario and its data files")
    p = add("oracle", cmd_oracle, "exhaustive enumeration (small horizons only)")
    p.add_argument("--at-step", type=int, required=True)
    p.add_argument("--request", help="enumerate the dispatch problem for this request instead")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        sc = load_scenario(args.scenario)
        overrides = {}
        if args.workers is not None:
            if args.workers < 1:
                raise ScenarioError("--workers must be at least 1")
            overrides["workers"] = args.workers
        if args.controller:
            overrides["controller"] = args.controller
        if overrides:
            sc = replace(sc, **overrides)
        return args.func(sc, args)
    except InfeasibleProblem as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
