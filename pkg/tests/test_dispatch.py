import random
from dataclasses import replace

import pytest

from hptes_flex.assessment import InfeasibleProblem, assess
from hptes_flex.constraints import FlexibilityWindow, SlackPair, slack_requirement, switching_ok
from hptes_flex.dispatch import (
    NO_REQUEST,
    DispatchProblem,
    DrRequest,
    HysteresisState,
    RequestPolicy,
    dispatch,
    make_request,
    request_from_indices,
    rule_based_step,
)
from hptes_flex.hydronic import Disturbance, PlantParameters, StateVector, rollout
from hptes_flex.oracle import exhaustive_dispatch
from scenario_gen import matching_dispatch, random_assessment

P = PlantParameters(p_rated=6000.0)


def problem(temp=70.0, n=5, demand=60.0, price=0.1, **kw):
    return DispatchProblem(
        horizon_n=n,
        state0=StateVector.uniform(temp),
        u_init=0,
        demand_forecast=[Disturbance(demand)] * n,
        price_forecast=[price] * n,
        params=P,
        **kw,
    )


def full_request(n):
    ids = tuple(range(n))
    return DrRequest(frozenset(ids), FlexibilityWindow(ids, ids))


def test_fully_pinned_plan_is_all_off():
    pr = problem(temp=62.0, n=6, demand=200.0, request=full_request(6))
    res = dispatch(pr)
    assert res.plan_u == (0,) * 6
    traj = rollout(pr.state0, res.plan_u, 0, pr.demand_forecast, P)
    d = slack_requirement(traj, pr.temperature)
    assert res.slacks == d and d.delta2 > 0
    assert res.objective == 1e3 * d.delta1 + 1e2 * d.delta2


def test_free_energy_hot_tank_costs_nothing():
    res = dispatch(problem(temp=72.0, n=3, price=0.0))
    assert res.objective == 0.0 and res.slacks == SlackPair(0.0, 0.0)


def test_off_preferred_on_ties():
    res = dispatch(problem(temp=72.0, n=3, price=0.0))
    assert res.plan_u == (0, 0, 0)


def test_cold_tank_turns_on():
    res = dispatch(problem(temp=61.0, n=6, demand=150.0))
    assert res.plan_u[0] == 1


def test_pinned_and_switching_infeasible():
    pr = replace(problem(), u_init=1, input_history=(0, 1), request=request_from_indices([0]))
    with pytest.raises(InfeasibleProblem):
        dispatch(pr)


def test_penalty_validation():
    with pytest.raises(ValueError):
        problem(m1_penalty=10.0, m2_penalty=100.0)
    with pytest.raises(ValueError):
        problem(m2_penalty=0.0)


def test_request_outside_horizon_is_ignored():
    pr = problem(request=request_from_indices([40, 41]))
    assert pr.pinned() == [False] * 5


def test_request_must_lie_in_window():
    with pytest.raises(ValueError):
        DrRequest(frozenset({7}), FlexibilityWindow((4, 5, 6), (4, 5, 6)))
    assert len(NO_REQUEST) == 0


def test_make_request_policies():
    w = FlexibilityWindow((4, 5, 6), tuple(range(9)))
    assert make_request(w, "full").indices == {4, 5, 6}
    assert make_request(w, "prefix:0").indices == frozenset()
    assert make_request(w, "prefix:2").indices == {4, 5}
    a = make_request(w, "random:7:2")
    assert len(a) == 2 and a.indices <= {4, 5, 6}
    assert make_request(w, "random:7:2") == a
    with pytest.raises(ValueError):
        make_request(w, "prefix:4")
    with pytest.raises(ValueError):
        RequestPolicy.parse("most")
    assert str(RequestPolicy.parse("random:3:1")) == "random:3:1"


def test_hysteresis_examples():
    h = HysteresisState()
    hot_bottom = StateVector(0, 0, 50, 0, 0, 0, 0, 63)
    assert rule_based_step(h, hot_bottom)[0] == 0
    assert rule_based_step(replace(h, mode=1), hot_bottom)[0] == 0
    assert rule_based_step(h, StateVector(0, 0, 61, 0, 0, 0, 0, 60))[0] == 1
    u, h2 = rule_based_step(replace(h, mode=1), StateVector(0, 0, 63, 0, 0, 0, 0, 60))
    assert u == 1 and h2.mode == 1
    assert rule_based_step(h, StateVector(0, 0, 63, 0, 0, 0, 0, 60))[0] == 0
    with pytest.raises(ValueError):
        HysteresisState(on_threshold=80.0)


def test_matches_oracle_with_requests():
    rng = random.Random(21)
    for _ in range(25):
        pa = random_assessment(rng, n_max=7, stratified=True)
        res = assess(pa)
        window = res.window if res.feasible else FlexibilityWindow((), res.window.assess_indices)
        pd = matching_dispatch(pa, window, rng)
        try:
            a = dispatch(pd)
        except InfeasibleProblem:
            with pytest.raises(ValueError):
                exhaustive_dispatch(pd)
            continue
        b = exhaustive_dispatch(pd)
        assert a.plan_u == b.plan_u and a.objective == b.objective and a.slacks == b.slacks


def test_pins_and_budget_hold_and_burden_is_monotone():
    rng = random.Random(4)
    for _ in range(40):
        pa = random_assessment(rng, n_max=7, stratified=True)
        res = assess(pa)
        if not res.feasible or not res.window.indices:
            continue
        pd = matching_dispatch(pa, res.window, rng)
        out = dispatch(pd)
        assert all(out.plan_u[t - pd.start_index] == 0 for t in pd.request.indices)
        past = list(pd.past_inputs)
        assert switching_ok(past + list(out.plan_u), pd.budget, first=len(past))
        bigger = dispatch(replace(pd, request=make_request(res.window, "full")))
        assert bigger.objective >= out.objective - 1e-12
