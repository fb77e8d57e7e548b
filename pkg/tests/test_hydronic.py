import math
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from hptes_flex.hydronic import (
    Disturbance,
    PlantParameters,
    StateVector,
    cop,
    hp_heat_output,
    hp_inlet_temperature,
    rollout,
    step,
)

P = PlantParameters(p_rated=5000.0)
temps = st.floats(min_value=20.0, max_value=90.0)
states = st.builds(StateVector, *([temps] * 8))


def quiet(**kw):
    """No conduction, no loop loss."""
    base = dict(r_pipe=0.0, r_pipe_bottom=0.0, r12=0.0, r23=0.0, r34=0.0, r45=0.0, r56=0.0, dT_c=0.0)
    base.update(kw)
    return PlantParameters(p_rated=5000.0, **base)


def test_default_parameters():
    assert (P.r_pipe, P.r_pipe_bottom, P.r34, P.m3, P.m6) == (0.3, 2.0, 0.49, 169.66, 98.29)
    assert (P.mdot_c, P.mdot_p, P.dT_he, P.dT_c, P.dT_off, P.t_s, P.t_amb) == (1100, 880, 2.84, 1.76, 2.5, 13, 18.5)
    assert (P.a1, P.a2, P.a3, P.a4) == (3.3297, -0.0423, 0.0219, 0.0003)


def test_p_rated_required():
    with pytest.raises(TypeError):
        PlantParameters()


@pytest.mark.parametrize("field,value", [("m1", 0.0), ("cp", -1.0), ("r12", -0.1), ("p_rated", 0.0), ("mdot_p", 2000.0)])
def test_parameter_validation(field, value):
    with pytest.raises(ValueError):
        replace(P, **{field: value})


def test_cop_examples():
    assert cop(0.0, 0.0, P) == 3.3297
    assert cop(60.0, 18.5, P) == pytest.approx(1.52985, abs=1e-12)
    flat = replace(P, a2=0.0, a3=0.0, a4=0.0)
    assert cop(60.0, 18.5, flat) == 3.3297


def test_heat_output():
    assert hp_heat_output(0, 60.0, P) == 0.0
    assert hp_heat_output(1, 60.0, P) == pytest.approx(1.52985 * 5000.0)
    unit = replace(P, a1=1.0, a2=0.0, a3=0.0, a4=0.0)
    assert hp_heat_output(1, 42.0, unit) == 5000.0
    with pytest.raises(ValueError):
        hp_heat_output(2, 60.0, P)


def test_inlet_temperature():
    x = StateVector(0, 57.16, 0, 0, 0, 0, 0, 0)
    assert hp_inlet_temperature(x, P) == pytest.approx(60.0)
    assert hp_inlet_temperature(StateVector.uniform(0.0), replace(P, dT_he=0.0)) == 0.0
    assert hp_inlet_temperature(StateVector(0, 60, 0, 0, 0, 0, 0, 0), P) == pytest.approx(62.84)


def test_si_conversion_sentinel():
    # the h/(m cp) factors carry seconds; flows arrive in kg/h
    assert P._si.mdot_p == 880.0 / 3600.0
    assert P._si.h * P.effective_substeps == pytest.approx(1200.0)


def test_auto_substeps_and_literal_single_step():
    assert P.max_update_gain() > 3.0
    assert P.effective_substeps == math.ceil(P.max_update_gain())
    assert replace(P, substeps=1).effective_substeps == 1


def test_layers_fixed_without_flows():
    p = quiet()
    x = StateVector(61, 62, 63, 64, 65, 66, 67, 68)
    y = step(x, 0, 0, Disturbance(0.0), p)
    assert y[2:] == x[2:]


def test_switch_off_drop():
    p = quiet()
    x = StateVector.uniform(65.0)
    y = step(x, 0, 1, Disturbance(0.0), p)
    assert y.x3 == pytest.approx(65.0 - 2.5, abs=1e-12)
    assert y[3:] == x[3:]


def test_cold_supply_cools_bottom():
    y = step(StateVector.uniform(60.0), 0, 0, Disturbance(100.0), P)
    assert y.x8 < 60.0


def test_heat_pump_heats_top():
    x = StateVector.uniform(55.0)
    assert step(x, 1, 1, Disturbance(50.0), P).x3 > step(x, 0, 0, Disturbance(50.0), P).x3


def test_rejects_bad_inputs():
    x = StateVector.uniform(60.0)
    with pytest.raises(ValueError):
        step(x, 2, 0, Disturbance(0.0), P)
    with pytest.raises(ValueError):
        step(x, 0, 0, Disturbance(-1.0), P)
    with pytest.raises(ValueError):
        step(x, 0, 0, Disturbance(P.mdot_p + 1), P)


def test_literal_variant_differs():
    x = StateVector(60, 60, 70, 68, 66, 64, 62, 58)
    lit = replace(P, variant="literal", substeps=1)
    cor = replace(P, substeps=1)
    assert step(x, 0, 0, Disturbance(0.0), lit).x5 != step(x, 0, 0, Disturbance(0.0), cor).x5


def test_rollout_errors_name_step():
    with pytest.raises(ValueError, match="step 1"):
        rollout(StateVector.uniform(60), [0, 0], 0, [Disturbance(0), Disturbance(-5)], P)
    with pytest.raises(ValueError):
        rollout(StateVector.uniform(60), [0], 0, [], P)


def test_rollout_single_and_constant():
    x = StateVector.uniform(60.0)
    assert rollout(x, [1], 0, [Disturbance(30.0)], P) == [step(x, 1, 0, Disturbance(30.0), P)]
    p = quiet()
    traj = rollout(x, [0] * 5, 0, [Disturbance(0.0)] * 5, p)
    assert all(s[2:] == x[2:] for s in traj)


@settings(max_examples=60, deadline=None)
@given(states, st.lists(st.integers(0, 1), min_size=1, max_size=8), st.integers(0, 1), st.data())
def test_rollout_is_iterated_step(x0, inputs, u_init, data):
    ds = [Disturbance(data.draw(st.floats(0.0, 880.0))) for _ in inputs]
    x, prev, expected = x0, u_init, []
    for u, d in zip(inputs, ds):
        x = step(x, u, prev, d, P)
        expected.append(x)
        prev = u
    assert rollout(x0, inputs, u_init, ds, P) == expected


@settings(max_examples=60, deadline=None)
@given(states, st.floats(0.0, 880.0), st.integers(0, 1))
def test_off_mode_ignores_heat_pump_parameters(x, ms, u_prev):
    other = replace(P, p_rated=12345.0, a1=1.0, a2=0.1, a3=-0.2, a4=0.0)
    assert step(x, 0, u_prev, Disturbance(ms), P) == step(x, 0, u_prev, Disturbance(ms), other)


@settings(max_examples=60, deadline=None)
@given(states, st.floats(0.0, 880.0), st.integers(0, 1), st.integers(0, 1))
def test_mixing_is_convex_single_step(x, ms, u, u_prev):
    p = replace(P, substeps=1)
    y = step(x, u, u_prev, Disturbance(ms), p)
    assert min(p.t_s, x.x8) - 1e-9 <= y.x2 <= max(p.t_s, x.x8) + 1e-9
