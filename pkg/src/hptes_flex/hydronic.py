"""Discrete-time plant model of the heat pump / two-tank hot water system.

State layout (all temperatures in degC):

    x1  inlet temperature of the tanks (heat exchanger outlet pipe)
    x2  outlet temperature of the tanks (heat pump loop return)
    x3  top layer of tank 1 (the supply temperature T1)
    x4  bottom layer of tank 1
    x5..x8  layers of tank 2, top to bottom

Parameters are stored in engineering units (hours, kg/h, J/(kg K), W/K, kg,
degC, W).  They are converted to SI once, when the
parameter object is built, and every update below runs in seconds, kg/s and W.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

SECONDS_PER_HOUR = 3600.0

T1_INDEX = 2
"""Index of the top layer of tank 1 (x3) inside a :class:`StateVector`."""

TANK_BOTTOM_INDEX = 7
"""Index of the bottom layer of tank 2 (x8), the heat pump loop suction."""

MODEL_VARIANTS = ("corrected", "literal")


class StateVector(NamedTuple):
    x1: float
    x2: float
    x3: float
    x4: float
    x5: float
    x6: float
    x7: float
    x8: float

    @classmethod
    def uniform(cls, temperature: float) -> "StateVector":
        return cls(*([float(temperature)] * 8))

    @property
    def t1(self) -> float:
        return self.x3

    def is_plausible(self) -> bool:
        """Sanity band used by the simulator, not an optimisation constraint."""
        return all(math.isfinite(v) and 0.0 < v < 100.0 for v in self)


class Disturbance(NamedTuple):
    mdot_s: float = 0.0  # hot water draw-off, kg/h
    t_amb_override: Optional[float] = None


class _SiCoefficients(NamedTuple):
    substeps: int
    h: float  # sub-step length, s
    mdot_p: float  # kg/s
    mdot_c: float  # kg/s
    k_pipe: float  # h / (m_pipe cp), K/J
    k1: float
    k2: float
    k3: float
    k4: float
    k5: float
    k6: float


@dataclass(frozen=True)
class PlantParameters:
    """Physical constants of the installation.

    Every default is the nominal value of the installation studied in the
    reference case.  ``p_rated`` (rated electrical power of the heat pump, W)
    has no nominal value and must always be given.

    ``substeps`` splits each sampling interval into that many forward-Euler
    sub-steps of the same update.  ``None`` picks the smallest count for which
    every layer update is a convex combination (no overshoot); ``1`` is the
    plain single-step update.

    ``variant="literal"`` starts the x5 and x6 updates from x7 and x8 instead
    of their own previous values; the default uses the usual Euler form.
    """

    p_rated: float
    dt: float = 1.0 / 3.0  # h
    cp: float = 4186.0  # J/(kg K)
    r_pipe: float = 0.30  # W/K
    r_pipe_upper: float = 0.0
    r_pipe_bottom: float = 2.0
    r12: float = 0.24
    r23: float = 0.24
    r34: float = 0.49
    r45: float = 0.54
    r56: float = 0.53
    m_pipe: float = 3.27  # kg
    m1: float = 250.0
    m2: float = 250.0
    m3: float = 169.66
    m4: float = 95.38
    m5: float = 136.67
    m6: float = 98.29
    dT_he: float = 2.84  # degC
    dT_c: float = 1.76
    t_s: float = 13.0
    dT_off: float = 2.5
    t_amb: float = 18.5
    mdot_c: float = 1100.0  # kg/h
    mdot_p: float = 880.0  # kg/h
    a1: float = 3.3297
    a2: float = -0.0423
    a3: float = 0.0219
    a4: float = 0.0003
    variant: str = "corrected"
    substeps: Optional[int] = None
    _si: _SiCoefficients = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name in ("dt", "cp", "m_pipe", "m1", "m2", "m3", "m4", "m5", "m6", "mdot_c", "mdot_p"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be strictly positive, got {value!r}")
        for name in ("r_pipe", "r_pipe_upper", "r_pipe_bottom", "r12", "r23", "r34", "r45", "r56"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be non-negative, got {value!r}")
        if not (math.isfinite(self.p_rated) and self.p_rated > 0):
            raise ValueError(f"p_rated must be strictly positive (W), got {self.p_rated!r}")
        if self.mdot_p > self.mdot_c:
            raise ValueError("mdot_p must not exceed mdot_c")
        if self.variant not in MODEL_VARIANTS:
            raise ValueError(f"variant must be one of {MODEL_VARIANTS}, got {self.variant!r}")
        if self.substeps is not None and (not isinstance(self.substeps, int) or self.substeps < 1):
            raise ValueError(f"substeps must be a positive integer or None, got {self.substeps!r}")
        object.__setattr__(self, "_si", self._derive_si())

    def _derive_si(self) -> _SiCoefficients:
        dt_s = self.dt * SECONDS_PER_HOUR
        mdot_p = self.mdot_p / SECONDS_PER_HOUR
        mdot_c = self.mdot_c / SECONDS_PER_HOUR
        n = self.substeps
        if n is None:
            n = max(1, math.ceil(self.max_update_gain() - 1e-12))
        h = dt_s / n
        cp = self.cp
        return _SiCoefficients(
            substeps=n,
            h=h,
            mdot_p=mdot_p,
            mdot_c=mdot_c,
            k_pipe=h / (self.m_pipe * cp),
            k1=h / (self.m1 * cp),
            k2=h / (self.m2 * cp),
            k3=h / (self.m3 * cp),
            k4=h / (self.m4 * cp),
            k5=h / (self.m5 * cp),
            k6=h / (self.m6 * cp),
        )

    def max_update_gain(self) -> float:
        """Largest total outflow coefficient of any node over one full interval.

        A value above 1 means the single-step update overshoots; above 2 it
        amplifies layer differences from step to step.
        """
        dt_s = self.dt * SECONDS_PER_HOUR
        flow = self.mdot_p / SECONDS_PER_HOUR * self.cp
        r = (0.0, self.r12, self.r23, self.r34, self.r45, self.r56, 0.0)
        masses = (self.m1, self.m2, self.m3, self.m4, self.m5, self.m6)
        gains = [
            dt_s * (flow + r[i] + r[i + 1]) / (m * self.cp) for i, m in enumerate(masses)
        ]
        gains.append(
            dt_s * (self.r_pipe + self.r_pipe_upper + self.r_pipe_bottom) / (self.m_pipe * self.cp)
        )
        return max(gains)

    @property
    def effective_substeps(self) -> int:
        return self._si.substeps

    @property
    def energy_per_on_step_kwh(self) -> float:
        return self.p_rated / 1000.0 * self.dt


def cop(t_in_hp: float, t_amb: float, params: PlantParameters) -> float:
    """Bilinear coefficient of performance; not clamped."""
    return params.a1 + params.a2 * t_in_hp + params.a3 * t_amb + params.a4 * t_in_hp * t_amb


def hp_heat_output(u: int, t_in_hp: float, params: PlantParameters, t_amb: Optional[float] = None) -> float:
    """Thermal output of the heat pump in W (zero when off)."""
    _check_binary(u, "u")
    if not u:
        return 0.0
    amb = params.t_amb if t_amb is None else t_amb
    return cop(t_in_hp, amb, params) * params.p_rated


def hp_inlet_temperature(state: StateVector, params: PlantParameters) -> float:
    return params.dT_he + state[1]


def _check_binary(value, name: str) -> None:
    if isinstance(value, bool):
        return
    if value not in (0, 1) or not isinstance(value, (int, float)):
        raise ValueError(f"{name} must be binary (0 or 1), got {value!r}")


def check_disturbance(d: Disturbance, params: PlantParameters) -> None:
    ms = d.mdot_s
    if not (math.isfinite(ms) and 0.0 <= ms <= params.mdot_p):
        raise ValueError(
            f"mdot_s must lie in [0, mdot_p={params.mdot_p}] kg/h, got {ms!r}"
        )
    if d.t_amb_override is not None and not math.isfinite(d.t_amb_override):
        raise ValueError("t_amb_override must be finite")


def step(
    state: StateVector,
    u: int,
    u_prev: int,
    d: Disturbance,
    params: PlantParameters,
) -> StateVector:
    """Advance the plant by one sampling interval.

    Within each sub-step the return temperature x2 is evaluated first (it
    depends only on the current bottom layer), then x1, then the six layers.
    The switch-off drop on x3 is an event and is applied once per interval.
    """
    _check_binary(u, "u")
    _check_binary(u_prev, "u_prev")
    check_disturbance(d, params)
    u = int(u)
    u_prev = int(u_prev)

    si = params._si
    cp = params.cp
    t_s = params.t_s
    t_amb = params.t_amb if d.t_amb_override is None else d.t_amb_override
    mdot_p = si.mdot_p
    ms = d.mdot_s / SECONDS_PER_HOUR
    mix = d.mdot_s / params.mdot_p
    off = 1 - u
    down = (mdot_p - ms) * cp * u  # downward convection when the HP loop runs
    up = ms * cp * off  # upward displacement by the draw-off when it does not
    loop_loss = (si.mdot_c - ms) * cp * params.dT_c
    r12, r23, r34, r45, r56 = params.r12, params.r23, params.r34, params.r45, params.r56
    r_pipe, r_upper, r_bottom = params.r_pipe, params.r_pipe_upper, params.r_pipe_bottom
    literal = params.variant == "literal"
    k_pipe, k1, k2, k3, k4, k5, k6 = si.k_pipe, si.k1, si.k2, si.k3, si.k4, si.k5, si.k6

    x1, x2, x3, x4, x5, x6, x7, x8 = state
    for i in range(si.substeps):
        x2n = t_s * mix + x8 * (1.0 - mix)
        if u:
            t_in = params.dT_he + x2n
            q_hp = cop(t_in, t_amb, params) * params.p_rated
            x1n = x2n + q_hp / (mdot_p * cp)
        else:
            x1n = x1 - k_pipe * (
                r_pipe * (x1 - t_amb) + r_upper * (x1 - x3) + r_bottom * (x1 - x8)
            )
        x3n = x3 + k1 * (
            mdot_p * cp * (x1 - x3) * u
            - loop_loss
            - r12 * (x3 - x4)
            + up * (x4 - x3)
        )
        if i == 0:
            x3n += params.dT_off * (u - u_prev) * u_prev
        x4n = x4 + k2 * (down * (x3 - x4) + r12 * (x3 - x4) - r23 * (x4 - x5) + up * (x5 - x4))
        x5n = (x7 if literal else x5) + k3 * (
            down * (x4 - x5) + r23 * (x4 - x5) - r34 * (x5 - x6) + up * (x6 - x5)
        )
        x6n = (x8 if literal else x6) + k4 * (
            down * (x5 - x6) + r34 * (x5 - x6) - r45 * (x6 - x7) + up * (x7 - x6)
        )
        x7n = x7 + k5 * (down * (x6 - x7) + r45 * (x6 - x7) - r56 * (x7 - x8) + up * (x8 - x7))
        x8n = x8 + k6 * (down * (x7 - x8) + r56 * (x7 - x8) + up * (t_s - x8))
        x1, x2, x3, x4, x5, x6, x7, x8 = x1n, x2n, x3n, x4n, x5n, x6n, x7n, x8n
    return StateVector(x1, x2, x3, x4, x5, x6, x7, x8)


def rollout(
    state0: StateVector,
    inputs: Sequence[int],
    u_init: int,
    disturbances: Sequence[Disturbance],
    params: PlantParameters,
) -> list[StateVector]:
    """Return the states x_1..x_N reached by applying ``inputs`` from ``state0``."""
    if len(inputs) != len(disturbances):
        raise ValueError(
            f"inputs ({len(inputs)}) and disturbances ({len(disturbances)}) differ in length"
        )
    if not inputs:
        raise ValueError("rollout needs at least one input")
    out = []
    x = state0
    u_prev = u_init
    for k, (u, d) in enumerate(zip(inputs, disturbances)):
        try:
            x = step(x, u, u_prev, d, params)
        except ValueError as exc:
            raise ValueError(f"step {k}: {exc}") from exc
        out.append(x)
        u_prev = u
    return out
