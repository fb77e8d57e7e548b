"""Constraint predicates shared by the optimisers and the simulator.

Only the supply temperature T1 (state x3) is constrained.  Switching and
flexibility-logic checks operate on plain 0/1 sequences and never touch
floating point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

from .hydronic import T1_INDEX, StateVector


@dataclass(frozen=True)
class TemperatureConstraintSpec:
    """Bounds on T1 in degC.

    ``assess_soft_floor`` makes the flexibility assessment treat the comfort
    floor ``t1_low_soft`` as hard, so a promised off-window never requires
    slack in the dispatch problem.
    """

    t1_low_hard: float = 55.0
    t1_high_hard: float = 75.0
    t1_low_soft: float = 60.0
    monitored_state_index: int = T1_INDEX
    assess_soft_floor: bool = True

    def __post_init__(self) -> None:
        if not self.t1_low_hard < self.t1_low_soft < self.t1_high_hard:
            raise ValueError(
                "temperature bounds must satisfy t1_low_hard < t1_low_soft < t1_high_hard"
            )
        if not 0 <= self.monitored_state_index < 8:
            raise ValueError("monitored_state_index must index one of the 8 states")

    def assessment_bounds(self) -> tuple[float, float]:
        low = self.t1_low_soft if self.assess_soft_floor else self.t1_low_hard
        return low, self.t1_high_hard


@dataclass(frozen=True)
class SwitchBudget:
    window_m: int = 8
    max_switches: int = 1

    def __post_init__(self) -> None:
        if self.window_m < 1 or self.max_switches < 1:
            raise ValueError("window_m and max_switches must both be at least 1")


class SlackPair(NamedTuple):
    delta1: float = 0.0  # breach of the hard band
    delta2: float = 0.0  # breach of the comfort floor


@dataclass(frozen=True)
class FlexibilityWindow:
    """Steps during which the heat pump is promised off.

    ``indices`` is a subset of ``assess_indices``; both use the same time
    frame (absolute step numbers in the closed loop).
    """

    indices: tuple[int, ...] = ()
    assess_indices: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "indices", tuple(sorted(int(i) for i in self.indices)))
        object.__setattr__(self, "assess_indices", tuple(int(i) for i in self.assess_indices))
        if not set(self.indices) <= set(self.assess_indices):
            raise ValueError("flexibility window must lie inside the assessment period")

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, t: object) -> bool:
        return t in self.indices

    @property
    def start(self) -> Optional[int]:
        return self.indices[0] if self.indices else None

    def is_contiguous(self) -> bool:
        idx = self.indices
        return all(b == a + 1 for a, b in zip(idx, idx[1:]))

    def shifted(self, offset: int) -> "FlexibilityWindow":
        return FlexibilityWindow(
            tuple(i + offset for i in self.indices),
            tuple(i + offset for i in self.assess_indices),
        )


@dataclass(frozen=True)
class FlexLogicTriple:
    u: tuple[int, ...]
    s: tuple[int, ...]
    z: tuple[int, ...]

    def __post_init__(self) -> None:
        if not len(self.u) == len(self.s) == len(self.z):
            raise ValueError("u, s and z must have equal length")
        for name in ("u", "s", "z"):
            seq = tuple(int(v) for v in getattr(self, name))
            if any(v not in (0, 1) for v in seq):
                raise ValueError(f"{name} must be binary")
            object.__setattr__(self, name, seq)


class FlexCheck(NamedTuple):
    satisfied: bool
    violations: list[tuple[str, int]]


def switch_count(
    sequence: Sequence[int],
    at: int,
    budget: SwitchBudget,
    pad: Optional[int] = None,
) -> int:
    """Number of on/off changes among the ``budget.window_m`` pairs ending at ``at``.

    The pairs are (u[j-1], u[j]) for j in at-m+1..at.  Positions before the
    start of ``sequence`` take the value ``pad`` (default: ``sequence[0]``).
    """
    if not sequence:
        return 0
    if at < 0 or at >= len(sequence):
        raise IndexError(f"at={at} outside sequence of length {len(sequence)}")
    fill = sequence[0] if pad is None else pad

    def value(j: int) -> int:
        return sequence[j] if j >= 0 else fill

    return sum(
        1 for j in range(at - budget.window_m + 1, at + 1) if value(j) != value(j - 1)
    )


def switching_ok(
    sequence: Sequence[int],
    budget: SwitchBudget,
    first: int = 0,
    pad: Optional[int] = None,
) -> bool:
    """True if every window ending at index ``first`` or later is within budget."""
    return all(
        switch_count(sequence, t, budget, pad) <= budget.max_switches
        for t in range(first, len(sequence))
    )


def check_flex_logic(triple: FlexLogicTriple) -> FlexCheck:
    """Evaluate the four flexibility-logic inequality families.

    Tags: ``off_in_window`` (u <= 1 - s), ``exclusive`` (s + z <= 1),
    ``no_restart`` (s[t+1] >= s[t] - z[t+1]) and ``after_absorbing``
    (z[t+1] >= z[t]).  The index reported for the coupling families is the
    later one of the pair.
    """
    u, s, z = triple.u, triple.s, triple.z
    violations: list[tuple[str, int]] = []
    for t in range(len(u)):
        if u[t] > 1 - s[t]:
            violations.append(("off_in_window", t))
        if s[t] + z[t] > 1:
            violations.append(("exclusive", t))
        if t > 0:
            if s[t] < s[t - 1] - z[t]:
                violations.append(("no_restart", t))
            if z[t] < z[t - 1]:
                violations.append(("after_absorbing", t))
    return FlexCheck(not violations, violations)


def flex_logic_for_window(
    u: Sequence[int], window: Iterable[int], t_indices: Sequence[int]
) -> FlexLogicTriple:
    """Build the (s, z) certificate for a contiguous window: z marks steps after it."""
    members = set(window)
    s = tuple(1 if t in members else 0 for t in t_indices)
    last = max(members) if members else None
    z = tuple(1 if last is not None and t > last else 0 for t in t_indices)
    return FlexLogicTriple(tuple(u), s, z)


def extract_flex_window(s: Sequence[int], t_indices: Sequence[int]) -> FlexibilityWindow:
    if len(s) != len(t_indices):
        raise ValueError("s and t_indices must have equal length")
    return FlexibilityWindow(
        tuple(t for t, flag in zip(t_indices, s) if flag), tuple(t_indices)
    )


def t1_series(trajectory: Iterable[StateVector], spec: TemperatureConstraintSpec) -> list[float]:
    idx = spec.monitored_state_index
    return [x[idx] for x in trajectory]


def slack_requirement(
    trajectory: Sequence[StateVector], spec: TemperatureConstraintSpec
) -> SlackPair:
    """Smallest scalar slacks that make every T1 sample satisfy the soft bounds."""
    if not trajectory:
        raise ValueError("trajectory must not be empty")
    t1 = t1_series(trajectory, spec)
    lo, hi = min(t1), max(t1)
    delta1 = max(0.0, spec.t1_low_hard - lo, hi - spec.t1_high_hard)
    delta2 = max(0.0, spec.t1_low_soft - lo)
    return SlackPair(delta1, delta2)


def within_bounds(
    trajectory: Iterable[StateVector], low: float, high: float, index: int = T1_INDEX
) -> bool:
    return all(low <= x[index] <= high for x in trajectory)


def instantaneous_violation(t1: float, spec: TemperatureConstraintSpec) -> float:
    """Worst breach of the hard band or the comfort floor at one sample."""
    return max(
        0.0,
        spec.t1_low_hard - t1,
        t1 - spec.t1_high_hard,
        spec.t1_low_soft - t1,
    )
