"""Heat pump with stratified storage: flexibility assessment and DR dispatch."""

from .assessment import AssessmentProblem, AssessmentResult, InfeasibleProblem, assess, max_flex_window
from .constraints import (
    FlexibilityWindow,
    FlexLogicTriple,
    SlackPair,
    SwitchBudget,
    TemperatureConstraintSpec,
    check_flex_logic,
    switch_count,
)
from .dispatch import DispatchProblem, DispatchResult, DrRequest, HysteresisState, dispatch, make_request, rule_based_step
from .hydronic import Disturbance, PlantParameters, StateVector, cop, rollout, step
from .simulation import ClosedLoopTrace, KpiReport, Scenario, compare_controllers, compute_kpis, run_closed_loop

__version__ = "0.1.0"
