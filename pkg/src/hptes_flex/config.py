"""Scenario files, demand/price CSVs and trace/KPI output formats.

Scenario document (JSON), all sections are objects and unknown keys are
rejected::

    time        step_hours [h], start_hour [h], end_hour [h], horizon_steps,
                assess_period_steps, assess_interval_steps
    plant       p_rated_w [W] (mandatory), model_variant (corrected|literal),
                substeps, and any plant parameter by its PlantParameters name
    initial     x1..x8 [degC] (mandatory), u_init (0|1)
    constraints t1_low_hard, t1_high_hard, t1_low_soft [degC], switch_window_m,
                n_ctrl, m1, m2 [EUR/degC], lambda [EUR/step], assess_soft_floor
    data        demand_csv, price_csv (paths relative to the scenario file)
    controller  mode, request_policy, hysteresis_on, hysteresis_off [degC],
                rule_respects_budget, include_operating_cost, workers

Flows stay in kg/h at this boundary; the plant converts to kg/s once when its
parameters are built.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from pathlib import Path
from typing import Any, Optional

from .constraints import SwitchBudget, TemperatureConstraintSpec
from .hydronic import MODEL_VARIANTS, PlantParameters, StateVector
from .simulation import CONTROLLERS, ClosedLoopTrace, KpiReport, Scenario, StepRecord

DEMAND_COLUMNS = ("step_index", "mdot_s_actual_kg_per_h", "mdot_s_predicted_kg_per_h")
PRICE_COLUMNS = ("step_index", "price_eur_per_kwh")
TRACE_COLUMNS = (
    "step", "hour", "x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8",
    "u", "mode", "in_F", "in_R", "energy_kwh", "cost_eur", "delta1", "delta2",
)
KPI_ROWS = (
    ("Average Water Temperature", "avg_t1", "degC"),
    ("Maximal Constraint violation", "max_violation", "degC"),
    ("Energy Consumption", "energy_kwh", "kWh"),
    ("Energy Cost", "cost_eur", "EUR"),
)

# plant parameters that live elsewhere in the document
_PLANT_RENAMED = {"p_rated": "p_rated_w", "variant": "model_variant", "dt": None}
_PLANT_UNITS = {
    "cp": "J/(kg K)", "m_pipe": "kg", "m1": "kg", "m2": "kg", "m3": "kg", "m4": "kg",
    "m5": "kg", "m6": "kg", "dT_he": "K", "dT_c": "K", "dT_off": "K", "t_s": "degC",
    "t_amb": "degC", "mdot_c": "kg/h", "mdot_p": "kg/h", "substeps": "count",
}


class ScenarioError(ValueError):
    """Invalid scenario document or data file."""


def _plant_keys() -> dict[str, str]:
    keys = {}
    for f in dataclasses.fields(PlantParameters):
        if not f.init:
            continue
        if f.name in _PLANT_RENAMED:
            renamed = _PLANT_RENAMED[f.name]
            if renamed:
                keys[renamed] = f.name
            continue
        keys[f.name] = f.name
    return keys


PLANT_KEYS = _plant_keys()

_SECTIONS = {
    "time": {
        "step_hours": "h", "start_hour": "h", "end_hour": "h", "horizon_steps": "steps",
        "assess_period_steps": "steps", "assess_interval_steps": "steps",
    },
    "plant": {k: _PLANT_UNITS.get(v, "W/K" if v.startswith("r") else "W" if k == "p_rated_w" else "-")
              for k, v in PLANT_KEYS.items()},
    "initial": {**{f"x{i}": "degC" for i in range(1, 9)}, "u_init": "0|1"},
    "constraints": {
        "t1_low_hard": "degC", "t1_high_hard": "degC", "t1_low_soft": "degC",
        "switch_window_m": "steps", "n_ctrl": "switches", "m1": "EUR/degC",
        "m2": "EUR/degC", "lambda": "EUR/step", "assess_soft_floor": "bool",
    },
    "data": {"demand_csv": "path", "price_csv": "path"},
    "controller": {
        "mode": "|".join(CONTROLLERS), "request_policy": "full|prefix:K|random:SEED:K",
        "hysteresis_on": "degC", "hysteresis_off": "degC", "rule_respects_budget": "bool",
        "include_operating_cost": "bool", "workers": "count",
    },
}


def _where(section: str, key: str) -> str:
    return f"{section}.{key} [{_SECTIONS[section][key]}]"


def _number(doc: dict, section: str, key: str, default=None, integer: bool = False):
    if key not in doc:
        if default is None:
            raise ScenarioError(f"missing required key {_where(section, key)}")
        return default
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{_where(section, key)} must be a number, got {value!r}")
    if integer:
        if float(value) != int(value):
            raise ScenarioError(f"{_where(section, key)} must be an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise ScenarioError(f"{_where(section, key)} must be finite, got {value!r}")
    return float(value)


def _flag(doc: dict, section: str, key: str, default: bool) -> bool:
    value = doc.get(key, default)
    if not isinstance(value, bool):
        raise ScenarioError(f"{_where(section, key)} must be true or false, got {value!r}")
    return value


def _text(doc: dict, section: str, key: str, default=None) -> str:
    if key not in doc:
        if default is None:
            raise ScenarioError(f"missing required key {_where(section, key)}")
        return default
    value = doc[key]
    if not isinstance(value, str):
        raise ScenarioError(f"{_where(section, key)} must be a string, got {value!r}")
    return value


def _section(doc: dict, name: str, required: bool) -> dict:
    if name not in doc:
        if required:
            raise ScenarioError(f"missing required section {name!r}")
        return {}
    sec = doc[name]
    if not isinstance(sec, dict):
        raise ScenarioError(f"section {name!r} must be an object")
    unknown = sorted(set(sec) - set(_SECTIONS[name]))
    if unknown:
        raise ScenarioError(f"unknown key {name}.{unknown[0]}; allowed: {', '.join(_SECTIONS[name])}")
    return sec


def read_demand_csv(path: str | os.PathLike) -> tuple[list[float], list[float]]:
    rows = _read_csv(path, DEMAND_COLUMNS)
    actual, predicted = [], []
    for line, row in rows:
        a = _csv_float(path, line, row, DEMAND_COLUMNS[1])
        p = _csv_float(path, line, row, DEMAND_COLUMNS[2])
        for col, v in ((DEMAND_COLUMNS[1], a), (DEMAND_COLUMNS[2], p)):
            if v < 0:
                raise ScenarioError(f"{path}:{line}: {col} must be >= 0 kg/h, got {v!r}")
        actual.append(a)
        predicted.append(p)
    return actual, predicted


def read_price_csv(path: str | os.PathLike) -> list[float]:
    return [_csv_float(path, line, row, PRICE_COLUMNS[1]) for line, row in _read_csv(path, PRICE_COLUMNS)]


def _read_csv(path, columns) -> list[tuple[int, dict]]:
    try:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or tuple(c.strip() for c in reader.fieldnames) != columns:
                raise ScenarioError(f"{path}: expected header {','.join(columns)}, got {reader.fieldnames}")
            rows = [(i + 2, {k.strip(): (v or "").strip() for k, v in r.items()}) for i, r in enumerate(reader)]
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror or exc}") from exc
    for expected, (line, row) in enumerate(rows):
        try:
            idx = int(row["step_index"])
        except ValueError:
            raise ScenarioError(f"{path}:{line}: step_index must be an integer") from None
        if idx != expected:
            raise ScenarioError(f"{path}:{line}: step_index must be contiguous from 0, got {idx}")
    return rows


def _csv_float(path, line: int, row: dict, col: str) -> float:
    try:
        value = float(row[col])
    except ValueError:
        raise ScenarioError(f"{path}:{line}: {col} is not a number: {row[col]!r}") from None
    if not math.isfinite(value):
        raise ScenarioError(f"{path}:{line}: {col} must be finite")
    return value


def scenario_from_dict(doc: Any, base_dir: str | os.PathLike = ".") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    unknown = sorted(set(doc) - set(_SECTIONS))
    if unknown:
        raise ScenarioError(f"unknown section {unknown[0]!r}; allowed: {', '.join(_SECTIONS)}")
    time = _section(doc, "time", False)
    plant = _section(doc, "plant", True)
    initial = _section(doc, "initial", True)
    cons = _section(doc, "constraints", False)
    data = _section(doc, "data", True)
    ctrl = _section(doc, "controller", False)

    defaults = PlantParameters(p_rated=1.0)
    kwargs: dict[str, Any] = {"p_rated": _number(plant, "plant", "p_rated_w")}
    kwargs["dt"] = _number(time, "time", "step_hours", defaults.dt)
    variant = _text(plant, "plant", "model_variant", defaults.variant)
    if variant not in MODEL_VARIANTS:
        raise ScenarioError(f"{_where('plant', 'model_variant')} must be one of {MODEL_VARIANTS}, got {variant!r}")
    kwargs["variant"] = variant
    if plant.get("substeps") is not None:
        kwargs["substeps"] = _number(plant, "plant", "substeps", integer=True)
    for key, name in PLANT_KEYS.items():
        if key in ("p_rated_w", "model_variant", "substeps"):
            continue
        kwargs[name] = _number(plant, "plant", key, getattr(defaults, name))
    try:
        params = PlantParameters(**kwargs)
    except ValueError as exc:
        raise ScenarioError(f"plant: {exc}") from exc

    state0 = StateVector(*(_number(initial, "initial", f"x{i}") for i in range(1, 9)))
    u_init = _number(initial, "initial", "u_init", 0, integer=True)
    if u_init not in (0, 1):
        raise ScenarioError(f"{_where('initial', 'u_init')} must be 0 or 1, got {u_init}")

    t_def = TemperatureConstraintSpec()
    b_def = SwitchBudget()
    try:
        temperature = TemperatureConstraintSpec(
            t1_low_hard=_number(cons, "constraints", "t1_low_hard", t_def.t1_low_hard),
            t1_high_hard=_number(cons, "constraints", "t1_high_hard", t_def.t1_high_hard),
            t1_low_soft=_number(cons, "constraints", "t1_low_soft", t_def.t1_low_soft),
            assess_soft_floor=_flag(cons, "constraints", "assess_soft_floor", t_def.assess_soft_floor),
        )
        budget = SwitchBudget(
            _number(cons, "constraints", "switch_window_m", b_def.window_m, integer=True),
            _number(cons, "constraints", "n_ctrl", b_def.max_switches, integer=True),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"constraints: {exc}") from exc

    base = Path(base_dir)
    demand_path = base / _text(data, "data", "demand_csv")
    price_path = base / _text(data, "data", "price_csv")
    actual, predicted = read_demand_csv(demand_path)
    price = read_price_csv(price_path)

    sc_def = Scenario.__dataclass_fields__
    try:
        scenario = Scenario(
            params=params,
            state0=state0,
            demand_actual=actual,
            demand_predicted=predicted,
            price=price,
            u_init=u_init,
            start_hour=_number(time, "time", "start_hour", sc_def["start_hour"].default),
            end_hour=_number(time, "time", "end_hour", sc_def["end_hour"].default),
            horizon_steps=_number(time, "time", "horizon_steps", sc_def["horizon_steps"].default, integer=True),
            assess_period_steps=_number(
                time, "time", "assess_period_steps", sc_def["assess_period_steps"].default, integer=True
            ),
            assess_interval_steps=_number(
                time, "time", "assess_interval_steps", sc_def["assess_interval_steps"].default, integer=True
            ),
            temperature=temperature,
            budget=budget,
            m1_penalty=_number(cons, "constraints", "m1", sc_def["m1_penalty"].default),
            m2_penalty=_number(cons, "constraints", "m2", sc_def["m2_penalty"].default),
            lam=_number(cons, "constraints", "lambda", sc_def["lam"].default),
            include_operating_cost=_flag(ctrl, "controller", "include_operating_cost", False),
            controller=_text(ctrl, "controller", "mode", sc_def["controller"].default),
            request_policy=_text(ctrl, "controller", "request_policy", "full"),
            hysteresis_on=_number(ctrl, "controller", "hysteresis_on", sc_def["hysteresis_on"].default),
            hysteresis_off=_number(ctrl, "controller", "hysteresis_off", sc_def["hysteresis_off"].default),
            rule_respects_budget=_flag(ctrl, "controller", "rule_respects_budget", False),
            workers=_number(ctrl, "controller", "workers", 1, integer=True),
        )
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    if scenario.lam < 0:
        raise ScenarioError(f"{_where('constraints', 'lambda')} must be >= 0")
    if scenario.workers < 1:
        raise ScenarioError(f"{_where('controller', 'workers')} must be >= 1")
    return scenario


def load_scenario(path: str | os.PathLike) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return scenario_from_dict(doc, path.parent)


def scenario_to_dict(scenario: Scenario, demand_csv: str, price_csv: str) -> dict:
    p = scenario.params
    plant: dict[str, Any] = {"p_rated_w": p.p_rated, "model_variant": p.variant}
    if p.substeps is not None:
        plant["substeps"] = p.substeps
    for key, name in PLANT_KEYS.items():
        if key not in plant and key not in ("p_rated_w", "model_variant", "substeps"):
            plant[key] = getattr(p, name)
    initial: dict[str, Any] = {f"x{i + 1}": v for i, v in enumerate(scenario.state0)}
    initial["u_init"] = scenario.u_init
    t = scenario.temperature
    return {
        "time": {
            "step_hours": p.dt,
            "start_hour": scenario.start_hour,
            "end_hour": scenario.end_hour,
            "horizon_steps": scenario.horizon_steps,
            "assess_period_steps": scenario.assess_period_steps,
            "assess_interval_steps": scenario.assess_interval_steps,
        },
        "plant": plant,
        "initial": initial,
        "constraints": {
            "t1_low_hard": t.t1_low_hard,
            "t1_high_hard": t.t1_high_hard,
            "t1_low_soft": t.t1_low_soft,
            "assess_soft_floor": t.assess_soft_floor,
            "switch_window_m": scenario.budget.window_m,
            "n_ctrl": scenario.budget.max_switches,
            "m1": scenario.m1_penalty,
            "m2": scenario.m2_penalty,
            "lambda": scenario.lam,
        },
        "data": {"demand_csv": demand_csv, "price_csv": price_csv},
        "controller": {
            "mode": scenario.controller,
            "request_policy": scenario.request_policy,
            "hysteresis_on": scenario.hysteresis_on,
            "hysteresis_off": scenario.hysteresis_off,
            "rule_respects_budget": scenario.rule_respects_budget,
            "include_operating_cost": scenario.include_operating_cost,
            "workers": scenario.workers,
        },
    }


def save_scenario(scenario: Scenario, path: str | os.PathLike) -> Path:
    """Write the scenario document plus ``<stem>_demand.csv`` and ``<stem>_price.csv`` beside it."""
    path = Path(path)
    demand_name = f"{path.stem}_demand.csv"
    price_name = f"{path.stem}_price.csv"
    try:
        with open(path.parent / demand_name, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(DEMAND_COLUMNS)
            for k, (a, p) in enumerate(zip(scenario.demand_actual, scenario.demand_predicted)):
                w.writerow([k, repr(a), repr(p)])
        with open(path.parent / price_name, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(PRICE_COLUMNS)
            for k, e in enumerate(scenario.price):
                w.writerow([k, repr(e)])
        path.write_text(json.dumps(scenario_to_dict(scenario, demand_name, price_name), indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write scenario to {path}: {exc.strerror or exc}") from exc
    return path


def shipped_scenario_path() -> Path:
    return Path(__file__).with_name("data") / "workday.json"


def _fmt(value: float) -> str:
    return repr(float(value))


def write_trace(trace: ClosedLoopTrace, path: str | os.PathLike) -> None:
    try:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in trace.records:
                w.writerow(
                    [r.step, _fmt(r.hour), *(_fmt(v) for v in r.state), r.u, r.mode,
                     int(r.in_f), int(r.in_r), _fmt(r.energy_kwh), _fmt(r.cost_eur),
                     _fmt(r.delta1), _fmt(r.delta2)]
                )
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc.strerror or exc}") from exc


def read_trace(path: str | os.PathLike) -> ClosedLoopTrace:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ScenarioError(f"{path}: not a trace file")
        records = [
            StepRecord(
                step=int(row["step"]),
                hour=float(row["hour"]),
                state=StateVector(*(float(row[f"x{i}"]) for i in range(1, 9))),
                u=int(row["u"]),
                mode=row["mode"],
                in_f=row["in_F"] == "1",
                in_r=row["in_R"] == "1",
                energy_kwh=float(row["energy_kwh"]),
                cost_eur=float(row["cost_eur"]),
                delta1=float(row["delta1"]),
                delta2=float(row["delta2"]),
            )
            for row in reader
        ]
    return ClosedLoopTrace(records=records)


def kpi_dict(report: KpiReport) -> dict:
    out = {
        "avg_t1_degC": report.avg_t1,
        "max_violation_degC": report.max_violation,
        "energy_kwh": report.energy_kwh,
        "cost_eur": report.cost_eur,
        "switch_total": report.switch_total,
    }
    if report.relative_to_baseline is not None:
        out["energy_percent_of_baseline"] = report.relative_to_baseline[0]
        out["cost_percent_of_baseline"] = report.relative_to_baseline[1]
    return out


def kpi_table(reports: dict[str, KpiReport]) -> str:
    """Plain-text table, one column per controller; relative values in brackets."""
    names = list(reports)
    header = ["KPI", "Unit", *names]
    rows = [header]
    for label, attr, unit in KPI_ROWS:
        cells = [label, unit]
        for name in names:
            rep = reports[name]
            text = f"{getattr(rep, attr):.2f}"
            if attr in ("energy_kwh", "cost_eur") and rep.relative_to_baseline is not None:
                pct = rep.relative_to_baseline[0 if attr == "energy_kwh" else 1]
                text += f" ({pct:.2f}%)"
            cells.append(text)
        rows.append(cells)
    rows.append(["Switches", "count", *(str(reports[n].switch_total) for n in names)])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_kpis(reports: KpiReport | dict[str, KpiReport], path: str | os.PathLike,
               table_path: Optional[str | os.PathLike] = None) -> None:
    """KPI document as JSON at ``path`` and the text table at ``table_path``
    (default: same name with a ``.txt`` suffix)."""
    if isinstance(reports, KpiReport):
        reports = {"controller": reports}
    path = Path(path)
    table_path = Path(table_path) if table_path else path.with_suffix(".txt")
    try:
        path.write_text(json.dumps({k: kpi_dict(v) for k, v in reports.items()}, indent=2) + "\n")
        table_path.write_text(kpi_table(reports))
    except OSError as exc:
        raise OSError(f"cannot write KPIs to {path}: {exc.strerror or exc}") from exc
