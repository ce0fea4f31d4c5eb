"""Macro heat-flow decomposition from five specialized track-mode runs.

Run 1 tracks the measured indoor temperatures with everything on. Run 2 turns
the sun off, runs 3 and 4 hold two fixed indoor temperatures (sun off), run 5
holds the first fixed temperature with sun and internal gains off. Differences
of the delivered loads give the solar, indoor-history, outdoor-driven and
internal-gain flows; by construction they cancel run 1 exactly.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime

import numpy as np

from .engine import CP_AIR, RHO_AIR, BuildingModel, RunSpec, StateSpaceSystem, discretize, simulate
from .errors import ConfigError, DataError
from .timeseries import MeasuredDataset, TimeSeries, Unit, total

logger = logging.getLogger(__name__)

FLOW_NAMES = ("q_blc", "q_in", "q_sun", "q_lep")
MIN_WINDOW_HOURS = 24


def max_threads() -> int:
    try:
        return max(1, int(os.environ.get("EPE_THREADS", "0")) or (os.cpu_count() or 1))
    except ValueError:
        return 1


@dataclass(frozen=True)
class DecompositionConfig:
    t_fixed1: float = 20.0
    t_fixed2: float = 25.0
    window: tuple[datetime, datetime] | None = None

    def __post_init__(self):
        if self.t_fixed1 == self.t_fixed2:
            raise ConfigError("t_fixed1 and t_fixed2 must differ")


@dataclass(frozen=True)
class HeatFlowSet:
    """Building-summed macro flows plus the same flows per zone.

    Every flow is a heat gain to the air nodes (W). ``q1`` is the run-1 ideal
    load, so ``q_blc + q_in + q_sun + q_lep + q1 == 0``.
    """

    q_blc: TimeSeries
    q_in: TimeSeries
    q_sun: TimeSeries
    q_lep: TimeSeries
    q1: TimeSeries
    q_vent: TimeSeries | None = None
    q_inf: TimeSeries | None = None
    per_zone: dict[str, dict[str, TimeSeries]] = field(default_factory=dict)

    def __getitem__(self, name: str) -> TimeSeries:
        val = getattr(self, name)
        if val is None:
            raise KeyError(f"flow {name} not available")
        return val

    def __len__(self):
        return len(self.q1)

    @property
    def start(self):
        return self.q1.start

    @property
    def step(self):
        return self.q1.step

    def matrix(self, names=FLOW_NAMES) -> np.ndarray:
        return np.column_stack([self[n].values for n in names])

    def identity_residual(self) -> np.ndarray:
        return self.q_blc.values + self.q_in.values + self.q_sun.values + self.q_lep.values + self.q1.values

    def slice(self, start, stop) -> "HeatFlowSet":
        def cut(s):
            return None if s is None else s.slice(start, stop)

        return HeatFlowSet(
            q_blc=cut(self.q_blc),
            q_in=cut(self.q_in),
            q_sun=cut(self.q_sun),
            q_lep=cut(self.q_lep),
            q1=cut(self.q1),
            q_vent=cut(self.q_vent),
            q_inf=cut(self.q_inf),
            per_zone={z: {k: v.slice(start, stop) for k, v in d.items()} for z, d in self.per_zone.items()},
        )

    def scaled(self, c: float) -> "HeatFlowSet":
        def sc(s):
            return None if s is None else s * c

        return HeatFlowSet(
            q_blc=sc(self.q_blc), q_in=sc(self.q_in), q_sun=sc(self.q_sun), q_lep=sc(self.q_lep), q1=sc(self.q1),
            q_vent=sc(self.q_vent), q_inf=sc(self.q_inf),
            per_zone={z: {k: v * c for k, v in d.items()} for z, d in self.per_zone.items()},
        )


def _runs(data: MeasuredDataset, cfg: DecompositionConfig) -> dict[str, RunSpec]:
    base = RunSpec(weather=data.weather, lep=data.lep, setpoints=data.t_in)
    return {
        "Q1": base,
        "Q2": replace(base, zero_solar=True),
        "Q3": replace(base, zero_solar=True, setpoints=None, fixed_temp_override=cfg.t_fixed1),
        "Q4": replace(base, zero_solar=True, setpoints=None, fixed_temp_override=cfg.t_fixed2),
        "Q5": replace(base, zero_solar=True, zero_lep=True, setpoints=None, fixed_temp_override=cfg.t_fixed1),
    }


def run_five(
    model: BuildingModel,
    data: MeasuredDataset,
    cfg: DecompositionConfig = DecompositionConfig(),
    system: StateSpaceSystem | None = None,
) -> dict[str, dict[str, TimeSeries]]:
    """Ideal loads of the five specialized runs, keyed ``Q1``..``Q5`` then zone."""
    if cfg.window is not None:
        data = data.slice(*cfg.window)
    data.require_zones(model.zone_names)
    hours = len(data.weather) * data.weather.step / 3600.0
    if hours < MIN_WINDOW_HOURS:
        raise DataError(f"decomposition window of {hours:g} h is shorter than {MIN_WINDOW_HOURS} h")
    system = system or discretize(model)
    specs = _runs(data, cfg)
    workers = min(len(specs), max_threads())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {k: pool.submit(simulate, system, s) for k, s in specs.items()}
            results = {k: f.result() for k, f in futures.items()}
    else:
        results = {k: simulate(system, s) for k, s in specs.items()}
    return {k: r.ideal_load for k, r in results.items()}


def _zone_flows(q: dict[str, TimeSeries], t_in: TimeSeries, cfg: DecompositionConfig) -> dict[str, TimeSeries]:
    q1, q2, q3, q4, q5 = (q[k].values for k in ("Q1", "Q2", "Q3", "Q4", "Q5"))
    span = cfg.t_fixed1 - cfg.t_fixed2
    w3 = (t_in.values - cfg.t_fixed2) / span
    w4 = (cfg.t_fixed1 - t_in.values) / span
    q_sun = q2 - q1
    q_in = -q2 + q3 * w3 + q4 * w4
    q_blc = -q2 + q3 - q5 - q_in
    q_lep = -q3 + q5
    ref = q["Q1"]
    mk = lambda v: TimeSeries(ref.start, ref.step, v, Unit.W)  # noqa: E731
    return {"q_blc": mk(q_blc), "q_in": mk(q_in), "q_sun": mk(q_sun), "q_lep": mk(q_lep), "q1": mk(q1)}


def heat_flows(
    q: dict[str, dict[str, TimeSeries]],
    data: MeasuredDataset,
    cfg: DecompositionConfig = DecompositionConfig(),
) -> HeatFlowSet:
    zones = list(q["Q1"])
    if cfg.window is not None:
        data = data.slice(*cfg.window)
    per_zone = {}
    for z in zones:
        runs = {k: q[k][z] for k in ("Q1", "Q2", "Q3", "Q4", "Q5")}
        ref = runs["Q1"]
        for k, s in runs.items():
            if not s.aligned_with(ref):
                raise DataError(f"run {k} for zone {z!r} not aligned with Q1")
        t_in = data.t_in[z]
        if not t_in.aligned_with(ref):
            raise DataError(f"measured indoor temperature of zone {z!r} not aligned with the runs")
        per_zone[z] = _zone_flows(runs, t_in, cfg)
    summed = {name: total(per_zone[z][name] for z in zones) for name in (*FLOW_NAMES, "q1")}
    return HeatFlowSet(per_zone=per_zone, **summed)


def decompose(model, data, cfg=DecompositionConfig(), system=None) -> HeatFlowSet:
    return heat_flows(run_five(model, data, cfg, system), data, cfg)


def vent_infil_flows(
    model: BuildingModel,
    data: MeasuredDataset,
    ach_wind_coefficient: float = 0.0,
    ach_base: dict[str, float] | None = None,
) -> dict[str, TimeSeries | None]:
    """Ventilation and infiltration gains for the real-building path.

    Ventilation sums ``m_dot * cp * (T_mixed - T_return)`` over every fan with
    all three channels present; it is ``None`` when no fan is complete.
    Infiltration uses ``ACH = base + k * wind_speed`` per zone.
    """
    fans = sorted({k.split(".")[1] for k in data.channels if k.startswith("fan.") and k.count(".") >= 2})
    q_vent = None
    ref = data.weather.t_out
    for fan in fans:
        keys = [f"fan.{fan}.{c}" for c in ("mass_flow", "t_mixed", "t_return")]
        if not all(k in data.channels for k in keys):
            logger.warning("fan %s lacks one of mass_flow/t_mixed/t_return; skipped", fan)
            continue
        m, tm, tr = (data.channels[k].values for k in keys)
        q = TimeSeries(ref.start, ref.step, m * CP_AIR * (tm - tr), Unit.W)
        q_vent = q if q_vent is None else q_vent + q
    q_inf = None
    for z in model.zones:
        if z.name not in data.t_in or z.volume <= 0:
            continue
        base = z.infiltration_ach if ach_base is None else ach_base.get(z.name, z.infiltration_ach)
        ach = base + ach_wind_coefficient * data.weather.wind_speed.values
        dt = data.weather.t_out.values - data.t_in[z.name].values
        q = TimeSeries(ref.start, ref.step, RHO_AIR * CP_AIR * ach * z.volume / 3600.0 * dt, Unit.W)
        q_inf = q if q_inf is None else q_inf + q
    return {"q_vent": q_vent, "q_inf": q_inf}


def with_extra_flows(flows: HeatFlowSet, extra: dict[str, TimeSeries | None]) -> HeatFlowSet:
    return replace(flows, q_vent=extra.get("q_vent"), q_inf=extra.get("q_inf"))
