"""Stage 2: the shell becomes a process load; plant energy and plant parameters."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .decomposition import HeatFlowSet
from .errors import CapacityError, ConfigError, DataError, UnidentifiableError
from .estimation import ShellParameters, _known, predicted_load, window_mask
from .timeseries import TimeSeries, Unit, WeatherSeries

logger = logging.getLogger(__name__)

DEADBAND_W = 50.0
RATING_T_OUT = 35.0
RATING_W = 0.010
# envelope over which the temperature curve must stay positive
ENVELOPE_T = (-20.0, 50.0)
ENVELOPE_W = (0.0, 0.03)

# 1 - 0.012 (T-35) - 1e-4 (T-35)^2 - 8 (w-0.010), as (1, T, T^2, w, w^2, T*w)
DX_TEMP_CURVE = (1.3775, -0.005, -0.0001, -8.0, 0.0, 0.0)
FLAT_CURVE = (1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
DX_PLF = (0.15, 0.85)
BOILER_PLF = (0.0, 1.0)


def biquadratic(c, t, w):
    return c[0] + c[1] * t + c[2] * t * t + c[3] * w + c[4] * w * w + c[5] * t * w


@dataclass(frozen=True)
class HvacPlant:
    """A DX cooling unit or a boiler.

    ``temp_curve`` multiplies the rated COP (off-rated efficiency) and is a
    biquadratic in outdoor temperature and humidity ratio. ``plf_curve`` is the
    part-load fraction polynomial in PLR; efficiency is scaled by
    ``plr / plf(plr)``.
    """

    kind: str = "dx_cooling"
    rated_cop: float = 3.5
    rated_efficiency: float = 0.85
    capacity: float = 500_000.0
    temp_curve: tuple[float, ...] = DX_TEMP_CURVE
    plf_curve: tuple[float, ...] = DX_PLF
    max_unmet_fraction: float = 0.05

    def __post_init__(self):
        if self.kind not in ("dx_cooling", "boiler"):
            raise ConfigError(f"unknown plant kind {self.kind!r}")
        if self.kind == "dx_cooling" and not self.rated_cop > 0:
            raise ConfigError("rated_cop must be > 0")
        if self.kind == "boiler" and not 0 < self.rated_efficiency <= 1:
            raise ConfigError("rated_efficiency must lie in (0, 1]")
        if not self.capacity > 0:
            raise ConfigError("capacity must be > 0")
        if len(self.temp_curve) != 6:
            raise ConfigError("temp_curve needs 6 biquadratic coefficients")
        if not math.isclose(float(np.polyval(self.plf_curve[::-1], 1.0)), 1.0, abs_tol=1e-9):
            raise ConfigError("plf_curve(1) must equal 1")
        plr = np.linspace(0.01, 1.0, 100)
        if np.any(np.polyval(self.plf_curve[::-1], plr) <= 0):
            raise ConfigError("plf_curve must be positive on (0, 1]")
        tt, ww = np.meshgrid(np.linspace(*ENVELOPE_T, 36), np.linspace(*ENVELOPE_W, 16))
        if np.any(biquadratic(self.temp_curve, tt, ww) <= 0):
            raise ConfigError("temp_curve is not positive over the operating envelope")

    @classmethod
    def boiler(cls, efficiency=0.85, capacity=500_000.0, **kw) -> "HvacPlant":
        return cls(kind="boiler", rated_efficiency=efficiency, capacity=capacity,
                   temp_curve=FLAT_CURVE, plf_curve=BOILER_PLF, **kw)

    @property
    def fuel(self) -> str:
        return "electricity" if self.kind == "dx_cooling" else "gas"

    @property
    def rated(self) -> float:
        return self.rated_cop if self.kind == "dx_cooling" else self.rated_efficiency

    def with_rated(self, value: float) -> "HvacPlant":
        if self.kind == "dx_cooling":
            return replace(self, rated_cop=value)
        return replace(self, rated_efficiency=value)

    def plf_adjust(self, plr):
        plr = np.asarray(plr, dtype=float)
        return plr / np.polyval(self.plf_curve[::-1], plr)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "rated_cop": self.rated_cop, "rated_efficiency": self.rated_efficiency,
            "capacity": self.capacity, "temp_curve": list(self.temp_curve), "plf_curve": list(self.plf_curve),
            "max_unmet_fraction": self.max_unmet_fraction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HvacPlant":
        kind = d.get("kind", "dx_cooling")
        defaults = (DX_TEMP_CURVE, DX_PLF) if kind == "dx_cooling" else (FLAT_CURVE, BOILER_PLF)
        return cls(
            kind=kind,
            rated_cop=float(d.get("rated_cop", 3.5)),
            rated_efficiency=float(d.get("rated_efficiency", 0.85)),
            capacity=float(d.get("capacity", 500_000.0)),
            temp_curve=tuple(float(x) for x in d.get("temp_curve", defaults[0])),
            plf_curve=tuple(float(x) for x in d.get("plf_curve", defaults[1])),
            max_unmet_fraction=float(d.get("max_unmet_fraction", 0.05)),
        )


@dataclass(frozen=True)
class ProcessLoadBox:
    """Load the plant must meet (W, positive in the plant's service direction)."""

    load: TimeSeries
    plant: HvacPlant

    @classmethod
    def from_delivered(cls, q_hc: TimeSeries, plant: HvacPlant) -> "ProcessLoadBox":
        """From a delivered heat series (gain to air): cooling is negative, heating positive."""
        sign = -1.0 if plant.kind == "dx_cooling" else 1.0
        return cls(q_hc * sign, plant)


@dataclass
class PlantResult:
    energy: TimeSeries  # mean fuel/electric power over each step, W
    delivered: TimeSeries
    unmet: TimeSeries
    unmet_hours: int

    @property
    def unmet_fraction(self) -> float:
        return self.unmet_hours / max(len(self.energy), 1)


def simulate_plant(box: ProcessLoadBox, weather: WeatherSeries, deadband: float = DEADBAND_W) -> PlantResult:
    plant = box.plant
    if not box.load.aligned_with(weather.t_out):
        raise DataError("process load is not aligned with the weather")
    q = box.load.values
    served = np.where(q > deadband, q, 0.0)
    delivered = np.minimum(served, plant.capacity)
    unmet = served - delivered
    n_unmet = int(np.count_nonzero(unmet > 0))
    if n_unmet:
        logger.warning("plant capacity exceeded in %d of %d steps", n_unmet, len(q))
    if n_unmet > plant.max_unmet_fraction * len(q):
        raise CapacityError(
            f"load exceeds capacity {plant.capacity:g} W in {n_unmet} of {len(q)} steps "
            f"(allowed fraction {plant.max_unmet_fraction:g})"
        )
    curve = biquadratic(plant.temp_curve, weather.t_out.values, weather.humidity_ratio.values)
    if np.any(curve[delivered > 0] <= 0):
        raise ConfigError("temp_curve is non-positive at an operating point")
    plr = delivered / plant.capacity
    energy = np.zeros_like(delivered)
    on = delivered > 0
    energy[on] = delivered[on] / (plant.rated * curve[on] * plant.plf_adjust(plr[on]))
    ref = box.load
    return PlantResult(
        energy=TimeSeries(ref.start, ref.step, energy, Unit.W),
        delivered=TimeSeries(ref.start, ref.step, delivered, Unit.W),
        unmet=TimeSeries(ref.start, ref.step, unmet, Unit.W),
        unmet_hours=n_unmet,
    )


def plant_energy(box: ProcessLoadBox, weather: WeatherSeries, deadband: float = DEADBAND_W) -> TimeSeries:
    return simulate_plant(box, weather, deadband).energy


def reconciled_load(flows: HeatFlowSet, params: ShellParameters, net=None) -> TimeSeries:
    """Best estimate of delivered heat (gain to air): modified flows plus the learned residual."""
    q = predicted_load(flows, params)
    if net is not None:
        from .residual_net import net_inputs, predict

        q = q + predict(net, net_inputs(flows, params))
    return q


@dataclass
class CopEstimate:
    best: float
    grid: np.ndarray
    rmse: np.ndarray
    grid_best: float
    refined: bool = False

    def curve_rows(self) -> list[tuple[float, float]]:
        return list(zip(self.grid.tolist(), self.rmse.tolist()))


def default_cop_grid() -> np.ndarray:
    return np.round(np.arange(2.0, 6.0 + 1e-9, 0.025), 6)


def _golden(f, a, b, tol=1e-6, max_iter=100):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def _flat_guard(rmse: np.ndarray, what: str, scale: float = 0.0):
    """Relative RMSE variation below 1e-6 (relative to the data scale when the fit is near-exact)."""
    hi = float(np.max(rmse))
    ref = max(hi, scale)
    if ref == 0 or (hi - float(np.min(rmse))) / ref < 1e-6:
        raise UnidentifiableError(f"{what}: RMSE curve is flat, the parameter is not identifiable from this data")


def estimate_cop(
    box: ProcessLoadBox,
    weather: WeatherSeries,
    e_measured: TimeSeries,
    grid=None,
    refine: bool = True,
) -> CopEstimate:
    """Scan the rated COP (or boiler efficiency) for the value minimizing energy RMSE.

    Other plant curves stay at their defaults. The energy model is inversely
    proportional to the rated value, so one unit-rated simulation serves the
    whole grid.
    """
    grid = default_cop_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.size < 3 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ConfigError("grid must be increasing, positive and have at least 3 points")
    if not e_measured.aligned_with(box.load):
        raise DataError("measured energy not aligned with the process load")
    base = plant_energy(ProcessLoadBox(box.load, box.plant.with_rated(1.0)), weather).values
    e = e_measured.values

    def rmse(c):
        return float(np.sqrt(np.mean((base / c - e) ** 2)))

    curve = np.array([rmse(c) for c in grid])
    _flat_guard(curve, "estimate_cop", float(np.sqrt(np.mean(e**2))))
    i = int(np.argmin(curve))
    best = float(grid[i])
    refined = False
    if refine and 0 < i < grid.size - 1:
        best = _golden(rmse, grid[i - 1], grid[i + 1])
        refined = True
    return CopEstimate(best, grid, curve, float(grid[i]), refined)


def cop_multiplier_profile(box: ProcessLoadBox, weather: WeatherSeries, e_measured: TimeSeries, grid=None):
    """Profile RMSE over the rated COP with a constant temp-curve multiplier fitted at each point.

    The two parameters only enter as their product, so the profile is flat and
    the guard raises :class:`UnidentifiableError`.
    """
    grid = default_cop_grid() if grid is None else np.asarray(grid, dtype=float)
    base = plant_energy(ProcessLoadBox(box.load, box.plant.with_rated(1.0)), weather).values
    e = e_measured.values
    curve = []
    for c in grid:
        x = base / c
        u = float(x @ e) / float(x @ x)  # 1 / multiplier, least squares
        curve.append(float(np.sqrt(np.mean((x * u - e) ** 2))))
    curve = np.array(curve)
    _flat_guard(curve, "COP with free curve multiplier", float(np.sqrt(np.mean(e**2))))
    i = int(np.argmin(curve))
    return CopEstimate(float(grid[i]), grid, curve, float(grid[i]))


@dataclass
class BoilerPoint:
    p_blc: float
    p_boiler_eff: float
    sigma: float

    def to_dict(self):
        return {"p_blc": self.p_blc, "p_boiler_eff": self.p_boiler_eff, "sigma": self.sigma}


def boiler_blc_relation(flows: HeatFlowSet, gas: TimeSeries, windows, p_blc_grid) -> list[BoilerPoint]:
    """Trade-off between ``p_blc`` and boiler efficiency on BLC-dominated windows.

    Solves ``p_blc Q_BLC + eff * gas + Q_LEP + Q_sun + Q_in + known ~ 0`` for
    ``eff`` at each ``p_blc``; only the BLC flow carries a parameter there.
    """
    if not gas.aligned_with(flows.q1):
        raise DataError("gas series not aligned with the heat flows")
    mask = window_mask(flows, windows)
    g = gas.values[mask]
    if g.size < 2 or not np.any(g != 0):
        raise DataError("gas consumption is zero throughout the selected windows")
    rest = (flows.q_lep.values + flows.q_sun.values + flows.q_in.values + _known(flows))[mask]
    blc = flows.q_blc.values[mask]
    gg = float(g @ g)
    out = []
    for p in np.asarray(p_blc_grid, dtype=float):
        y = -(p * blc + rest)
        eff = float(g @ y) / gg
        r = y - eff * g
        s2 = float(r @ r) / max(g.size - 1, 1)
        out.append(BoilerPoint(float(p), eff, math.sqrt(s2 / gg)))
    return out
