"""Uniformly sampled time series and the weather / measurement bundles built on them."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

MAX_INTERPOLATED_GAP = 2


class Unit(str, enum.Enum):
    DEG_C = "degC"
    W = "W"
    WH = "Wh"
    MJ = "MJ"
    W_M2 = "W/m2"
    M_S = "m/s"
    KG_S = "kg/s"
    DIMENSIONLESS = "1"


ENERGY_UNITS = {Unit.WH: 3600.0, Unit.MJ: 1.0e6}  # joules per unit


class UnitMismatchError(DataError):
    pass


class AlignmentError(DataError):
    pass


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Scalar series sampled every ``step`` seconds from ``start``.

    Each value describes the interval ``[t, t + step)``. Values are stored in a
    read-only array, so instances can be shared freely.
    """

    start: datetime
    step: float
    values: np.ndarray
    unit: Unit = Unit.DIMENSIONLESS

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")
        vals = np.array(self.values, dtype=float, copy=True).ravel()
        if np.isnan(vals).any():
            raise DataError("TimeSeries values contain NaN; fill or split gaps at ingestion")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "unit", Unit(self.unit))
        object.__setattr__(self, "step", float(self.step))

    def __len__(self):
        return self.values.shape[0]

    @property
    def end(self) -> datetime:
        """Exclusive end of the covered interval."""
        return self.start + timedelta(seconds=self.step * len(self))

    @property
    def timestamps(self) -> list[datetime]:
        return [self.start + timedelta(seconds=self.step * i) for i in range(len(self))]

    def index_of(self, when: datetime) -> int:
        offset = (when - self.start).total_seconds() / self.step
        idx = int(round(offset))
        if abs(offset - idx) > 1e-9:
            raise AlignmentError(f"{when} is not on the sampling grid of series starting {self.start}")
        return idx

    def slice(self, start: datetime, stop: datetime) -> "TimeSeries":
        """Sub-series covering ``[start, stop)``; both ends must lie on the grid."""
        i0, i1 = self.index_of(start), self.index_of(stop)
        if i0 < 0 or i1 > len(self) or i1 <= i0:
            raise AlignmentError(f"window {start}..{stop} not covered by {self.start}..{self.end}")
        return self.with_values(self.values[i0:i1], start=start)

    def with_values(self, values, unit: Unit | None = None, start: datetime | None = None) -> "TimeSeries":
        return TimeSeries(start or self.start, self.step, values, self.unit if unit is None else unit)

    def aligned_with(self, other: "TimeSeries") -> bool:
        return self.start == other.start and self.step == other.step and len(self) == len(other)

    def _check(self, other: "TimeSeries"):
        if not self.aligned_with(other):
            raise AlignmentError(
                f"series not aligned: ({self.start}, {self.step}, {len(self)}) vs "
                f"({other.start}, {other.step}, {len(other)})"
            )
        if self.unit != other.unit:
            raise UnitMismatchError(f"unit mismatch: {self.unit.value} vs {other.unit.value}")

    def __add__(self, other):
        if isinstance(other, TimeSeries):
            self._check(other)
            return self.with_values(self.values + other.values)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, TimeSeries):
            self._check(other)
            return self.with_values(self.values - other.values)
        return NotImplemented

    def __neg__(self):
        return self.with_values(-self.values)

    def __mul__(self, k):
        if isinstance(k, (int, float, np.floating)):
            return self.with_values(self.values * float(k))
        return NotImplemented

    __rmul__ = __mul__

    def __repr__(self):
        return f"TimeSeries(start={self.start}, step={self.step:g}s, n={len(self)}, unit={self.unit.value})"

    @classmethod
    def constant(cls, start, step, n, value, unit=Unit.DIMENSIONLESS):
        return cls(start, step, np.full(n, float(value)), unit)

    @classmethod
    def zeros_like(cls, other: "TimeSeries", unit: Unit | None = None):
        return cls(other.start, other.step, np.zeros(len(other)), other.unit if unit is None else unit)


def total(series) -> TimeSeries:
    """Sum of several aligned series (e.g. per-zone flows)."""
    series = list(series)
    if not series:
        raise ValueError("nothing to sum")
    out = series[0]
    for s in series[1:]:
        out = out + s
    return out


def align(series: list[TimeSeries], window: tuple[datetime, datetime] | None = None) -> list[TimeSeries]:
    """Cut every series to a common window.

    Without ``window`` the intersection of all series is used. Steps must be
    identical; a step that is an integer multiple of another calls for
    :func:`aggregate` first and is reported as such.
    """
    if not series:
        return []
    steps = {s.step for s in series}
    if len(steps) > 1:
        lo, hi = min(steps), max(steps)
        ratio = hi / lo
        if abs(ratio - round(ratio)) < 1e-9:
            raise AlignmentError(f"mixed steps {sorted(steps)}; aggregate to {hi:g}s first")
        raise AlignmentError(f"steps {sorted(steps)} are not integer multiples")
    if window is None:
        start = max(s.start for s in series)
        stop = min(s.end for s in series)
        if stop <= start:
            raise AlignmentError("series do not overlap")
    else:
        start, stop = window
        for s in series:
            if s.start > start or s.end < stop:
                raise AlignmentError(f"{s!r} does not cover window {start}..{stop}")
    return [s.slice(start, stop) for s in series]


def aggregate(series: TimeSeries, target_step: float, method: str = "mean") -> TimeSeries:
    """Resample to a coarser step.

    ``mean`` suits intensive quantities and powers. ``sum`` is for energy
    series (Wh or MJ per sample) and returns the mean power in W over each
    target interval. A trailing partial interval is dropped.
    """
    ratio = target_step / series.step
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9:
        raise AlignmentError(f"target step {target_step:g}s is not an integer multiple of {series.step:g}s")
    n = len(series) // k
    blocks = series.values[: n * k].reshape(n, k)
    if method == "mean":
        return TimeSeries(series.start, target_step, blocks.mean(axis=1), series.unit)
    if method == "sum":
        if series.unit not in ENERGY_UNITS:
            raise UnitMismatchError(f"sum aggregation needs an energy unit, got {series.unit.value}")
        joules = blocks.sum(axis=1) * ENERGY_UNITS[series.unit]
        return TimeSeries(series.start, target_step, joules / target_step, Unit.W)
    raise ValueError(f"unknown aggregation method {method!r}")


def watts_to_mj(series: TimeSeries) -> np.ndarray:
    """Energy per sample in MJ for a power series in W."""
    if series.unit != Unit.W:
        raise UnitMismatchError(f"expected W, got {series.unit.value}")
    return series.values * series.step / 1.0e6


def fill_short_gaps(values, max_gap: int = MAX_INTERPOLATED_GAP) -> np.ndarray:
    """Linearly interpolate NaN runs of at most ``max_gap`` samples.

    Longer runs and runs touching either end are left as NaN.
    """
    v = np.array(values, dtype=float, copy=True)
    isnan = np.isnan(v)
    if not isnan.any():
        return v
    n = v.shape[0]
    i = 0
    while i < n:
        if not isnan[i]:
            i += 1
            continue
        j = i
        while j < n and isnan[j]:
            j += 1
        if i > 0 and j < n and (j - i) <= max_gap:
            v[i:j] = np.interp(np.arange(i, j), [i - 1, j], [v[i - 1], v[j]])
        i = j
    return v


def contiguous_runs(valid) -> list[tuple[int, int]]:
    """Half-open index ranges where ``valid`` is true."""
    valid = np.asarray(valid, dtype=bool)
    runs = []
    i, n = 0, valid.shape[0]
    while i < n:
        if not valid[i]:
            i += 1
            continue
        j = i
        while j < n and valid[j]:
            j += 1
        runs.append((i, j))
        i = j
    return runs


@dataclass(frozen=True)
class WeatherSeries:
    t_out: TimeSeries
    ghi: TimeSeries
    dni: TimeSeries
    dhi: TimeSeries
    wind_speed: TimeSeries
    humidity_ratio: TimeSeries

    FIELDS = ("t_out", "ghi", "dni", "dhi", "wind_speed", "humidity_ratio")

    def __post_init__(self):
        ref = self.t_out
        for name in self.FIELDS:
            s = getattr(self, name)
            if not s.aligned_with(ref):
                raise AlignmentError(f"weather member {name} not aligned with t_out")
        for name in ("ghi", "dni", "dhi"):
            if (getattr(self, name).values < 0).any():
                raise DataError(f"negative irradiance in {name}")

    def __len__(self):
        return len(self.t_out)

    @property
    def start(self):
        return self.t_out.start

    @property
    def step(self):
        return self.t_out.step

    @property
    def end(self):
        return self.t_out.end

    def slice(self, start, stop) -> "WeatherSeries":
        return WeatherSeries(**{n: getattr(self, n).slice(start, stop) for n in self.FIELDS})

    def without_sun(self) -> "WeatherSeries":
        return WeatherSeries(
            t_out=self.t_out,
            ghi=TimeSeries.zeros_like(self.ghi),
            dni=TimeSeries.zeros_like(self.dni),
            dhi=TimeSeries.zeros_like(self.dhi),
            wind_speed=self.wind_speed,
            humidity_ratio=self.humidity_ratio,
        )


@dataclass(frozen=True)
class MeasuredDataset:
    """Measured (or synthesized) building data.

    ``lep`` and ``t_in`` are keyed by zone name. ``energy`` maps fuel names to
    power series in W. ``channels`` holds optional extras such as fan flows,
    named ``fan.<id>.mass_flow`` / ``fan.<id>.t_mixed`` / ``fan.<id>.t_return``.
    """

    t_in: dict[str, TimeSeries]
    lep: dict[str, TimeSeries]
    weather: WeatherSeries
    q_hc_measured: TimeSeries | None = None
    energy: dict[str, TimeSeries] = field(default_factory=dict)
    channels: dict[str, TimeSeries] = field(default_factory=dict)

    @property
    def zones(self) -> list[str]:
        return list(self.t_in)

    def require_zones(self, names):
        missing = [n for n in names if n not in self.t_in]
        if missing:
            raise DataError(f"measured indoor temperature missing for zones {missing}")

    def slice(self, start, stop) -> "MeasuredDataset":
        def cut(d):
            return {k: v.slice(start, stop) for k, v in d.items()}

        q = self.q_hc_measured
        if q is not None:
            q = q.slice(start, stop) if q.start <= start and q.end >= stop else None
        return MeasuredDataset(
            t_in=cut(self.t_in),
            lep=cut(self.lep),
            weather=self.weather.slice(start, stop),
            q_hc_measured=q,
            energy=cut(self.energy),
            channels=cut(self.channels),
        )
