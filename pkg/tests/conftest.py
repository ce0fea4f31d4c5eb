from datetime import datetime

import numpy as np
import pytest

from epe.decomposition import decompose
from epe.engine import discretize, steady_state_blc
from epe.synthetic import HOT_DRY, TEMPERATE, real_audit_pair, synthesize_measurements, synthetic_weather
from epe.timeseries import TimeSeries, Unit, WeatherSeries

T0 = datetime(2021, 5, 1)


def constant_weather(hours, t_out=10.0, start=T0, ghi=0.0, dni=0.0, dhi=0.0, w=0.008):
    def c(v, unit):
        return TimeSeries.constant(start, 3600.0, hours, v, unit)

    return WeatherSeries(c(t_out, Unit.DEG_C), c(ghi, Unit.W_M2), c(dni, Unit.W_M2), c(dhi, Unit.W_M2),
                         c(2.0, Unit.M_S), c(w, Unit.DIMENSIONLESS))


def series(values, start=T0, unit=Unit.W, step=3600.0):
    return TimeSeries(start, step, np.asarray(values, dtype=float), unit)


class Scenario:
    """Known-perturbation pair: real is leakier (x1.4), has more SHGC (x1.3), audit carries extra mass."""

    def __init__(self, climate, seed, start=T0, days=61, noise=0.0):
        self.real, self.audit = real_audit_pair()
        self.weather = synthetic_weather(start, days * 24, climate, seed=seed)
        self.data = synthesize_measurements(self.real, self.weather, noise=noise, seed=seed)
        self.flows = decompose(self.audit, self.data)
        self.q = self.data.q_hc_measured
        self.blc_ratio = steady_state_blc(discretize(self.real)) / steady_state_blc(discretize(self.audit))


_cache = {}


def scenario(name):
    if name not in _cache:
        if name == "hot_dry":
            _cache[name] = Scenario(HOT_DRY, seed=1)
        elif name == "temperate":
            _cache[name] = Scenario(TEMPERATE, seed=2, start=datetime(2021, 3, 1))
        else:
            raise KeyError(name)
    return _cache[name]


@pytest.fixture(scope="session")
def hot_dry():
    return scenario("hot_dry")


@pytest.fixture(scope="session")
def temperate():
    return scenario("temperate")


# acceptance criteria report, printed after the test session
ACCEPTANCE = []


def record(number, ok, detail):
    ACCEPTANCE.append((number, bool(ok), detail))
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
