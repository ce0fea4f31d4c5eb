"""Project configuration and the end-to-end reconciliation run."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from . import __version__
from .decomposition import FLOW_NAMES, DecompositionConfig, HeatFlowSet, decompose, vent_infil_flows, with_extra_flows
from .errors import ConfigError, EPEError
from .estimation import (
    P_NAMES, ShellParameters, corrective_flow, fit_linear, fit_nonlinear, predicted_load, select_window,
)
from .hvac import HvacPlant, ProcessLoadBox, boiler_blc_relation, estimate_cop, reconciled_load
from .io import (
    load_building, load_measured, load_weather, write_json, write_rows_csv, write_series_csv,
)
from .residual_net import TrainConfig, net_inputs, predict, train
from .timeseries import MeasuredDataset, WeatherSeries

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
STAGES = ("load", "decomposition", "fit_linear", "fit_nonlinear", "residual_net", "corrective", "stage2")


class PipelineError(EPEError):
    """A stage failed; keeps the stage name and the exit code of the cause."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)


def _window(v, name):
    if v is None:
        return None
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ConfigError(f"{name}: expected [start, stop]")
    try:
        lo, hi = (x if isinstance(x, datetime) else datetime.fromisoformat(x) for x in v)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: timestamps must be ISO 8601") from None
    if hi <= lo:
        raise ConfigError(f"{name}: stop must be after start")
    return (lo, hi)


@dataclass
class ProjectConfig:
    """Everything a reconciliation run needs.

    ``weather_file`` is a CSV path or an object
    ``{"climate": "hot-dry"|"temperate"|"cold", "start": ISO, "hours": n, "seed": k}`` for
    synthetic weather. ``measured_data`` is a CSV path or ``"synthesize"``,
    the latter simulating ``real_building_file``.
    """

    building_file: str
    weather_file: str | dict
    measured_data: str = "synthesize"
    real_building_file: str | None = None
    stage1_window: tuple[datetime, datetime] | None = None
    stage2_window: tuple[datetime, datetime] | None = None
    shared_windows: bool = False
    decomposition: dict = field(default_factory=lambda: {"t_fixed1": 20.0, "t_fixed2": 25.0})
    free_params: list[str] = field(default_factory=lambda: list(P_NAMES))
    active_tfs: list[str] = field(default_factory=lambda: ["q_in", "q_sun"])
    net: dict = field(default_factory=lambda: {"enabled": True})
    hvac: dict = field(default_factory=lambda: {"mode": "none"})
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.stage1_window = _window(self.stage1_window, "stage1_window")
        self.stage2_window = _window(self.stage2_window, "stage2_window")
        if self.measured_data == "synthesize" and not self.real_building_file:
            raise ConfigError("measured_data = 'synthesize' requires real_building_file")
        bad = set(self.free_params) - set(P_NAMES)
        if bad:
            raise ConfigError(f"free_params: unknown {sorted(bad)}")
        bad = set(self.active_tfs) - set(FLOW_NAMES)
        if bad:
            raise ConfigError(f"active_tfs: unknown {sorted(bad)}")
        w1, w2 = self.stage1_window, self.stage2_window
        if w1 and w2 and not self.shared_windows and w1[0] < w2[1] and w2[0] < w1[1]:
            raise ConfigError("stage1_window and stage2_window overlap; set shared_windows to allow it")
        DecompositionConfig(**self.decomposition)
        mode = self.hvac.get("mode", "none")
        if mode not in ("none", "cop", "boiler"):
            raise ConfigError(f"hvac.mode: expected none|cop|boiler, got {mode!r}")
        if mode != "none":
            HvacPlant.from_dict(self.hvac.get("plant", {"kind": "boiler" if mode == "boiler" else "dx_cooling"}))
        if mode != "none" and self.stage2_window is None:
            raise ConfigError(f"hvac.mode {mode!r} needs a stage2_window")
        if not self.noise >= 0:
            raise ConfigError("noise must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        for k in ("stage1_window", "stage2_window"):
            if d[k] is not None:
                d[k] = [t.isoformat() for t in d[k]]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProjectConfig":
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"config.schema_version: unsupported value {version!r}")
        known = set(cls.__dataclass_fields__)
        extra = sorted(set(d) - known)
        if extra:
            raise ConfigError(f"config: unknown field(s) {extra}")
        for k in ("building_file", "weather_file"):
            if k not in d:
                raise ConfigError(f"config: missing field {k!r}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ProjectConfig":
        from .io import read_json

        return cls.from_dict(read_json(path))


@dataclass
class PipelineReport:
    parameters: ShellParameters | None = None
    fit: dict = field(default_factory=dict)
    net_metrics: dict | None = None
    hvac_results: dict | None = None
    physical_interpretation: list[str] = field(default_factory=list)
    files: list[dict] = field(default_factory=list)
    stages: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "version": __version__,
            "stages_completed": list(self.stages),
            "parameters": None if self.parameters is None else self.parameters.to_dict(),
            "fit": self.fit,
            "net_metrics": self.net_metrics,
            "hvac_results": self.hvac_results,
            "physical_interpretation": list(self.physical_interpretation),
            "files": list(self.files),
            **self.extra,
        }


# ----------------------------------------------------------------------------- interpretation

_MEANING = {
    "p_blc": "load coefficient",
    "p_sun": "solar gains",
    "p_lep": "lights/equipment/people gains",
    "p_in": "thermal mass response",
}


def interpret(params: ShellParameters, names=None) -> list[str]:
    """One plain-language line per parameter; sigma decides whether a deviation is meaningful."""
    lines = []
    for n in params.free if names is None else names:
        p = params.p[n]
        s = params.sigma.get(n)
        head = f"{n} = {p:.3f}" + (f" ± {s:.3f}" if s is not None else "")
        if n in params.fixed:
            lines.append(f"{head}: fixed, not estimated")
            continue
        pct = abs(p - 1.0) * 100.0
        within = p == 1.0 or (s is not None and s > 0 and abs(p - 1.0) < 2.0 * s)
        if within:
            lines.append(f"{head}: consistent with audit")
        elif n == "p_in":
            more = "more" if p > 1 else "less"
            lines.append(f"{head}: {more} effective thermal mass than audit "
                         f"(indoor-temperature history response ≈ {pct:.0f}% {'higher' if p > 1 else 'lower'})")
        else:
            lines.append(f"{head}: actual building's {_MEANING[n]} ≈ {pct:.0f}% "
                         f"{'higher' if p > 1 else 'lower'} than audit")
    for flow, pair in params.tf.items():
        a, b = pair["alpha"], pair["beta"]
        tau = -1.0 / math.log(abs(a)) if 0 < abs(a) < 1 else 0.0
        lines.append(f"transfer function on {flow}: alpha = {a:.3f} (time constant ≈ {tau:.1f} steps), "
                     f"beta = {b:.3f} (gain on changes)")
    return lines


# ----------------------------------------------------------------------------- run


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def _weather(cfg: ProjectConfig, base: Path) -> WeatherSeries:
    if isinstance(cfg.weather_file, dict):
        from .synthetic import CLIMATES, synthetic_weather

        w = cfg.weather_file
        climate = CLIMATES.get(w.get("climate", "hot-dry"))
        if climate is None:
            raise ConfigError(f"weather_file.climate: expected one of {sorted(CLIMATES)}")
        return synthetic_weather(datetime.fromisoformat(w["start"]), int(w["hours"]), climate,
                                 seed=int(w.get("seed", cfg.seed)))
    return load_weather(_resolve(base, cfg.weather_file))


def _plant(cfg: ProjectConfig) -> HvacPlant | None:
    mode = cfg.hvac.get("mode", "none")
    if mode == "none":
        return None
    return HvacPlant.from_dict(cfg.hvac.get("plant", {"kind": "boiler" if mode == "boiler" else "dx_cooling"}))


def load_inputs(cfg: ProjectConfig, base: Path):
    audit = load_building(_resolve(base, cfg.building_file))
    weather = _weather(cfg, base)
    if cfg.measured_data == "synthesize":
        from .synthetic import synthesize_measurements

        real = load_building(_resolve(base, cfg.real_building_file))
        data = synthesize_measurements(real, weather, noise=cfg.noise, seed=cfg.seed, plant=_plant(cfg))
    else:
        data = load_measured(_resolve(base, cfg.measured_data), weather)
    return audit, data


def _flows(audit, data: MeasuredDataset, cfg: ProjectConfig) -> HeatFlowSet:
    flows = decompose(audit, data, DecompositionConfig(**cfg.decomposition))
    if any(k.startswith("fan.") for k in data.channels):
        flows = with_extra_flows(flows, vent_infil_flows(audit, data))
    return flows


def _train_config(cfg: ProjectConfig) -> TrainConfig:
    opts = {k: v for k, v in cfg.net.items() if k != "enabled"}
    opts.setdefault("seed", cfg.seed)
    try:
        return TrainConfig(**opts)
    except TypeError as e:
        raise ConfigError(f"net: {e}") from None


def run_pipeline(cfg: ProjectConfig, out_dir, base_dir=None) -> PipelineReport:
    """Decomposition, shell fits, residual net, corrective flow and Stage 2.

    Writes ``report.json`` and plot-data CSVs into ``out_dir``. On failure a
    ``report.partial.json`` with the completed stages is written and a
    :class:`PipelineError` naming the stage is raised.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    rep = PipelineReport()
    stage = "load"
    try:
        audit, data = load_inputs(cfg, base)
        d1 = data.slice(*cfg.stage1_window) if cfg.stage1_window else data
        rep.stages.append(stage)

        stage = "decomposition"
        flows = _flows(audit, d1, cfg)
        q = d1.q_hc_measured
        if q is None:
            raise ConfigError("stage 1 needs measured delivered heating/cooling (q_hc)")
        rep.files.append(write_series_csv(out / "heat_flows.csv", {
            **{n: flows[n] for n in FLOW_NAMES}, "q1": flows.q1, "q_hc_measured": q,
        }))
        rep.extra["identity_max_abs_W"] = float(np.max(np.abs(flows.identity_residual())))
        rep.stages.append(stage)

        stage = "fit_linear"
        params, fit = fit_linear(flows, q, free=cfg.free_params)
        rep.fit = {"linear": fit.to_dict()}
        rep.stages.append(stage)

        stage = "fit_nonlinear"
        if cfg.active_tfs and params.free:
            params, fit = fit_nonlinear(flows, q, active_tfs=cfg.active_tfs, init=params)
            rep.fit["nonlinear"] = fit.to_dict()
            rep.stages.append(stage)
        rep.parameters = params
        if params.free:
            rep.fit["final"] = fit.to_dict()
        else:
            # nothing estimated: the audit model's statistics are all there is
            rep.fit = {"before": fit.to_dict()["before"], "n_obs": fit.n_obs}
        rep.physical_interpretation = interpret(params)
        write_json(params.to_dict(), out / "parameters.json")
        rep.files.append({"path": "parameters.json"})

        net = None
        series = {"measured": q, "before": flows.q1, "after": predicted_load(flows, params)}
        if params.free and cfg.net.get("enabled", True):
            stage = "residual_net"
            inputs = net_inputs(flows, params)
            net, metrics = train(inputs, fit.residuals, _train_config(cfg), skip=fit.skip)
            corr = predict(net, inputs)
            after_net = series["after"] + corr
            err = (q.values - after_net.values)[fit.skip:]
            metrics["post_net_rmse"] = float(np.sqrt(np.mean(err**2)))
            metrics["post_net_mbe"] = float(np.mean(-err))
            metrics["post_fit_rmse"] = fit.rmse
            rep.net_metrics = metrics
            series["after_net"] = after_net
            net.save(out / "residual_net.json")
            rep.files.append({"path": "residual_net.json"})
            rep.stages.append(stage)
        rep.files.append(write_series_csv(out / "before_after.csv", series))
        rep.files.append(write_series_csv(out / "scatter.csv", {
            "measured": q, "predicted": series.get("after_net", series["after"]),
        }))

        stage = "corrective"
        rep.files.append(write_series_csv(out / "corrective_flow.csv", {"q_corrective": corrective_flow(flows, params)}))
        rep.stages.append(stage)

        if cfg.stage2_window is not None:
            stage = "stage2"
            rep.hvac_results = _stage2(cfg, audit, data, params, net, out, rep)
            rep.stages.append(stage)
    except EPEError as e:
        _flush_partial(rep, out, stage, e)
        raise PipelineError(stage, e) from e
    except (ValueError, KeyError, OSError) as e:
        _flush_partial(rep, out, stage, e)
        raise PipelineError(stage, e) from e

    rep.files.insert(0, {"path": "report.json"})
    write_json(rep.to_dict(), out / "report.json")
    write_json({"schema_version": SCHEMA_VERSION, "files": rep.files}, out / "manifest.json")
    return rep


def _flush_partial(rep: PipelineReport, out: Path, stage: str, e: Exception):
    d = rep.to_dict()
    d["failed_stage"] = stage
    d["error"] = str(e)
    write_json(d, out / "report.partial.json")


def _stage2(cfg, audit, data, params, net, out: Path, rep: PipelineReport) -> dict:
    d2 = data.slice(*cfg.stage2_window)
    flows2 = _flows(audit, d2, cfg)
    q_rec = reconciled_load(flows2, params, net)
    res: dict = {"window": [t.isoformat() for t in cfg.stage2_window]}
    cols = {"q_reconciled": q_rec}
    if d2.q_hc_measured is not None:
        err = (d2.q_hc_measured.values - q_rec.values)[24:]
        res["closed_loop_rmse_W"] = float(np.sqrt(np.mean(err**2)))
        res["closed_loop_mbe_W"] = float(np.mean(-err))
        cols["q_hc_measured"] = d2.q_hc_measured
    rep.files.append(write_series_csv(out / "stage2_load.csv", cols))
    plant = _plant(cfg)
    mode = cfg.hvac.get("mode", "none")
    if plant is None:
        return res
    res["plant"] = plant.to_dict()
    energy = d2.energy.get(plant.fuel)
    if energy is None:
        raise ConfigError(f"stage 2 needs measured '{plant.fuel}' energy")
    if mode == "cop":
        box = ProcessLoadBox.from_delivered(q_rec, plant)
        grid = cfg.hvac.get("grid")
        est = estimate_cop(box, d2.weather, energy, None if grid is None else np.arange(*grid))
        res["best_cop"] = est.best
        res["grid_best_cop"] = est.grid_best
        rep.files.append(write_rows_csv(out / "cop_curve.csv", ["rated_cop", "rmse_W"], est.curve_rows()))
    else:
        thr = cfg.hvac.get("blc_threshold")
        if thr is None:
            thr = float(np.percentile(np.abs(flows2.q_blc.values), 50))
        windows = select_window(flows2, "q_blc", {"q_blc": thr, "q_sun": cfg.hvac.get("sun_fraction", 0.2) * thr})
        grid = np.round(np.arange(*cfg.hvac.get("p_blc_grid", [1.0, 1.5001, 0.025])), 6)
        rel = boiler_blc_relation(flows2, energy, windows, grid)
        res["boiler_relation"] = [r.to_dict() for r in rel]
        res["windows"] = len(windows)
        p_blc = params.p_blc
        res["efficiency_at_fitted_p_blc"] = float(np.interp(p_blc, grid, [r.p_boiler_eff for r in rel]))
        rep.files.append(write_rows_csv(out / "boiler_relation.csv", ["p_blc", "p_boiler_eff", "sigma"],
                                        [(r.p_blc, r.p_boiler_eff, r.sigma) for r in rel]))
    return res


def compare_reports(reports: dict[str, PipelineReport]) -> dict:
    """Parameter agreement across runs (e.g. two climates)."""
    names = list(reports)
    table = {n: reports[n].parameters.values() for n in names}
    keys = sorted(set.intersection(*(set(v) for v in table.values())))
    spread = {}
    for k in keys:
        vals = [table[n][k] for n in names]
        mean = float(np.mean(vals))
        spread[k] = {"values": dict(zip(names, vals)),
                     "relative_spread": float((max(vals) - min(vals)) / abs(mean)) if mean else float("inf")}
    return spread
