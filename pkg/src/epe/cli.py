"""Command-line entry point.

Every verb reads a project config (``--config``) and works in an output
directory (``--out``); later verbs pick up the files earlier ones wrote, so a
stage can be re-run on its own.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .decomposition import FLOW_NAMES, HeatFlowSet
from .engine import RunSpec, discretize, simulate
from .errors import ConfigError, EPEError
from .estimation import ShellParameters, fit_linear, fit_nonlinear
from .io import read_json, read_table, save_measured, save_weather, write_json, write_series_csv
from .pipeline import PipelineReport, ProjectConfig, _flows, _stage2, _train_config, interpret, load_inputs, run_pipeline
from .residual_net import ResidualNet, net_inputs, train
from .timeseries import TimeSeries, Unit

logger = logging.getLogger("epe")


def _load_flows(path: Path) -> HeatFlowSet:
    start, step, cols = read_table(path, (*FLOW_NAMES, "q1"))
    mk = {n: TimeSeries(start, step, cols[n], Unit.W) for n in (*FLOW_NAMES, "q1")}
    return HeatFlowSet(**mk)


def _measured_q(path: Path) -> TimeSeries:
    start, step, cols = read_table(path, ("q_hc_measured",))
    return TimeSeries(start, step, cols["q_hc_measured"], Unit.W)


def _stage1(cfg, base):
    audit, data = load_inputs(cfg, base)
    d1 = data.slice(*cfg.stage1_window) if cfg.stage1_window else data
    return audit, data, d1


def _flows_and_q(cfg, base, out):
    """Heat flows from a previous ``decompose`` when present, else recomputed."""
    path = out / "heat_flows.csv"
    if path.exists():
        return _load_flows(path), _measured_q(path)
    audit, _, d1 = _stage1(cfg, base)
    if d1.q_hc_measured is None:
        raise ConfigError("stage 1 needs measured delivered heating/cooling (q_hc)")
    return _flows(audit, d1, cfg), d1.q_hc_measured


def cmd_simulate(cfg, base, out, args):
    audit, _, d1 = _stage1(cfg, base)
    run = simulate(discretize(audit), RunSpec(d1.weather, d1.lep, setpoints=d1.t_in))
    info = write_series_csv(out / "ideal_loads.csv", {f"q_hc.{z}": s for z, s in run.ideal_load.items()})
    print(f"wrote {info['path']} ({info['rows']} rows)")


def cmd_decompose(cfg, base, out, args):
    audit, _, d1 = _stage1(cfg, base)
    flows = _flows(audit, d1, cfg)
    cols = {**{n: flows[n] for n in FLOW_NAMES}, "q1": flows.q1}
    if d1.q_hc_measured is not None:
        cols["q_hc_measured"] = d1.q_hc_measured
    write_series_csv(out / "heat_flows.csv", cols)
    print(f"identity residual max |.| = {np.max(np.abs(flows.identity_residual())):.3g} W")


def cmd_fit(cfg, base, out, args):
    flows, q = _flows_and_q(cfg, base, out)
    params, fit = fit_linear(flows, q, free=cfg.free_params)
    if cfg.active_tfs and params.free:
        params, fit = fit_nonlinear(flows, q, active_tfs=cfg.active_tfs, init=params)
    write_json(params.to_dict(), out / "parameters.json")
    write_json(fit.to_dict(), out / "fit.json")
    write_series_csv(out / "residuals.csv", {"residual": fit.residuals})
    for line in interpret(params):
        print(line)
    print(f"RMSE {fit.before_rmse:.1f} W -> {fit.rmse:.1f} W, MBE {fit.mbe:.1f} W")


def _params(out: Path) -> ShellParameters:
    path = out / "parameters.json"
    if not path.exists():
        raise ConfigError(f"{path} not found; run 'fit' first")
    return ShellParameters.from_dict(read_json(path))


def cmd_train(cfg, base, out, args):
    flows, q = _flows_and_q(cfg, base, out)
    params = _params(out)
    start, step, cols = read_table(out / "residuals.csv", ("residual",))
    resid = TimeSeries(start, step, cols["residual"], Unit.W)
    net, metrics = train(net_inputs(flows, params), resid, _train_config(cfg), skip=24)
    net.save(out / "residual_net.json")
    write_json(metrics, out / "net_metrics.json")
    print(f"train RMSE {metrics['train_rmse']:.1f} W, validation RMSE {metrics['validation_rmse']:.1f} W")


def cmd_stage2(cfg, base, out, args):
    if cfg.stage2_window is None:
        raise ConfigError("stage2 needs stage2_window in the config")
    audit, data = load_inputs(cfg, base)
    params = _params(out)
    net_path = out / "residual_net.json"
    net = ResidualNet.load(net_path) if net_path.exists() else None
    rep = PipelineReport(parameters=params)
    res = _stage2(cfg, audit, data, params, net, out, rep)
    write_json(res, out / "stage2.json")
    for k in ("best_cop", "efficiency_at_fitted_p_blc", "closed_loop_rmse_W"):
        if k in res:
            print(f"{k}: {res[k]:.4g}")


def cmd_pipeline(cfg, base, out, args):
    rep = run_pipeline(cfg, out, base)
    for line in rep.physical_interpretation:
        print(line)
    fin = rep.fit.get("final", {})
    if fin:
        print(f"RMSE before {fin['before']['rmse_W']:.1f} W, after {fin['after']['rmse_W']:.1f} W")
    elif "before" in rep.fit:
        print(f"RMSE before {rep.fit['before']['rmse_W']:.1f} W (no free parameters)")
    if rep.net_metrics:
        print(f"RMSE after residual net {rep.net_metrics['post_net_rmse']:.1f} W")
    if rep.hvac_results and "best_cop" in rep.hvac_results:
        print(f"best rated COP {rep.hvac_results['best_cop']:.4g}")
    if rep.hvac_results and "efficiency_at_fitted_p_blc" in rep.hvac_results:
        print(f"boiler efficiency at fitted p_blc {rep.hvac_results['efficiency_at_fitted_p_blc']:.3f} "
              f"({rep.hvac_results['windows']} BLC-dominated windows)")


def cmd_synthesize(cfg, base, out, args):
    if not cfg.real_building_file:
        raise ConfigError("synthesize needs real_building_file")
    synth = replace(cfg, measured_data="synthesize")
    _, data = load_inputs(synth, base)
    save_weather(data.weather, out / "weather.csv")
    save_measured(data, out / "measured.csv")
    print(f"wrote weather.csv and measured.csv ({len(data.weather)} rows)")


VERBS = {
    "simulate": (cmd_simulate, "track-mode ideal loads of the audit model"),
    "decompose": (cmd_decompose, "five-run macro heat-flow decomposition"),
    "fit": (cmd_fit, "linear then nonlinear shell-parameter fit"),
    "train-residuals": (cmd_train, "train the residual network on the fit residuals"),
    "stage2": (cmd_stage2, "reconciled load and plant parameter estimation"),
    "pipeline": (cmd_pipeline, "all stages end to end"),
    "synthesize": (cmd_synthesize, "write weather and measured CSVs from the real building"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="epe", description="Reconcile a building simulation with measured data.")
    sub = p.add_subparsers(dest="verb", required=True)
    for name, (_, help_) in VERBS.items():
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="project config JSON")
        s.add_argument("--out", default="out", help="output directory")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg_path = Path(args.config)
        cfg = ProjectConfig.load(cfg_path)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        VERBS[args.verb][0](cfg, cfg_path.parent, out, args)
    except EPEError as e:
        print(f"epe {args.verb}: error: {e}", file=sys.stderr)
        return e.exit_code
    except (ValueError, KeyError) as e:  # malformed config values
        print(f"epe {args.verb}: error: {e}", file=sys.stderr)
        return ConfigError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
