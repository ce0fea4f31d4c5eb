"""Shell parameter estimation against measured delivered heating/cooling.

The fitted model of the delivered load is::

    q_hc_pred(t) = -( sum_k p_k Q_k(t) + sum_active TF_k(t) + known(t) )

with ``TF_k`` the first-order transfer-function reshaping of flow ``Q_k``
(pole ``alpha``, gain ``beta``) and ``known`` any unparametrized extra flows
(ventilation, infiltration). Residuals are ``measured - predicted``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from . import kernels
from .decomposition import FLOW_NAMES, HeatFlowSet
from .errors import CollinearityError, ConfigError, ConvergenceError, DataError, RankDeficiencyError
from .lm import levenberg_marquardt
from .timeseries import TimeSeries, Unit, contiguous_runs

logger = logging.getLogger(__name__)

P_NAMES = ("p_blc", "p_in", "p_sun", "p_lep")
P_TO_FLOW = dict(zip(P_NAMES, FLOW_NAMES))
EXTRA_FLOWS = ("q_vent", "q_inf")
ALPHA_MAX = 0.9999
SKIP_HOURS = 24
VIF_LIMIT = 10.0
COND_LIMIT = 1e8
DEFAULT_TF_START = (0.5, 0.1)
# starting poles tried for transfer functions without an initial value; the
# objective has local minima where the scale parameters absorb the lag
ALPHA_STARTS = (0.2, 0.5, 0.8, 0.95)

# alternate names for the transfer-function pair used in tabulated results
ALIASES = {
    "beta_in": "p_in,phase",
    "alpha_in": "p_TF,in",
    "beta_sun": "p_sun,phase",
    "alpha_sun": "p_TF,sun",
}


def tf_short(flow_name: str) -> str:
    return flow_name[2:] if flow_name.startswith("q_") else flow_name


def tf_flow(flow: TimeSeries, alpha: float, beta: float) -> TimeSeries:
    """``out[t] = alpha*out[t-1] + beta*(flow[t]-flow[t-1])``, ``out[0] = 0``."""
    if not abs(alpha) < 1.0:
        raise ValueError(f"transfer-function pole must satisfy |alpha| < 1, got {alpha}")
    return flow.with_values(kernels.tf_filter(flow.values, alpha, beta))


@dataclass
class ShellParameters:
    p_blc: float = 1.0
    p_in: float = 1.0
    p_sun: float = 1.0
    p_lep: float = 1.0
    tf: dict[str, dict[str, float]] = field(default_factory=dict)
    fixed: set[str] = field(default_factory=set)
    sigma: dict[str, float] = field(default_factory=dict)
    covariance: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    cov_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        for flow, pair in self.tf.items():
            if not abs(pair["alpha"]) < 1.0:
                raise ValueError(f"unstable transfer function on {flow}: alpha={pair['alpha']}")

    @property
    def p(self) -> dict[str, float]:
        return {n: getattr(self, n) for n in P_NAMES}

    @property
    def free(self) -> list[str]:
        return [n for n in P_NAMES if n not in self.fixed]

    def values(self) -> dict[str, float]:
        """Every parameter by name, transfer-function pairs as ``alpha_<flow>``/``beta_<flow>``."""
        out = dict(self.p)
        for flow, pair in self.tf.items():
            out[f"alpha_{tf_short(flow)}"] = pair["alpha"]
            out[f"beta_{tf_short(flow)}"] = pair["beta"]
        return out

    def to_dict(self) -> dict:
        vals = self.values()
        return {
            "parameters": vals,
            "aliases": {k: ALIASES[k] for k in vals if k in ALIASES},
            "fixed": sorted(self.fixed),
            "sigma": dict(self.sigma),
            "transfer_functions": {k: dict(v) for k, v in self.tf.items()},
            "covariance": {"names": list(self.cov_names), "matrix": np.asarray(self.covariance).tolist()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShellParameters":
        vals = d["parameters"]
        cov = d.get("covariance", {})
        return cls(
            **{n: float(vals[n]) for n in P_NAMES},
            tf={k: {"alpha": float(v["alpha"]), "beta": float(v["beta"])} for k, v in d.get("transfer_functions", {}).items()},
            fixed=set(d.get("fixed", [])),
            sigma={k: float(v) for k, v in d.get("sigma", {}).items()},
            covariance=np.array(cov.get("matrix", []), dtype=float).reshape(len(cov.get("names", [])), -1)
            if cov.get("names") else np.zeros((0, 0)),
            cov_names=list(cov.get("names", [])),
        )


@dataclass
class FitReport:
    residuals: TimeSeries
    mbe: float
    rmse: float
    n_obs: int
    n_params: int
    before_mbe: float
    before_rmse: float
    skip: int = SKIP_HOURS
    iterations: int = 0
    converged: bool = True
    message: str = ""

    def __post_init__(self):
        if self.n_obs <= self.n_params:
            raise DataError(f"{self.n_obs} observations cannot support {self.n_params} parameters")

    def to_dict(self) -> dict:
        mj = self.residuals.step / 1.0e6
        return {
            "n_obs": self.n_obs,
            "n_params": self.n_params,
            "skip_steps": self.skip,
            "iterations": self.iterations,
            "converged": self.converged,
            "message": self.message,
            "before": {"mbe_W": self.before_mbe, "rmse_W": self.before_rmse,
                       "mbe_MJ": self.before_mbe * mj, "rmse_MJ": self.before_rmse * mj},
            "after": {"mbe_W": self.mbe, "rmse_W": self.rmse, "mbe_MJ": self.mbe * mj, "rmse_MJ": self.rmse * mj},
        }


def _known(flows: HeatFlowSet) -> np.ndarray:
    out = np.zeros(len(flows))
    for name in EXTRA_FLOWS:
        s = getattr(flows, name)
        if s is not None:
            out += s.values
    return out


def tf_terms(flows: HeatFlowSet, params: ShellParameters) -> np.ndarray:
    out = np.zeros(len(flows))
    for flow, pair in params.tf.items():
        out += kernels.tf_filter(flows[flow].values, pair["alpha"], pair["beta"])
    return out


def predicted_load(flows: HeatFlowSet, params: ShellParameters) -> TimeSeries:
    """Delivered heating/cooling implied by the fitted flows (gain to air, W)."""
    s = sum(params.p[n] * flows[P_TO_FLOW[n]].values for n in P_NAMES)
    return flows.q1.with_values(-(s + tf_terms(flows, params) + _known(flows)))


def _stats(err: np.ndarray) -> tuple[float, float]:
    return float(np.mean(err)), float(np.sqrt(np.mean(err**2)))


def _check_q_hc(flows: HeatFlowSet, q_hc: TimeSeries):
    if not q_hc.aligned_with(flows.q1):
        raise DataError("measured delivered load is not aligned with the heat flows")
    if q_hc.unit != Unit.W:
        raise DataError(f"measured delivered load must be in W, got {q_hc.unit.value}")


def _mask(n: int, skip: int) -> np.ndarray:
    if n - skip <= 0:
        raise DataError(f"window of {n} steps leaves nothing after skipping {skip}")
    return np.arange(skip, n)


def cosine_matrix(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=0)
    norms[norms == 0] = 1.0
    Xn = X / norms
    return Xn.T @ Xn


def variance_inflation(X: np.ndarray) -> np.ndarray:
    """Uncentered variance-inflation factors (regression has no intercept)."""
    R = cosine_matrix(X)
    try:
        return np.diag(np.linalg.inv(R)).copy()
    except np.linalg.LinAlgError:
        return np.full(X.shape[1], np.inf)


def _collinearity_check(X: np.ndarray, names: list[str], limit: float):
    if X.shape[1] == 0:
        return
    zero = [n for n, c in zip(names, X.T) if not np.any(c)]
    if zero:
        raise CollinearityError(f"flow column(s) {zero} are identically zero; fix those parameters")
    R = cosine_matrix(X)
    cond = np.linalg.cond(R)
    if cond > limit:
        off = np.abs(R - np.eye(len(names)))
        i, j = np.unravel_index(np.argmax(off), off.shape)
        raise CollinearityError(
            f"design matrix is collinear (condition number {cond:.3g} > {limit:g}); "
            f"worst pair: {names[i]} / {names[j]} (cosine {R[i, j]:.6f})"
        )


def _before(flows, q_hc, idx):
    return _stats(flows.q1.values[idx] - q_hc.values[idx])


def fit_linear(
    flows: HeatFlowSet,
    q_hc: TimeSeries,
    free=P_NAMES,
    skip: int = SKIP_HOURS,
    vif_limit: float | None = VIF_LIMIT,
    cond_limit: float = COND_LIMIT,
) -> tuple[ShellParameters, FitReport]:
    """Ordinary least squares (no intercept) for the scale parameters.

    Parameters outside ``free`` stay pinned at 1. ``p_lep`` is pinned
    automatically when its variance-inflation factor exceeds ``vif_limit``.
    """
    _check_q_hc(flows, q_hc)
    free = [n for n in P_NAMES if n in set(free)]
    unknown = set(free) - set(P_NAMES)
    if unknown:
        raise ConfigError(f"unknown parameters {sorted(unknown)}")
    idx = _mask(len(flows), skip)
    cols = {n: flows[P_TO_FLOW[n]].values[idx] for n in P_NAMES}
    if vif_limit is not None and "p_lep" in free and len(free) > 1:
        vif = variance_inflation(np.column_stack([cols[n] for n in free]))
        v_lep = vif[free.index("p_lep")]
        if v_lep > vif_limit:
            logger.warning("p_lep pinned to 1: variance-inflation factor %.1f exceeds %.0f", v_lep, vif_limit)
            free.remove("p_lep")
    fixed = set(P_NAMES) - set(free)
    X = np.column_stack([cols[n] for n in free]) if free else np.zeros((idx.size, 0))
    y = -(q_hc.values[idx] + _known(flows)[idx] + sum(cols[n] for n in fixed))
    _collinearity_check(X, free, cond_limit)
    p = {n: 1.0 for n in P_NAMES}
    cov = np.zeros((0, 0))
    sigma = {}
    if free:
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        p.update(zip(free, coef))
        dof = idx.size - len(free)
        if dof <= 0:
            raise DataError(f"{idx.size} observations cannot support {len(free)} parameters")
        res = y - X @ coef
        cov = float(res @ res) / dof * np.linalg.inv(X.T @ X)
        sigma = dict(zip(free, np.sqrt(np.clip(np.diag(cov), 0.0, None))))
    params = ShellParameters(**p, fixed=fixed, sigma=sigma, covariance=cov, cov_names=list(free))
    return params, _report(flows, q_hc, params, idx, skip, len(free))


def _report(flows, q_hc, params, idx, skip, n_params, iterations=0, converged=True, message=""):
    pred = predicted_load(flows, params)
    resid = q_hc - pred
    mbe, rmse = _stats(-resid.values[idx])
    b_mbe, b_rmse = _before(flows, q_hc, idx)
    return FitReport(resid, mbe, rmse, idx.size, n_params, b_mbe, b_rmse, skip, iterations, converged, message)


class NonlinearProblem:
    """Residuals and analytic Jacobian for scale + transfer-function parameters."""

    def __init__(self, flows: HeatFlowSet, q_hc: TimeSeries, free: list[str], active: list[str],
                 fixed_p: dict[str, float], skip: int = SKIP_HOURS):
        self.free = list(free)
        self.active = list(active)
        self.idx = _mask(len(flows), skip)
        self.Q = {n: flows[P_TO_FLOW[n]].values for n in P_NAMES}
        self.F = {f: flows[f].values for f in self.active}
        self.base = q_hc.values + _known(flows) + sum(fixed_p[n] * self.Q[n] for n in P_NAMES if n not in self.free)
        self.names = self.free + [f"{k}_{tf_short(f)}" for f in self.active for k in ("alpha", "beta")]

    @property
    def n_params(self):
        return len(self.names)

    def split(self, theta):
        p = dict(zip(self.free, theta[: len(self.free)]))
        pairs = theta[len(self.free):].reshape(-1, 2)
        return p, {f: (float(a), float(b)) for f, (a, b) in zip(self.active, pairs)}

    def residual(self, theta) -> np.ndarray:
        p, tf = self.split(np.asarray(theta, dtype=float))
        r = self.base.copy()
        for n, v in p.items():
            r += v * self.Q[n]
        for f, (a, b) in tf.items():
            r += kernels.tf_filter(self.F[f], a, b)
        return r[self.idx]

    def jacobian(self, theta) -> np.ndarray:
        p, tf = self.split(np.asarray(theta, dtype=float))
        cols = [self.Q[n] for n in self.free]
        for f, (a, b) in tf.items():
            _, da, db = kernels.tf_filter_sens(self.F[f], a, b)
            cols.extend([da, db])
        if not cols:
            return np.zeros((self.idx.size, 0))
        return np.column_stack(cols)[self.idx]

    def project(self, theta):
        theta = np.array(theta, dtype=float)
        k = len(self.free)
        alphas = theta[k::2]
        clamped = bool(np.any(np.abs(alphas) > ALPHA_MAX))
        theta[k::2] = np.clip(alphas, -ALPHA_MAX, ALPHA_MAX)
        return theta, clamped


def fit_nonlinear(
    flows: HeatFlowSet,
    q_hc: TimeSeries,
    active_tfs=("q_sun",),
    init: ShellParameters | None = None,
    skip: int = SKIP_HOURS,
    max_iter: int = 200,
    free=None,
) -> tuple[ShellParameters, FitReport]:
    """Levenberg-Marquardt fit of scale parameters plus transfer-function pairs.

    ``init`` (normally the :func:`fit_linear` result) supplies the free set and
    starting values. Transfer functions not present in ``init.tf`` start from
    ``beta=0.1`` and each pole in ``ALPHA_STARTS``; the lowest cost wins.
    """
    _check_q_hc(flows, q_hc)
    if init is None:
        init, _ = fit_linear(flows, q_hc, free=P_NAMES if free is None else free, skip=skip)
    free_p = init.free if free is None else [n for n in P_NAMES if n in set(free)]
    active = [f for f in FLOW_NAMES if f in set(active_tfs)]
    bad = set(active_tfs) - set(FLOW_NAMES)
    if bad:
        raise ConfigError(f"transfer functions only apply to {FLOW_NAMES}, got {sorted(bad)}")
    prob = NonlinearProblem(flows, q_hc, free_p, active, init.p, skip)
    starts = ALPHA_STARTS if any(f not in init.tf for f in active) else (DEFAULT_TF_START[0],)
    res = None
    for a0 in starts:
        theta0 = [init.p[n] for n in free_p]
        for f in active:
            pair = init.tf.get(f)
            theta0.extend((pair["alpha"], pair["beta"]) if pair else (a0, DEFAULT_TF_START[1]))
        theta0 = np.array(theta0, dtype=float)
        if theta0.size == 0:
            params = ShellParameters(**init.p, fixed=set(P_NAMES))
            return params, _report(flows, q_hc, params, prob.idx, skip, 0)
        trial = levenberg_marquardt(prob.residual, prob.jacobian, theta0, max_iter=max_iter,
                                    project=prob.project, raise_on_failure=False)
        if not trial.converged:
            logger.info("start alpha=%.2f did not converge in %d iterations", a0, max_iter)
            continue
        if res is None or trial.cost < res.cost:
            res = trial
    if res is None:
        raise ConvergenceError(f"Levenberg-Marquardt did not converge in {max_iter} iterations from any start")
    if res.clamped:
        logger.warning("transfer-function pole clamped at |alpha| = %g during the fit", ALPHA_MAX)
    try:
        cov = res.covariance()
    except RankDeficiencyError as exc:
        raise RankDeficiencyError(f"singular J^T J at the optimum ({exc}); reduce the parameter set") from exc
    p, tf = prob.split(res.x)
    pvals = dict(init.p)
    pvals.update(p)
    sig = dict(zip(prob.names, np.sqrt(np.clip(np.diag(cov), 0.0, None))))
    params = ShellParameters(
        **pvals,
        tf={f: {"alpha": a, "beta": b} for f, (a, b) in tf.items()},
        fixed=set(P_NAMES) - set(free_p),
        sigma=sig,
        covariance=cov,
        cov_names=prob.names,
    )
    return params, _report(flows, q_hc, params, prob.idx, skip, prob.n_params, res.iterations, res.converged, res.message)


def corrective_flow(flows: HeatFlowSet, params: ShellParameters) -> TimeSeries:
    """Process load that makes the unmodified audit model reproduce the fitted behaviour."""
    s = sum((params.p[n] - 1.0) * flows[P_TO_FLOW[n]].values for n in P_NAMES)
    return flows.q1.with_values(s + tf_terms(flows, params))


def corrective_flow_per_zone(flows: HeatFlowSet, params: ShellParameters) -> dict[str, TimeSeries]:
    """Zone split of :func:`corrective_flow`; the transfer functions are linear so it sums exactly."""
    out = {}
    for zone, zf in flows.per_zone.items():
        s = sum((params.p[n] - 1.0) * zf[P_TO_FLOW[n]].values for n in P_NAMES)
        for flow, pair in params.tf.items():
            s = s + kernels.tf_filter(zf[flow].values, pair["alpha"], pair["beta"])
        out[zone] = zf["q1"].with_values(s)
    return out


def select_window(
    flows: HeatFlowSet,
    dominant: str,
    thresholds: dict[str, float],
    min_steps: int = 4,
) -> list[tuple[datetime, datetime]]:
    """Contiguous runs where ``|dominant| >= threshold`` and every other listed ``|flow| <= threshold``."""
    if dominant not in thresholds:
        raise ConfigError(f"no threshold given for dominant flow {dominant!r}")
    ok = np.abs(flows[dominant].values) >= thresholds[dominant]
    for name, thr in thresholds.items():
        if name != dominant:
            ok &= np.abs(flows[name].values) <= thr
    step = timedelta(seconds=flows.step)
    return [
        (flows.start + i * step, flows.start + j * step)
        for i, j in contiguous_runs(ok)
        if j - i >= min_steps
    ]


def window_mask(flows: HeatFlowSet, windows) -> np.ndarray:
    mask = np.zeros(len(flows), dtype=bool)
    for start, stop in windows:
        i0 = flows.q1.index_of(start)
        i1 = flows.q1.index_of(stop)
        mask[max(i0, 0):min(i1, len(flows))] = True
    return mask


def numerical_rank(X: np.ndarray) -> int:
    s = np.linalg.svd(X, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    tol = max(X.shape) * np.finfo(float).eps * s[0]
    return int(np.sum(s > tol))


@dataclass
class OverparamReport:
    components: list[tuple[str, float, float]]  # (name, U, A)
    blc: float
    component_rank: int
    component_condition: float
    p_blc: float
    single_condition: float

    def lines(self) -> list[str]:
        out = [f"{n}: U={u:.4g} W/m2K, A={a:.4g} m2, UA={u * a:.4g} W/K" for n, u, a in self.components]
        out.append(f"BLC = sum UA = {self.blc:.6g} W/K")
        out.append(f"component regression: rank {self.component_rank} of {len(self.components)}, "
                   f"condition number {self.component_condition:.3g}")
        out.append(f"single-parameter regression: p_BLC = {self.p_blc:.12g}")
        return out


def overparam_demo(box, data) -> OverparamReport:
    """Component U-values are not identifiable from whole-building data; their sum is.

    ``box`` must be a massless single-zone model and ``data`` must carry the
    measured delivered heat.
    """
    from .engine import RunSpec, discretize, simulate

    if len(box.zones) != 1:
        raise ConfigError("overparametrization demo expects a single-zone box")
    zone = box.zones[0]
    if any(layer.heat_capacity > 0 for s in zone.surfaces for layer in s.layers):
        raise ConfigError("overparametrization demo expects massless layers")
    if data.q_hc_measured is None:
        raise DataError("measured delivered heat required")
    comps = [(s.name, s.u_value, s.area) for s in zone.surfaces]
    comps += [(w.name, w.u_value, w.area) for w in zone.windows]
    blc = sum(u * a for _, u, a in comps)
    dt = data.t_in[zone.name].values - data.weather.t_out.values
    X = np.column_stack([a * dt for _, _, a in comps])
    sv = np.linalg.svd(X, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    run = simulate(discretize(box), RunSpec(data.weather, data.lep, setpoints=data.t_in))
    q_nom = run.ideal_load[zone.name].values
    q_mea = data.q_hc_measured.values
    p = float(q_nom @ q_mea / (q_nom @ q_nom))
    return OverparamReport(comps, blc, numerical_rank(X), cond, p, 1.0)


def bootstrap_parameters(
    flows: HeatFlowSet,
    q_hc: TimeSeries,
    params: ShellParameters,
    block: int = 24,
    n_boot: int = 50,
    seed: int = 0,
    skip: int = SKIP_HOURS,
) -> dict[str, float]:
    """Moving-block residual bootstrap standard deviations of every fitted parameter."""
    rng = np.random.default_rng(seed)
    pred = predicted_load(flows, params).values
    resid = q_hc.values - pred
    idx = _mask(len(flows), skip)
    r = resid[idx]
    n = r.size
    if n < block:
        raise DataError("window shorter than one bootstrap block")
    starts_max = n - block + 1
    draws: dict[str, list[float]] = {}
    active = list(params.tf)
    for _ in range(n_boot):
        pieces = []
        while sum(len(p) for p in pieces) < n:
            s = int(rng.integers(0, starts_max))
            pieces.append(r[s:s + block])
        rb = np.concatenate(pieces)[:n]
        y = q_hc.values.copy()
        y[idx] = pred[idx] + rb
        q_star = q_hc.with_values(y)
        lin, _ = fit_linear(flows, q_star, free=params.free, skip=skip, vif_limit=None)
        if active:
            fit, _ = fit_nonlinear(flows, q_star, active_tfs=active, init=_with_tf(lin, params), skip=skip)
        else:
            fit = lin
        for k, v in fit.values().items():
            draws.setdefault(k, []).append(v)
    free_names = set(params.free) | {k for k in params.values() if k.startswith(("alpha_", "beta_"))}
    return {k: float(np.std(v, ddof=1)) for k, v in draws.items() if k in free_names}


def _with_tf(lin: ShellParameters, ref: ShellParameters) -> ShellParameters:
    return ShellParameters(**lin.p, tf={k: dict(v) for k, v in ref.tf.items()}, fixed=set(lin.fixed))
