"""One-hidden-layer perceptron fitted to the parameter-estimation residuals.

The inputs are the hourly macro flows (plus transfer-function flows). They
already carry the history of the driving functions, so each hour is treated
as an independent sample.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .timeseries import TimeSeries, Unit

logger = logging.getLogger(__name__)

INPUT_NAMES = ("q_blc", "q_in", "q_sun", "q_lep", "q_tf_in", "q_tf_sun")
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 9
    max_epochs: int = 20000
    learn_rate: float = 0.2
    momentum: float = 0.9
    optimizer: str = "momentum"  # or "gauss_newton"
    patience: int = 50
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 0.5:
            raise ConfigError("validation_fraction must lie in (0, 0.5)")
        if self.optimizer not in ("momentum", "gauss_newton"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.hidden < 1:
            raise ConfigError("hidden must be >= 1")


@dataclass
class ResidualNet:
    input_names: tuple[str, ...]
    mean: np.ndarray
    scale: np.ndarray
    w1: np.ndarray  # (n_in, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: float
    target_mean: float = 0.0
    target_scale: float = 1.0

    def __post_init__(self):
        n_in = len(self.input_names)
        if np.any(np.asarray(self.scale) <= 0):
            raise ValueError("normalization scales must be positive")
        if self.w1.shape != (n_in, self.b1.shape[0]) or self.w2.shape != self.b1.shape:
            raise ValueError("weight shapes inconsistent with inputs / hidden size")

    @property
    def hidden(self) -> int:
        return self.b1.shape[0]

    @property
    def n_params(self) -> int:
        return n_weights(len(self.input_names), self.hidden)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "input_names": list(self.input_names),
            "activation": "tanh",
            "hidden": self.hidden,
            "normalization": {"mean": self.mean.tolist(), "scale": self.scale.tolist()},
            "target": {"mean": self.target_mean, "scale": self.target_scale},
            "w1": self.w1.ravel().tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResidualNet":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise DataError(f"unsupported residual-net schema_version {d.get('schema_version')!r}")
        names = tuple(d["input_names"])
        hidden = int(d["hidden"])
        return cls(
            input_names=names,
            mean=np.array(d["normalization"]["mean"], dtype=float),
            scale=np.array(d["normalization"]["scale"], dtype=float),
            w1=np.array(d["w1"], dtype=float).reshape(len(names), hidden),
            b1=np.array(d["b1"], dtype=float),
            w2=np.array(d["w2"], dtype=float),
            b2=float(d["b2"]),
            target_mean=float(d["target"]["mean"]),
            target_scale=float(d["target"]["scale"]),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "ResidualNet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def n_weights(n_in: int, hidden: int) -> int:
    return n_in * hidden + 2 * hidden + 1


def unpack(theta: np.ndarray, n_in: int, hidden: int):
    i = n_in * hidden
    w1 = theta[:i].reshape(n_in, hidden)
    b1 = theta[i:i + hidden]
    w2 = theta[i + hidden:i + 2 * hidden]
    b2 = theta[i + 2 * hidden]
    return w1, b1, w2, b2


def pack(w1, b1, w2, b2) -> np.ndarray:
    return np.concatenate([np.ravel(w1), b1, w2, [b2]])


def forward(theta, Z, hidden):
    w1, b1, w2, b2 = unpack(theta, Z.shape[1], hidden)
    H = np.tanh(Z @ w1 + b1)
    return H @ w2 + b2, H


def loss_and_grad(theta, Z, y, hidden):
    """Half mean squared error and its gradient by backpropagation."""
    n = Z.shape[0]
    w1, b1, w2, b2 = unpack(theta, Z.shape[1], hidden)
    pred, H = forward(theta, Z, hidden)
    err = pred - y
    loss = 0.5 * float(err @ err) / n
    d_out = err / n
    g_w2 = H.T @ d_out
    g_b2 = d_out.sum()
    d_h = np.outer(d_out, w2) * (1.0 - H**2)
    g_w1 = Z.T @ d_h
    g_b1 = d_h.sum(axis=0)
    return loss, pack(g_w1, g_b1, g_w2, g_b2)


def output_jacobian(theta, Z, hidden):
    """d prediction / d theta for every row (for Gauss-Newton)."""
    w1, b1, w2, b2 = unpack(theta, Z.shape[1], hidden)
    H = np.tanh(Z @ w1 + b1)
    dH = (1.0 - H**2) * w2  # (n, hidden)
    n = Z.shape[0]
    j_w1 = (Z[:, :, None] * dH[:, None, :]).reshape(n, -1)
    return np.hstack([j_w1, dH, H, np.ones((n, 1))])


def _matrix(inputs: dict[str, TimeSeries], names) -> np.ndarray:
    missing = [n for n in names if n not in inputs]
    if missing:
        raise DataError(f"residual net inputs missing: {missing}")
    ref = inputs[names[0]]
    for n in names:
        if not inputs[n].aligned_with(ref):
            raise DataError(f"residual net input {n} not aligned")
    return np.column_stack([inputs[n].values for n in names])


def train(
    inputs: dict[str, TimeSeries],
    residuals: TimeSeries,
    cfg: TrainConfig = TrainConfig(),
    names=INPUT_NAMES,
    skip: int = 0,
) -> tuple[ResidualNet, dict]:
    """Fit the network; the last ``validation_fraction`` of rows (chronologically) drive early stopping."""
    names = tuple(names)
    X = _matrix(inputs, names)[skip:]
    if not residuals.aligned_with(inputs[names[0]]):
        raise DataError("residuals not aligned with net inputs")
    y_raw = residuals.values[skip:]
    n_p = n_weights(len(names), cfg.hidden)
    if X.shape[0] < 10 * n_p:
        raise DataError(f"{X.shape[0]} rows is fewer than 10x the {n_p} network weights; refusing to train")

    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale <= 0] = 1.0
    t_mean = float(y_raw.mean())
    t_scale = float(y_raw.std()) or 1.0
    Z = (X - mean) / scale
    y = (y_raw - t_mean) / t_scale

    n_val = max(1, int(round(cfg.validation_fraction * Z.shape[0])))
    Zt, yt, Zv, yv = Z[:-n_val], y[:-n_val], Z[-n_val:], y[-n_val:]

    rng = np.random.default_rng(cfg.seed)
    n_in = len(names)
    w1 = rng.normal(0.0, np.sqrt(1.0 / n_in), (n_in, cfg.hidden))
    w2 = rng.normal(0.0, np.sqrt(1.0 / cfg.hidden), cfg.hidden) * 0.1
    theta = pack(w1, np.zeros(cfg.hidden), w2, 0.0)

    def val_rmse(th):
        p, _ = forward(th, Zv, cfg.hidden)
        return float(np.sqrt(np.mean((p - yv) ** 2)))

    best = theta.copy()
    best_val = val_rmse(theta)
    best_epoch = 0
    epochs = 0
    if cfg.optimizer == "momentum":
        vel = np.zeros_like(theta)
        for epoch in range(1, cfg.max_epochs + 1):
            _, g = loss_and_grad(theta, Zt, yt, cfg.hidden)
            vel = cfg.momentum * vel - cfg.learn_rate * g
            theta = theta + vel
            v = val_rmse(theta)
            epochs = epoch
            if v < best_val - 1e-12:
                best, best_val, best_epoch = theta.copy(), v, epoch
            elif epoch - best_epoch >= cfg.patience:
                break
    else:
        theta, best, best_val, best_epoch, epochs = _gauss_newton(theta, Zt, yt, val_rmse, cfg)

    net = ResidualNet(names, mean, scale, *unpack(best, n_in, cfg.hidden)[:3], float(best[-1]), t_mean, t_scale)
    pred_t, _ = forward(best, Zt, cfg.hidden)
    metrics = {
        "train_rmse": float(np.sqrt(np.mean((pred_t - yt) ** 2))) * t_scale,
        "validation_rmse": best_val * t_scale,
        "residual_rms": float(np.sqrt(np.mean(y_raw**2))),
        "epochs": epochs,
        "best_epoch": best_epoch,
        "n_train": int(Zt.shape[0]),
        "n_validation": int(n_val),
        "optimizer": cfg.optimizer,
    }
    return net, metrics


def _gauss_newton(theta, Zt, yt, val_rmse, cfg):
    from .lm import levenberg_marquardt

    state = {"best": theta.copy(), "best_val": val_rmse(theta), "best_it": 0, "it": 0}

    def cb(it, x, cost):
        state["it"] = it
        v = val_rmse(x)
        if v < state["best_val"] - 1e-12:
            state.update(best=x.copy(), best_val=v, best_it=it)
        return it - state["best_it"] >= max(5, cfg.patience // 5)

    res = levenberg_marquardt(
        lambda th: forward(th, Zt, cfg.hidden)[0] - yt,
        lambda th: output_jacobian(th, Zt, cfg.hidden),
        theta,
        max_iter=min(cfg.max_epochs, 500),
        raise_on_failure=False,
        callback=cb,
    )
    return res.x, state["best"], state["best_val"], state["best_it"], state["it"]


def predict(net: ResidualNet, inputs: dict[str, TimeSeries]) -> TimeSeries:
    X = _matrix(inputs, net.input_names)
    Z = (X - net.mean) / net.scale
    theta = pack(net.w1, net.b1, net.w2, net.b2)
    out, _ = forward(theta, Z, net.hidden)
    ref = inputs[net.input_names[0]]
    return TimeSeries(ref.start, ref.step, net.target_mean + net.target_scale * out, Unit.W)


def net_inputs(flows, params) -> dict[str, TimeSeries]:
    """The six net inputs: the four macro flows and the ``in``/``sun`` transfer-function flows."""
    from . import kernels

    out = {n: flows[n] for n in ("q_blc", "q_in", "q_sun", "q_lep")}
    for flow in ("q_in", "q_sun"):
        pair = params.tf.get(flow)
        vals = kernels.tf_filter(flows[flow].values, pair["alpha"], pair["beta"]) if pair else np.zeros(len(flows))
        out[f"q_tf_{flow[2:]}"] = flows[flow].with_values(vals)
    return out
