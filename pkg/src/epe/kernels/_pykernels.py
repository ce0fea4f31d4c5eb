"""Pure-Python reference versions of the recursion kernels."""
import numpy as np


def lti_propagate(A, W, x0):
    A = np.ascontiguousarray(A, dtype=float)
    W = np.ascontiguousarray(W, dtype=float)
    out = np.empty((W.shape[0], A.shape[0]))
    x = np.asarray(x0, dtype=float)
    for k in range(W.shape[0]):
        x = A @ x + W[k]
        out[k] = x
    return out


def tf_filter(flow, alpha, beta):
    flow = np.asarray(flow, dtype=float)
    out = np.zeros(flow.shape[0])
    diff = np.diff(flow)
    prev = 0.0
    for t in range(1, flow.shape[0]):
        prev = alpha * prev + beta * diff[t - 1]
        out[t] = prev
    return out


def tf_filter_sens(flow, alpha, beta):
    flow = np.asarray(flow, dtype=float)
    n = flow.shape[0]
    out = np.zeros(n)
    da = np.zeros(n)
    db = np.zeros(n)
    diff = np.diff(flow)
    y = sa = sb = 0.0
    for t in range(1, n):
        d = diff[t - 1]
        sb = alpha * sb + d
        sa = alpha * sa + y
        y = alpha * y + beta * d
        out[t], da[t], db[t] = y, sa, sb
    return out, da, db
