"""Serial recursion kernels: compiled when available, pure Python otherwise.

``lti_propagate(A, W, x0)``
    ``X[k] = A @ X[k-1] + W[k]`` with ``X[-1] = x0``. The time-stepping core of
    the thermal engine once the implicit step matrix has been factored.
``tf_filter(flow, alpha, beta)``
    First-order transfer function ``y[t] = alpha*y[t-1] + beta*(flow[t]-flow[t-1])``
    with ``y[0] = 0``.
``tf_filter_sens(flow, alpha, beta)``
    Same recursion plus its derivatives with respect to ``alpha`` and ``beta``.

Set ``EPE_PURE_PYTHON=1`` to force the fallback. ``BACKEND`` names the active one.
"""
import contextlib
import os

import numpy as np

from . import _pykernels

BACKEND = "python"

if not os.environ.get("EPE_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
else:
    _impl = _pykernels


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def lti_propagate(A, W, x0):
    return _impl.lti_propagate(_c(A), _c(W), _c(x0))


def tf_filter(flow, alpha, beta):
    return _impl.tf_filter(_c(flow), float(alpha), float(beta))


def tf_filter_sens(flow, alpha, beta):
    return _impl.tf_filter_sens(_c(flow), float(alpha), float(beta))


def available_backends():
    """Return ``{name: module}`` for every kernel implementation importable here."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found


@contextlib.contextmanager
def use_backend(name):
    """Temporarily route every kernel call through backend ``name`` (benchmarks, parity tests)."""
    global _impl
    mods = available_backends()
    if name not in mods:
        raise ValueError(f"kernel backend {name!r} not available; have {sorted(mods)}")
    saved = _impl
    _impl = mods[name]
    try:
        yield
    finally:
        _impl = saved


__all__ = ["BACKEND", "available_backends", "lti_propagate", "tf_filter", "tf_filter_sens", "use_backend"]
