"""Levenberg-Marquardt on damped normal equations with a x10 / /10 lambda schedule."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConvergenceError, RankDeficiencyError

logger = logging.getLogger(__name__)


@dataclass
class LMResult:
    x: np.ndarray
    residuals: np.ndarray
    jacobian: np.ndarray
    cost: float
    iterations: int
    converged: bool
    message: str
    clamped: bool = False

    def covariance(self) -> np.ndarray:
        """``s^2 (J^T J)^-1`` at the solution."""
        n, m = self.jacobian.shape
        if n <= m:
            raise RankDeficiencyError(f"{n} observations cannot support {m} parameters")
        jtj = self.jacobian.T @ self.jacobian
        scale = np.sqrt(np.diag(jtj))
        if np.any(scale == 0):
            raise RankDeficiencyError("Jacobian has an all-zero column")
        norm = jtj / np.outer(scale, scale)
        if np.linalg.cond(norm) > 1e14:
            raise RankDeficiencyError("J^T J is numerically singular")
        s2 = float(self.residuals @ self.residuals) / (n - m)
        return s2 * np.linalg.inv(norm) / np.outer(scale, scale)


def levenberg_marquardt(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    x0,
    max_iter: int = 200,
    ftol: float = 1e-10,
    gtol: float = 1e-8,
    lam0: float = 1e-3,
    project: Callable[[np.ndarray], tuple[np.ndarray, bool]] | None = None,
    raise_on_failure: bool = True,
    callback: Callable[[int, np.ndarray, float], bool] | None = None,
) -> LMResult:
    """Minimize ``sum(residual(x)**2)``.

    Convergence: relative cost decrease below ``ftol`` on an accepted step, or
    the scaled gradient ``max_j |J_j . r| / (|J_j| |r|)`` below ``gtol``.
    ``project`` maps a trial point back into the feasible set and reports
    whether it had to clamp. ``callback(it, x, cost)`` returning True stops early.
    """
    x = np.array(x0, dtype=float)
    r = residual(x)
    cost = float(r @ r)
    J = jacobian(x)
    lam = lam0
    clamped_any = False
    message = "max iterations reached"
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = J.T @ r
        col = np.linalg.norm(J, axis=0)
        rn = np.sqrt(cost)
        if rn == 0.0:
            converged, message = True, "zero residual"
            it -= 1
            break
        with np.errstate(invalid="ignore", divide="ignore"):
            scaled = np.where(col > 0, np.abs(g) / (col * rn), 0.0)
        if scaled.max(initial=0.0) < gtol:
            converged, message = True, "gradient tolerance"
            it -= 1
            break
        jtj = J.T @ J
        d = np.diag(jtj).copy()
        d[d <= 0] = 1e-12 * max(d.max(initial=1.0), 1.0)
        accepted = False
        while not accepted:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = x + step
            clamped = False
            if project is not None:
                trial, clamped = project(trial)
            if clamped and np.array_equal(trial, x):
                # projection undid the whole step
                lam *= 10.0
                if lam > 1e16:
                    break
                continue
            r_new = residual(trial)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                rel = (cost - cost_new) / max(cost, np.finfo(float).tiny)
                x, r, cost = trial, r_new, cost_new
                J = jacobian(x)
                clamped_any |= clamped
                lam = max(lam / 10.0, 1e-15)
                if rel < ftol and not clamped:
                    converged, message = True, "relative cost tolerance"
            else:
                lam *= 10.0
                if lam > 1e16:
                    break
        if converged:
            break
        if not accepted:
            converged, message = True, "no further descent (lambda saturated)"
            break
        if callback is not None and callback(it, x, cost):
            converged, message = True, "stopped by callback"
            break
    if not converged and raise_on_failure:
        raise ConvergenceError(f"Levenberg-Marquardt did not converge in {max_iter} iterations")
    if clamped_any:
        logger.debug("parameters clamped at bounds during Levenberg-Marquardt")
    return LMResult(x, r, J, cost, it, converged, message, clamped_any)
