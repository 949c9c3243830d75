"""Ground-truth measurement: Pareto stationarity and empirical rates.

The stationarity measure at x is min over simplex weights of
||sum_s lambda_s grad f_s(x)||^2, computed from *true* full gradients with
a fresh QP solve at a tight tolerance (tighter than the optimizer's, so
measurement is never the error floor). It is zero exactly on the
Pareto-stationary set. These evaluations are measurement and are never
charged to the IFO counters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .records import RunRecord
from .simplex import min_norm_value, solve_general

__all__ = [
    "StationarityReport",
    "RateFit",
    "InsufficientDataError",
    "stationarity_measure",
    "distance_to_optimum",
    "running_average",
    "fit_rate",
    "fit_rate_series",
]

METRIC_QP_TOL = 1e-12


@dataclass
class StationarityReport:
    value: float
    lambda_star: np.ndarray
    per_task_grad_norms: np.ndarray


class InsufficientDataError(ValueError):
    """Raised when a rate fit has fewer usable samples than required."""


def stationarity_measure(problem, x, tol: float = METRIC_QP_TOL) -> StationarityReport:
    """Pareto-stationarity measure from exact full gradients."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    grads = problem.full_gradients(x)
    lam = solve_general(grads, tol=tol)
    return StationarityReport(
        value=min_norm_value(grads, lam),
        lambda_star=lam,
        per_task_grad_norms=np.linalg.norm(grads, axis=1),
    )


def distance_to_optimum(x, x_star) -> float:
    """Squared Euclidean distance ||x - x*||^2."""
    x = np.asarray(x, dtype=np.float64)
    x_star = np.asarray(x_star, dtype=np.float64)
    if x.shape != x_star.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_star.shape}")
    diff = x - x_star
    return float(diff @ diff)


def running_average(values) -> np.ndarray:
    """Cesaro (running) average of a series; NaNs are carried through."""
    values = np.asarray(values, dtype=np.float64)
    return np.cumsum(values) / np.arange(1, values.size + 1)


@dataclass
class RateFit:
    """Least-squares rate fit over a tail window.

    ``fitted_coefficient`` is the log-log slope for the ``inverse_t`` model
    (near -1 for a c/t series) and the decay coefficient b for the
    ``exponential`` model (value ~ exp(a - b*t)).
    """

    model: str
    fitted_coefficient: float
    r_squared: float
    intercept: float
    n_samples: int


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def fit_rate_series(
    ts, values, model: str, tail_fraction: float = 0.5, min_samples: int = 20
) -> RateFit:
    """Fit a decay model to (t, value) samples over the trailing window.

    ``inverse_t`` regresses log(value) on log(t); ``exponential`` regresses
    log(value) on t. Non-finite and non-positive values are dropped (the
    log is undefined there), as is t = 0 for the inverse model.
    """
    if model not in ("inverse_t", "exponential"):
        raise ValueError(f"unknown rate model {model!r}")
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    ts = np.asarray(ts, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    keep = np.isfinite(values) & (values > 0) & np.isfinite(ts)
    if model == "inverse_t":
        keep &= ts > 0
    ts, values = ts[keep], values[keep]
    tail = int(np.ceil(tail_fraction * ts.size))
    ts, values = ts[-tail:], values[-tail:]
    if ts.size < min_samples:
        raise InsufficientDataError(
            f"rate fit needs >= {min_samples} usable samples in the tail window, got {ts.size}"
        )
    if model == "inverse_t":
        slope, intercept, r2 = _linear_fit(np.log(ts), np.log(values))
        coeff = slope
    else:
        slope, intercept, r2 = _linear_fit(ts, np.log(values))
        coeff = -slope
    return RateFit(
        model=model,
        fitted_coefficient=coeff,
        r_squared=r2,
        intercept=intercept,
        n_samples=int(ts.size),
    )


def fit_rate(
    record: RunRecord, model: str, tail_fraction: float = 0.5, min_samples: int = 20
) -> RateFit:
    """Rate fit on a run's recorded stationarity series."""
    return fit_rate_series(
        record.t, record.stationarity, model, tail_fraction, min_samples
    )
