"""Per-task gradient estimators and exact sample accounting.

The estimators maintain one vector per task, refreshed either by a full
pass, by an adaptively sized uniform batch, or advanced by the recursive
minibatch correction

    u_t^s = u_{t-1}^s + (1/|A|) * sum_{j in A} (g_sj(x_t) - g_sj(x_{t-1})),

with the *same* batch A shared across tasks and across both evaluation
points. Sample cost is tracked in IFO calls, where one call evaluates the
per-sample gradients of all S tasks at one sample:

* full refresh        -> n calls
* batch mean of size k -> k calls
* recursive step       -> k calls in ``paper`` mode (the x_{t-1} gradients
  are treated as cached from the previous step, the convention complexity
  analyses of recursive estimators use) or 2k in ``strict`` mode (both
  evaluation points charged).

Batch draws are uniform without replacement and returned in ascending
order so reductions are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "IfoCounter",
    "BatchSpec",
    "GammaTracker",
    "draw_batch",
    "full_refresh",
    "minibatch_mean",
    "recursive_update",
    "adaptive_batch_size",
    "adaptive_refresh",
    "gamma_update",
    "estimate_sigma2",
]

IFO_MODES = ("paper", "strict")


@dataclass
class IfoCounter:
    """Monotone counter of incremental first-order oracle calls."""

    mode: str = "paper"
    total_calls: int = 0

    def __post_init__(self):
        if self.mode not in IFO_MODES:
            raise ValueError(f"ifo mode must be one of {IFO_MODES}, got {self.mode!r}")

    def add_full(self, n: int) -> None:
        self.total_calls += int(n)

    def add_batch(self, size: int) -> None:
        self.total_calls += int(size)

    def add_recursive(self, size: int) -> None:
        self.total_calls += int(size) if self.mode == "paper" else 2 * int(size)


@dataclass(frozen=True)
class BatchSpec:
    """A set of distinct sample indices plus how they were drawn."""

    indices: np.ndarray
    kind: str  # full | minibatch | adaptive

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size < 1:
            raise ValueError("batch must contain at least one index")
        if np.unique(idx).size != idx.size:
            raise ValueError("batch indices must be distinct")
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return int(self.indices.size)


def draw_batch(rng: np.random.Generator, n: int, size: int, kind: str = "minibatch") -> BatchSpec:
    """Draw ``size`` distinct indices uniformly from [0, n), ascending."""
    if not 1 <= size <= n:
        raise ValueError(f"batch size {size} out of range [1, {n}]")
    idx = np.sort(rng.choice(n, size=size, replace=False))
    return BatchSpec(indices=idx.astype(np.int64), kind=kind)


def full_refresh(problem, x: np.ndarray, counter: IfoCounter) -> np.ndarray:
    """Exact anchor: u^s = full gradient for every task; charges n calls."""
    est = problem.full_gradients(x)
    counter.add_full(problem.metadata.n)
    return est


def minibatch_mean(problem, x: np.ndarray, batch: BatchSpec, counter: IfoCounter) -> np.ndarray:
    """Plain batch-mean estimate at one point; charges |batch| calls."""
    est = np.stack(
        [problem.batch_gradient(s, batch.indices, x) for s in range(problem.metadata.S)]
    )
    counter.add_batch(batch.size)
    return est


def recursive_update(
    problem,
    prev: np.ndarray,
    x_prev: np.ndarray,
    x_curr: np.ndarray,
    batch: BatchSpec,
    counter: IfoCounter,
) -> np.ndarray:
    """Advance the recursive estimate from x_prev to x_curr over one batch.

    ``prev`` must have been formed at ``x_prev``; the same indices are used
    at both points for every task.
    """
    if batch.kind not in ("minibatch", "full"):
        raise ValueError(f"recursive update expects a minibatch, got kind {batch.kind!r}")
    S = problem.metadata.S
    est = np.empty_like(prev)
    for s in range(S):
        correction = problem.batch_gradient(s, batch.indices, x_curr) - problem.batch_gradient(
            s, batch.indices, x_prev
        )
        est[s] = prev[s] + correction
    counter.add_recursive(batch.size)
    return est


def adaptive_batch_size(
    c_gamma: float, c_eps: float, sigma2: float, gamma: float, epsilon: float, n: int
) -> int:
    """min{ceil(c_gamma*sigma2/gamma), ceil(c_eps*sigma2/epsilon), n}, clamped to >= 1.

    ``gamma = inf`` (the empty-epoch sentinel) and ``gamma = 0`` both drop
    the first term, mirroring the c/0+ -> inf limit of the rule.
    """
    if c_gamma <= 0 or c_eps <= 0:
        raise ValueError("c_gamma and c_eps must be positive")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    candidates = [n]
    if math.isfinite(gamma) and gamma > 0.0:
        candidates.append(math.ceil(c_gamma * sigma2 / gamma))
    candidates.append(math.ceil(c_eps * sigma2 / epsilon))
    return max(1, min(candidates))


def adaptive_refresh(
    problem,
    x: np.ndarray,
    sigma2: float,
    gamma: float,
    epsilon: float,
    c_gamma: float,
    c_eps: float,
    rng: np.random.Generator,
    counter: IfoCounter,
) -> tuple[np.ndarray, BatchSpec]:
    """Adaptive-batch anchor: batch mean over an epsilon-adaptive batch."""
    n = problem.metadata.n
    size = adaptive_batch_size(c_gamma, c_eps, sigma2, gamma, epsilon, n)
    batch = draw_batch(rng, n, size, kind="adaptive")
    est = minibatch_mean(problem, x, batch, counter)
    return est, batch


@dataclass(frozen=True)
class GammaTracker:
    """Trailing per-epoch average of squared common-direction norms.

    ``plain`` accumulates ||d_i||^2 / q; ``momentum_weighted`` ages the
    running sum by alpha^2 before each new term, which equals the explicit
    sum of alpha^(2*(t-i)) * ||d_i||^2 / q over the epoch. Before anything
    is recorded the value is +inf, so the gamma term of the batch-size rule
    drops out at the first refresh.
    """

    mode: str = "plain"
    alpha: float = 0.0
    epoch_start: int = 0
    accumulated: float = 0.0
    count: int = 0

    def __post_init__(self):
        if self.mode not in ("plain", "momentum_weighted"):
            raise ValueError(f"unknown gamma mode {self.mode!r}")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")

    @property
    def value(self) -> float:
        return math.inf if self.count == 0 else self.accumulated

    def reset(self, epoch_start: int) -> "GammaTracker":
        return replace(self, epoch_start=epoch_start, accumulated=0.0, count=0)


def gamma_update(tracker: GammaTracker, d_norm_sq: float, q: int) -> GammaTracker:
    """Record one squared direction norm into the epoch tracker."""
    if d_norm_sq < 0:
        raise ValueError("d_norm_sq must be non-negative")
    if q < 1:
        raise ValueError("q must be >= 1")
    acc = tracker.accumulated
    if tracker.mode == "momentum_weighted":
        acc *= tracker.alpha**2
    acc += d_norm_sq / q
    return replace(tracker, accumulated=acc, count=tracker.count + 1)


def estimate_sigma2(
    problem, x: np.ndarray, rng: np.random.Generator, pilot_size: int = 64
) -> float:
    """Pilot estimate of the per-task gradient variance bound at one point.

    Averages ||g_sj(x) - mean_j g_sj(x)||^2 over a uniform pilot batch and
    takes the worst task. Used when no analytic sigma^2 is available.
    """
    n = problem.metadata.n
    k = min(int(pilot_size), n)
    idx = np.sort(rng.choice(n, size=k, replace=False)) if k < n else np.arange(n)
    worst = 0.0
    for s in range(problem.metadata.S):
        grads = np.stack(
            [problem.batch_gradient(s, np.array([j], dtype=np.int64), x) for j in idx]
        )
        centered = grads - grads.mean(axis=0)
        worst = max(worst, float(np.mean(np.sum(centered**2, axis=1))))
    return worst
