"""The unified multi-gradient descent loop and its six variants.

Every variant shares the same iteration skeleton: form per-task gradient
estimates u_t^s, solve the min-norm simplex QP for weights lambda_t, move
along d_t = sum_s lambda_t^s u_t^s. They differ only in how u_t^s is
produced and whether the parameter update carries momentum:

* ``mgd``             - exact full gradients every iteration
* ``smgd``            - plain minibatch means every iteration
* ``stimulus``        - full refresh every q iterations, recursive
                        correction in between
* ``stimulus_m``      - stimulus + heavy-ball momentum
                        x_{t+1} = x_t + alpha*(x_t - x_{t-1}) - eta*d_t
* ``stimulus_plus``   - refresh batches sized adaptively from the trailing
                        epoch average of ||d||^2 instead of full passes
* ``stimulus_m_plus`` - adaptive refresh + momentum (alpha-discounted
                        trailing average)

Randomness is keyed by (seed, iteration, purpose), so any quantity is
reproducible in isolation: batch draws do not depend on how many other
draws happened, the initial point depends only on the seed, and variants
sharing a seed see identical batch sequences.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import metrics
from .estimators import (
    GammaTracker,
    IfoCounter,
    adaptive_refresh,
    draw_batch,
    estimate_sigma2,
    full_refresh,
    gamma_update,
    minibatch_mean,
    recursive_update,
)
from .records import RunRecord
from .simplex import QPError, solve_general

__all__ = [
    "VARIANTS",
    "MOMENTUM_VARIANTS",
    "ADAPTIVE_VARIANTS",
    "OptimizerConfig",
    "ResolvedRun",
    "IterateState",
    "resolve_run",
    "initial_state",
    "step",
    "run",
    "OutputWeighting",
    "select_output_weighted",
]

VARIANTS = ("mgd", "smgd", "stimulus", "stimulus_m", "stimulus_plus", "stimulus_m_plus")
MOMENTUM_VARIANTS = frozenset({"stimulus_m", "stimulus_m_plus"})
ADAPTIVE_VARIANTS = frozenset({"stimulus_plus", "stimulus_m_plus"})

# purpose tags for the keyed RNG streams
_RNG_INIT = 0
_RNG_BATCH = 1
_RNG_ADAPTIVE = 2
_RNG_NOISE = 3
_RNG_PILOT = 4


def _rng(seed: int, t: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(t), purpose)))


@dataclass
class OptimizerConfig:
    """User-facing hyperparameters; unset q and batch_size default to
    ceil(sqrt(n)), the theory's inner-loop choice.

    ``grad_noise`` adds zero-mean Gaussian noise (given std) to every
    gradient estimate, reproducing experiments that inject stochasticity
    on otherwise exact toy gradients. ``ifo_mode`` selects the recursive
    step's sample accounting (see estimators). ``early_stop`` optionally
    halts once measured stationarity falls to ``epsilon``; off by default
    so rate checks see full trajectories.
    """

    T: int
    eta: float
    seed: int = 0
    alpha: Optional[float] = None
    q: Optional[int] = None
    batch_size: Optional[int] = None
    c_gamma: float = 32.0
    c_eps: float = 32.0
    epsilon: float = 1e-3
    sigma2: Optional[float] = None
    ifo_mode: str = "paper"
    grad_noise: float = 0.0
    qp_tol: float = 1e-10
    qp_max_iters: int = 10000
    metric_cadence: Optional[int] = None
    early_stop: bool = False
    keep_trajectory: bool = False


@dataclass(frozen=True)
class ResolvedRun:
    """A validated, fully concrete run plan (internal form of the config)."""

    variant: str
    T: int
    eta: float
    alpha: float
    q: int
    batch_size: int
    c_gamma: float
    c_eps: float
    epsilon: float
    sigma2: Optional[float]
    seed: int
    ifo_mode: str
    grad_noise: float
    qp_tol: float
    qp_max_iters: int
    cadence: int
    early_stop: bool
    keep_trajectory: bool
    x0: np.ndarray

    def config_snapshot(self) -> dict:
        snap = {
            "variant": self.variant,
            "T": self.T,
            "eta": self.eta,
            "alpha": self.alpha,
            "q": self.q,
            "batch_size": self.batch_size,
            "c_gamma": self.c_gamma,
            "c_eps": self.c_eps,
            "epsilon": self.epsilon,
            "sigma2": self.sigma2,
            "seed": self.seed,
            "ifo_mode": self.ifo_mode,
            "grad_noise": self.grad_noise,
            "metric_cadence": self.cadence,
        }
        return snap


@dataclass
class IterateState:
    """Mutable loop state. ``estimate`` was formed at ``x_prev`` once t > 0,
    which is exactly what both the recursive correction and the momentum
    update need from the previous iteration. One ``counter`` object is
    aliased across all successor states of a run; read it as you go if you
    need per-step charges."""

    x_curr: np.ndarray
    x_prev: np.ndarray
    estimate: Optional[np.ndarray]
    t: int
    counter: IfoCounter
    gamma: Optional[GammaTracker] = None
    last_lambda: Optional[np.ndarray] = None
    last_d: Optional[np.ndarray] = None
    last_d_norm_sq: Optional[float] = None


def _default_cadence(problem, q: int) -> int:
    meta = problem.metadata
    return 1 if (meta.d <= 10 and meta.n <= 4096) else q


def resolve_run(problem, variant: str, cfg: OptimizerConfig) -> ResolvedRun:
    """Validate a config against a problem and fill every default.

    Also resolves the variance bound for adaptive variants: explicit config
    value, else problem metadata, else a 64-sample pilot estimate at x0
    (not charged to the IFO counter; it is setup, not optimization).
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    meta = problem.metadata
    if cfg.T < 0:
        raise ValueError("T must be >= 0")
    if cfg.eta <= 0:
        raise ValueError("eta must be positive")
    if cfg.seed < 0:
        raise ValueError("seed must be a non-negative integer")
    if cfg.ifo_mode not in ("paper", "strict"):
        raise ValueError(f"ifo_mode must be 'paper' or 'strict', got {cfg.ifo_mode!r}")
    if cfg.grad_noise < 0:
        raise ValueError("grad_noise must be non-negative")
    if cfg.epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if cfg.c_gamma <= 0 or cfg.c_eps <= 0:
        raise ValueError("c_gamma and c_eps must be positive")

    alpha = 0.0
    if variant in MOMENTUM_VARIANTS:
        if cfg.alpha is None:
            raise ValueError(f"variant {variant!r} requires alpha")
        if not 0.0 <= cfg.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        alpha = float(cfg.alpha)

    root = math.ceil(math.sqrt(meta.n))
    q = root if cfg.q is None else int(cfg.q)
    batch_size = root if cfg.batch_size is None else int(cfg.batch_size)
    if q < 1:
        raise ValueError("q must be >= 1")
    if not 1 <= batch_size <= meta.n:
        raise ValueError(f"batch_size {batch_size} out of range [1, {meta.n}]")

    cadence = cfg.metric_cadence
    if cadence is None:
        cadence = _default_cadence(problem, q)
    if cadence < 1:
        raise ValueError("metric_cadence must be >= 1")

    if meta.smoothness_L is not None and cfg.eta > 1.0 / (2.0 * meta.smoothness_L):
        warnings.warn(
            f"eta={cfg.eta:g} exceeds 1/(2L)={1.0 / (2.0 * meta.smoothness_L):g}; "
            "outside the guaranteed-descent regime",
            stacklevel=2,
        )

    x0 = problem.initial_point(_rng(cfg.seed, 0, _RNG_INIT))
    sigma2 = cfg.sigma2
    if variant in ADAPTIVE_VARIANTS and sigma2 is None:
        sigma2 = meta.variance_sigma2
        if sigma2 is None:
            sigma2 = estimate_sigma2(problem, x0, _rng(cfg.seed, 0, _RNG_PILOT))
    if sigma2 is not None and sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")

    return ResolvedRun(
        variant=variant,
        T=int(cfg.T),
        eta=float(cfg.eta),
        alpha=alpha,
        q=q,
        batch_size=batch_size,
        c_gamma=float(cfg.c_gamma),
        c_eps=float(cfg.c_eps),
        epsilon=float(cfg.epsilon),
        sigma2=sigma2,
        seed=int(cfg.seed),
        ifo_mode=cfg.ifo_mode,
        grad_noise=float(cfg.grad_noise),
        qp_tol=float(cfg.qp_tol),
        qp_max_iters=int(cfg.qp_max_iters),
        cadence=int(cadence),
        early_stop=bool(cfg.early_stop),
        keep_trajectory=bool(cfg.keep_trajectory),
        x0=np.asarray(x0, dtype=np.float64),
    )


def initial_state(problem, res: ResolvedRun) -> IterateState:
    gamma = None
    if res.variant in ADAPTIVE_VARIANTS:
        mode = "momentum_weighted" if res.variant in MOMENTUM_VARIANTS else "plain"
        gamma = GammaTracker(mode=mode, alpha=res.alpha)
    return IterateState(
        x_curr=res.x0.copy(),
        x_prev=res.x0.copy(),
        estimate=None,
        t=0,
        counter=IfoCounter(mode=res.ifo_mode),
        gamma=gamma,
    )


def step(state: IterateState, res: ResolvedRun, problem) -> IterateState:
    """One iteration: estimate, weight, move. Returns the successor state.

    The refresh branch runs on iterations with t % q == 0 (always, for mgd;
    never, for smgd, which re-estimates from a fresh batch each time).
    """
    t = state.t
    variant = res.variant
    x = state.x_curr
    gamma = state.gamma

    if variant == "mgd":
        est = full_refresh(problem, x, state.counter)
    elif variant == "smgd":
        batch = draw_batch(_rng(res.seed, t, _RNG_BATCH), problem.metadata.n, res.batch_size)
        est = minibatch_mean(problem, x, batch, state.counter)
    elif t % res.q == 0:
        if variant in ADAPTIVE_VARIANTS:
            est, _ = adaptive_refresh(
                problem,
                x,
                res.sigma2,
                gamma.value,
                res.epsilon,
                res.c_gamma,
                res.c_eps,
                _rng(res.seed, t, _RNG_ADAPTIVE),
                state.counter,
            )
            gamma = gamma.reset(epoch_start=t)
        else:
            est = full_refresh(problem, x, state.counter)
    else:
        batch = draw_batch(_rng(res.seed, t, _RNG_BATCH), problem.metadata.n, res.batch_size)
        est = recursive_update(problem, state.estimate, state.x_prev, x, batch, state.counter)

    if res.grad_noise > 0.0:
        est = est + res.grad_noise * _rng(res.seed, t, _RNG_NOISE).standard_normal(est.shape)

    try:
        lam = solve_general(est, tol=res.qp_tol, max_iters=res.qp_max_iters)
    except QPError as exc:
        raise QPError(
            f"iteration {t}: {exc}", last_lambda=exc.last_lambda, residual=exc.residual
        ) from exc
    d = est.T @ lam
    if variant in MOMENTUM_VARIANTS:
        x_new = x + res.alpha * (x - state.x_prev) - res.eta * d
    else:
        x_new = x - res.eta * d
    d_norm_sq = float(d @ d)
    if gamma is not None:
        gamma = gamma_update(gamma, d_norm_sq, res.q)

    return IterateState(
        x_curr=x_new,
        x_prev=x,
        estimate=est,
        t=t + 1,
        counter=state.counter,
        gamma=gamma,
        last_lambda=lam,
        last_d=d,
        last_d_norm_sq=d_norm_sq,
    )


def run(problem, variant: str, cfg: OptimizerConfig) -> RunRecord:
    """Execute T iterations and record the trajectory.

    Per recorded row: per-task losses, the stationarity measure (on the
    metric cadence, from true gradients; always at the final iterate),
    ||d_t||^2, cumulative IFO spent to produce the iterate, and squared
    distance to the known Pareto point when the problem has one. Fully
    deterministic given (problem, variant, config). On a step failure the
    partial record is attached to the raised exception as
    ``exc.partial_record``.
    """
    res = resolve_run(problem, variant, cfg)
    meta = problem.metadata
    state = initial_state(problem, res)
    reference = meta.pareto_reference

    ts, ifos, stats, dnorms, losses, dists = [], [], [], [], [], []
    trajectory = [state.x_curr.copy()] if res.keep_trajectory else None

    def record_row(t, x, ifo_before, d_norm_sq, want_stat, guard=False):
        ts.append(t)
        ifos.append(ifo_before)
        losses.append(problem.losses(x))
        value = np.nan
        if want_stat:
            if guard:
                # a step error is already being reported; a failing
                # measurement at the bad iterate must not mask it
                try:
                    value = metrics.stationarity_measure(problem, x).value
                except Exception:
                    value = np.nan
            else:
                value = metrics.stationarity_measure(problem, x).value
        stats.append(value)
        dnorms.append(np.nan if d_norm_sq is None else d_norm_sq)
        if reference is not None:
            dists.append(metrics.distance_to_optimum(x, reference))

    def build():
        return RunRecord(
            variant=variant,
            seed=res.seed,
            config=res.config_snapshot(),
            t=np.array(ts, dtype=np.int64),
            ifo=np.array(ifos, dtype=np.int64),
            stationarity=np.array(stats),
            d_norm_sq=np.array(dnorms),
            losses=np.stack(losses) if losses else np.zeros((0, meta.S)),
            dist_sq=np.array(dists) if reference is not None else None,
            trajectory=np.stack(trajectory) if trajectory is not None else None,
        )

    for t in range(res.T):
        x_t = state.x_curr
        ifo_before = state.counter.total_calls
        want_stat = t % res.cadence == 0
        try:
            state = step(state, res, problem)
        except Exception as exc:
            record_row(t, x_t, ifo_before, None, want_stat, guard=True)
            exc.partial_record = build()
            raise
        record_row(t, x_t, ifo_before, state.last_d_norm_sq, want_stat)
        if trajectory is not None:
            trajectory.append(state.x_curr.copy())
        if res.early_stop and want_stat and stats[-1] <= res.epsilon:
            break
        if not np.all(np.isfinite(state.x_curr)):
            err = RuntimeError(f"iterate diverged to non-finite values at t={t}")
            err.partial_record = build()
            raise err

    # final evaluation row (the only row when T = 0)
    record_row(state.t, state.x_curr, state.counter.total_calls, None, True)
    return build()


@dataclass(frozen=True)
class OutputWeighting:
    """Randomized output rule for the strongly convex regime.

    Iterate t (1-based) is returned with probability proportional to
    w_t = (1 - 3*mu*eta/4)^(1-t): geometrically increasing, so late
    iterates dominate. Requires 3*mu*eta/4 < 1.
    """

    mu: float
    eta: float

    def __post_init__(self):
        if self.mu <= 0 or self.eta <= 0:
            raise ValueError("mu and eta must be positive")
        if 0.75 * self.mu * self.eta >= 1.0:
            raise ValueError("requires 3*mu*eta/4 < 1")

    @property
    def base(self) -> float:
        return 1.0 - 0.75 * self.mu * self.eta

    def weights(self, length: int) -> np.ndarray:
        """Raw w_t for t = 1..length (may overflow to inf for huge lengths)."""
        if length < 1:
            raise ValueError("length must be >= 1")
        t = np.arange(1, length + 1, dtype=np.float64)
        return self.base ** (1.0 - t)

    def normalized_weights(self, length: int) -> np.ndarray:
        """Selection probabilities, computed in log space for stability."""
        if length < 1:
            raise ValueError("length must be >= 1")
        t = np.arange(1, length + 1, dtype=np.float64)
        logw = (1.0 - t) * math.log(self.base)
        logw -= logw.max()
        w = np.exp(logw)
        return w / w.sum()


def select_output_weighted(trajectory, weighting: OutputWeighting, rng) -> np.ndarray:
    """Sample one iterate from a trajectory under the weighted output rule."""
    points = np.asarray(trajectory, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[0] < 1:
        raise ValueError("trajectory must be non-empty")
    probs = weighting.normalized_weights(points.shape[0])
    idx = int(rng.choice(points.shape[0], p=probs))
    return points[idx]
