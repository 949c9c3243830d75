"""Finite-sum multi-objective benchmark problems with analytic gradients.

A problem bundles S objectives over shared parameters x in R^d, each of the
form f_s(x) = (1/n) * sum_j f_sj(x), and exposes exact per-sample gradients.
One "sample" j carries the data for *all* tasks, so evaluating the
multi-gradient at one sample is the unit the IFO counters charge for.

Built-ins (see :func:`make_builtin`):

* ``sc_toy``             - 1-D pair [x^2, exp(-x)], n=1. The two gradients
                           conflict for x > 0 and agree for x < 0, so the
                           Pareto-stationary set is exactly [0, inf).
* ``mean_quadratic``     - equal-curvature quadratics 0.5*||x - a_sj||^2.
                           The recursive gradient estimator is exact on this
                           family, which makes it a good estimator testbed.
* ``quadratic_tasks``    - per-sample diagonal curvatures, heterogeneous
                           across tasks and samples.
* ``synthetic_two_task`` - two logistic heads on Gaussian-cluster data over
                           a shared trunk: additive linear (convex) or
                           one-hidden-layer tanh (nonconvex).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

__all__ = [
    "ProblemMetadata",
    "MultiObjectiveProblem",
    "ScToy",
    "MeanQuadratic",
    "QuadraticTasks",
    "SyntheticTwoTask",
    "make_builtin",
    "estimate_smoothness",
    "BUILTIN_NAMES",
]


@dataclass
class ProblemMetadata:
    """Static facts about a problem instance.

    ``smoothness_L``, ``strong_convexity_mu`` and ``variance_sigma2`` are
    populated only where analytically derivable; ``pareto_reference`` is a
    known Pareto-optimal point when one exists in closed form.
    """

    n: int
    S: int
    d: int
    smoothness_L: float | None = None
    strong_convexity_mu: float | None = None
    variance_sigma2: float | None = None
    pareto_reference: np.ndarray | None = None

    def __post_init__(self):
        if self.n < 1 or self.S < 1 or self.d < 1:
            raise ValueError("n, S and d must all be >= 1")
        if self.strong_convexity_mu is not None:
            if self.smoothness_L is None:
                raise ValueError("strong_convexity_mu requires smoothness_L")
            if self.strong_convexity_mu > self.smoothness_L:
                raise ValueError("strong_convexity_mu must not exceed smoothness_L")
        if self.pareto_reference is not None:
            self.pareto_reference = np.asarray(self.pareto_reference, dtype=np.float64)


class MultiObjectiveProblem:
    """Base class: validates indices/shapes, reduces over fixed sample order.

    Subclasses implement ``_values`` (per-sample losses for one task over an
    index batch) and ``_grad_mean`` (batch-mean gradient for one task). Both
    are pure, so problem evaluation is safe to call concurrently.
    """

    metadata: ProblemMetadata

    def __init__(self, metadata: ProblemMetadata):
        self.metadata = metadata
        self._all_idx = np.arange(metadata.n, dtype=np.int64)

    # -- hooks -------------------------------------------------------------

    def _values(self, s: int, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _grad_mean(self, s: int, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def initial_point(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    # -- validation --------------------------------------------------------

    def _check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.metadata.d,):
            raise ValueError(
                f"parameter vector has shape {x.shape}, expected ({self.metadata.d},)"
            )
        return x

    def _check_s(self, s: int) -> int:
        s = int(s)
        if not 0 <= s < self.metadata.S:
            raise ValueError(f"objective index {s} out of range [0, {self.metadata.S})")
        return s

    def _check_j(self, j: int) -> int:
        j = int(j)
        if not 0 <= j < self.metadata.n:
            raise ValueError(f"sample index {j} out of range [0, {self.metadata.n})")
        return j

    # -- public operations ---------------------------------------------------

    def sample_value(self, s: int, j: int, x) -> float:
        s, j, x = self._check_s(s), self._check_j(j), self._check_x(x)
        return float(self._values(s, np.array([j], dtype=np.int64), x)[0])

    def sample_gradient(self, s: int, j: int, x) -> np.ndarray:
        s, j, x = self._check_s(s), self._check_j(j), self._check_x(x)
        return self._grad_mean(s, np.array([j], dtype=np.int64), x)

    def batch_values(self, s: int, idx: np.ndarray, x) -> np.ndarray:
        return self._values(self._check_s(s), idx, self._check_x(x))

    def batch_gradient(self, s: int, idx: np.ndarray, x) -> np.ndarray:
        """Mean gradient over ``idx`` (fixed ascending-position reduction)."""
        return self._grad_mean(self._check_s(s), idx, self._check_x(x))

    def objective_value(self, s: int, x) -> float:
        s, x = self._check_s(s), self._check_x(x)
        return float(np.mean(self._values(s, self._all_idx, x)))

    def full_gradient(self, s: int, x) -> np.ndarray:
        s, x = self._check_s(s), self._check_x(x)
        return self._grad_mean(s, self._all_idx, x)

    def losses(self, x) -> np.ndarray:
        x = self._check_x(x)
        return np.array(
            [np.mean(self._values(s, self._all_idx, x)) for s in range(self.metadata.S)]
        )

    def full_gradients(self, x) -> np.ndarray:
        """All S full gradients stacked as an (S, d) matrix."""
        x = self._check_x(x)
        return np.stack(
            [self._grad_mean(s, self._all_idx, x) for s in range(self.metadata.S)]
        )


class ScToy(MultiObjectiveProblem):
    """F(x) = [x^2, exp(-x)] on R, treated as an n=1 finite sum.

    Both objectives are smooth with curvature at most e on x >= -1 (the fixed
    start), which is the L recorded in the metadata. x* = 0 is the edge of
    the Pareto-stationary set [0, inf).
    """

    def __init__(self):
        super().__init__(
            ProblemMetadata(
                n=1,
                S=2,
                d=1,
                smoothness_L=math.e,
                variance_sigma2=0.0,
                pareto_reference=np.array([0.0]),
            )
        )

    def _values(self, s, idx, x):
        val = x[0] ** 2 if s == 0 else math.exp(-x[0])
        return np.full(idx.shape[0], val)

    def _grad_mean(self, s, idx, x):
        g = 2.0 * x[0] if s == 0 else -math.exp(-x[0])
        return np.array([g])

    def initial_point(self, rng):
        return np.array([-1.0])


class MeanQuadratic(MultiObjectiveProblem):
    """f_sj(x) = 0.5 * ||x - a_sj||^2: unit curvature, per-sample anchors.

    Because every sample shares the same Hessian (identity), the recursive
    correction (x_t - x_{t-1}) is exact for *any* batch, making this the
    reference problem for estimator telescoping tests. L = mu = 1 and the
    gradient variance is the anchor scatter, both exact.
    """

    def __init__(self, anchors: np.ndarray):
        anchors = np.asarray(anchors, dtype=np.float64)
        if anchors.ndim != 3:
            raise ValueError("anchors must have shape (S, n, d)")
        S, n, d = anchors.shape
        task_means = anchors.mean(axis=1)
        scatter = anchors - task_means[:, None, :]
        sigma2 = float(np.max(np.mean(np.sum(scatter**2, axis=2), axis=1)))
        super().__init__(
            ProblemMetadata(
                n=n,
                S=S,
                d=d,
                smoothness_L=1.0,
                strong_convexity_mu=1.0,
                variance_sigma2=sigma2,
                pareto_reference=task_means[0] if S == 1 else None,
            )
        )
        self.anchors = anchors

    def _values(self, s, idx, x):
        diff = x - self.anchors[s, idx]
        return 0.5 * np.sum(diff * diff, axis=1)

    def _grad_mean(self, s, idx, x):
        return x - np.mean(self.anchors[s, idx], axis=0)

    def initial_point(self, rng):
        return rng.standard_normal(self.metadata.d)


class QuadraticTasks(MultiObjectiveProblem):
    """f_sj(x) = 0.5 * (x - a_sj)^T diag(c_sj) (x - a_sj).

    Per-sample diagonal curvatures make single-sample recursive corrections
    genuinely random across batches, while keeping L and mu analytic:
    the task-s Hessian is diag(mean_j c_sj).
    """

    def __init__(self, anchors: np.ndarray, curvatures: np.ndarray):
        anchors = np.asarray(anchors, dtype=np.float64)
        curvatures = np.asarray(curvatures, dtype=np.float64)
        if anchors.shape != curvatures.shape or anchors.ndim != 3:
            raise ValueError("anchors and curvatures must share shape (S, n, d)")
        if np.any(curvatures <= 0):
            raise ValueError("curvatures must be positive")
        S, n, d = anchors.shape
        mean_curv = curvatures.mean(axis=1)  # (S, d)
        super().__init__(
            ProblemMetadata(
                n=n,
                S=S,
                d=d,
                smoothness_L=float(mean_curv.max()),
                strong_convexity_mu=float(mean_curv.min()),
            )
        )
        self.anchors = anchors
        self.curvatures = curvatures

    def _values(self, s, idx, x):
        return kernels.quad_values(self.curvatures[s], self.anchors[s], idx, x)

    def _grad_mean(self, s, idx, x):
        return kernels.quad_grad_mean(self.curvatures[s], self.anchors[s], idx, x)

    def initial_point(self, rng):
        return rng.standard_normal(self.metadata.d)


class SyntheticTwoTask(MultiObjectiveProblem):
    """Two logistic-loss classification heads over a shared trunk.

    Data are n Gaussian feature vectors with two label sets generated from
    correlated random hyperplanes plus margin noise, so the tasks share
    structure but pull the trunk in different directions.

    ``trunk='linear'``: logit for task s is (v + w_s) . a + b_s where v is a
    shared vector. The losses are convex in the stacked parameters
    [v, w_0, b_0, w_1, b_1] (d = 3*p + 2 for p input features).

    ``trunk='tanh'``: logit is w_s . tanh(W a) + b_s with a shared hidden
    layer W of h units; nonconvex, d = h*p + 2h + 2.
    """

    def __init__(self, features: np.ndarray, labels: np.ndarray, trunk: str, hidden: int):
        features = np.ascontiguousarray(features, dtype=np.float64)
        labels = np.ascontiguousarray(labels, dtype=np.float64)
        n, p = features.shape
        if labels.shape != (2, n):
            raise ValueError(f"labels must have shape (2, {n})")
        if trunk not in ("linear", "tanh"):
            raise ValueError(f"trunk must be 'linear' or 'tanh', got {trunk!r}")
        self.features = features
        self.labels = labels
        self.trunk = trunk
        self.hidden = int(hidden)
        self.p = p
        d = 3 * p + 2 if trunk == "linear" else self.hidden * p + 2 * self.hidden + 2
        super().__init__(ProblemMetadata(n=n, S=2, d=d))

    # parameter layout helpers
    def _unpack_linear(self, x, s):
        p = self.p
        v = x[:p]
        off = p + s * (p + 1)
        return v, x[off : off + p], x[off + p]

    def _unpack_tanh(self, x, s):
        h, p = self.hidden, self.p
        wmat = x[: h * p].reshape(h, p)
        off = h * p + s * (h + 1)
        return wmat, x[off : off + h], x[off + h]

    def _values(self, s, idx, x):
        if self.trunk == "linear":
            v, w, b = self._unpack_linear(x, s)
            return kernels.lin2_values(self.features, self.labels[s], idx, v, w, b)
        wmat, w, b = self._unpack_tanh(x, s)
        return kernels.tanh2_values(self.features, self.labels[s], idx, wmat, w, b)

    def _grad_mean(self, s, idx, x):
        g = np.zeros(self.metadata.d)
        if self.trunk == "linear":
            p = self.p
            v, w, b = self._unpack_linear(x, s)
            gvw, gb = kernels.lin2_grad_mean(self.features, self.labels[s], idx, v, w, b)
            g[:p] = gvw
            off = p + s * (p + 1)
            g[off : off + p] = gvw
            g[off + p] = gb
        else:
            h, p = self.hidden, self.p
            wmat, w, b = self._unpack_tanh(x, s)
            gmat, gw, gb = kernels.tanh2_grad_mean(
                self.features, self.labels[s], idx, wmat, w, b
            )
            g[: h * p] = gmat.ravel()
            off = h * p + s * (h + 1)
            g[off : off + h] = gw
            g[off + h] = gb
        return g

    def initial_point(self, rng):
        return 0.1 * rng.standard_normal(self.metadata.d)


# ---------------------------------------------------------------------------
# factory
# ---------------------------------------------------------------------------

BUILTIN_NAMES = ("sc_toy", "mean_quadratic", "quadratic_tasks", "synthetic_two_task")


def _pop_int(params: dict, key: str, default: int) -> int:
    value = params.pop(key, default)
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise ValueError(f"size parameter {key!r} must be an integer, got {value!r}")
    return int(value)


def _reject_sizes_with_explicit_arrays(params: dict, name: str) -> None:
    clash = {"n", "S", "d"} & set(params)
    if clash:
        raise ValueError(
            f"{name}: size parameters {sorted(clash)} conflict with explicit arrays"
        )


def _name_key(name: str) -> int:
    """Stable small integer from a problem name (keys the generation stream)."""
    acc = 0
    for ch in name:
        acc = (acc * 31 + ord(ch)) % (2**31)
    return acc


def make_builtin(name: str, seed: int = 0, size_params: dict | None = None):
    """Construct a built-in problem, deterministic in (name, seed, sizes).

    ``size_params`` accepts per-problem keys; unknown keys are rejected:

    * mean_quadratic:     n, S, d, anchors (explicit (S, n, d) array)
    * quadratic_tasks:    n, S, d, anchors, curvatures
    * synthetic_two_task: n, d_in, hidden, trunk ('linear' or 'tanh')
    * sc_toy:             no size parameters
    """
    params = dict(size_params or {})
    rng = np.random.default_rng(np.random.SeedSequence([_name_key(name), int(seed)]))

    if name == "sc_toy":
        problem = ScToy()
    elif name == "mean_quadratic":
        anchors = params.pop("anchors", None)
        if anchors is not None:
            _reject_sizes_with_explicit_arrays(params, name)
            anchors = np.asarray(anchors, dtype=np.float64)
        else:
            n = _pop_int(params, "n", 2)
            S = _pop_int(params, "S", 1)
            d = _pop_int(params, "d", 1)
            centers = 2.0 * rng.standard_normal((S, 1, d))
            anchors = centers + rng.standard_normal((S, n, d))
        problem = MeanQuadratic(anchors)
    elif name == "quadratic_tasks":
        anchors = params.pop("anchors", None)
        curvatures = params.pop("curvatures", None)
        if anchors is not None and curvatures is not None:
            _reject_sizes_with_explicit_arrays(params, name)
            anchors = np.asarray(anchors, dtype=np.float64)
            curvatures = np.asarray(curvatures, dtype=np.float64)
        elif anchors is not None or curvatures is not None:
            raise ValueError("quadratic_tasks needs both anchors and curvatures or neither")
        else:
            n = _pop_int(params, "n", 64)
            S = _pop_int(params, "S", 2)
            d = _pop_int(params, "d", 2)
            centers = 2.0 * rng.standard_normal((S, 1, d))
            anchors = centers + rng.standard_normal((S, n, d))
            task_scale = (1.0 + 0.5 * np.arange(S))[:, None, None]
            curvatures = task_scale * rng.uniform(0.5, 1.5, size=(S, n, d))
        problem = QuadraticTasks(anchors, curvatures)
    elif name == "synthetic_two_task":
        n = _pop_int(params, "n", 1024)
        d_in = _pop_int(params, "d_in", 10)
        hidden = _pop_int(params, "hidden", 8)
        trunk = params.pop("trunk", "linear")
        features = rng.standard_normal((n, d_in))
        v0 = rng.standard_normal(d_in)
        v0 /= np.linalg.norm(v0)
        raw = rng.standard_normal(d_in)
        perp = raw - (raw @ v0) * v0
        perp /= np.linalg.norm(perp)
        theta = math.pi / 3.0  # 60 degrees between the label hyperplanes
        v1 = math.cos(theta) * v0 + math.sin(theta) * perp
        labels = np.empty((2, n))
        for s, direction in enumerate((v0, v1)):
            margin = features @ direction + 0.4 * rng.standard_normal(n)
            labels[s] = (margin > 0).astype(np.float64)
        problem = SyntheticTwoTask(features, labels, trunk, hidden)
    else:
        raise ValueError(f"unknown problem name {name!r}; expected one of {BUILTIN_NAMES}")

    if params:
        raise ValueError(f"unknown size parameters for {name!r}: {sorted(params)}")
    return problem


def estimate_smoothness(
    problem: MultiObjectiveProblem,
    points=None,
    n_points: int = 3,
    fd_step: float = 1e-5,
    iters: int = 40,
    seed: int = 0,
) -> float:
    """Largest per-task Hessian eigenvalue seen at sampled points.

    Power iteration on Hessian-vector products, where each product is a
    central finite difference of the exact full gradient. Used to pick
    learning rates eta <= 1/(2*L_hat) when L is not analytic.
    """
    rng = np.random.default_rng(seed)
    if points is None:
        base = problem.initial_point(rng)
        points = [base] + [
            base + 0.5 * rng.standard_normal(base.shape) for _ in range(n_points - 1)
        ]
    best = 0.0
    for x in points:
        x = np.asarray(x, dtype=np.float64)
        eps = fd_step * (1.0 + float(np.max(np.abs(x))))
        for s in range(problem.metadata.S):
            v = rng.standard_normal(problem.metadata.d)
            v /= np.linalg.norm(v)
            lam = 0.0
            for _ in range(iters):
                hv = (
                    problem.full_gradient(s, x + eps * v)
                    - problem.full_gradient(s, x - eps * v)
                ) / (2.0 * eps)
                lam = float(np.linalg.norm(hv))
                if lam <= 1e-300:
                    break
                v = hv / lam
            best = max(best, lam)
    return best
