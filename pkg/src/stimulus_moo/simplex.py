"""Min-norm point in the convex hull of task gradients.

The weight vector lambda lives on the probability simplex
C = {y in [0,1]^S : sum y = 1}; the combined direction is d = G^T lambda for
a gradient matrix G with rows u^1..u^S. Solving

    min_{lambda in C} || G^T lambda ||^2

gives the common descent direction: d satisfies d . u^s >= ||d||^2 for every
task, and ||d|| = 0 certifies Pareto stationarity.

S=1 and S=2 have closed forms. For S >= 3 we run projected gradient descent
with step 1/(2*lambda_max(G G^T)) (top eigenvalue estimated by power
iteration) and certify convergence by the Frank-Wolfe duality gap

    gap(lambda) = max_s ( d . d - d . u^s ) <= tol,

which upper-bounds the objective suboptimality. When the optimal lambda is
non-unique only the objective value (equivalently d, the min-norm point of a
convex set) is contractual; the returned lambda is whatever the iteration
reaches from the uniform start. An all-zero G short-circuits to uniform
weights and d = 0.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "QPError",
    "project_simplex",
    "solve_two_task",
    "solve_general",
    "min_norm_value",
    "frank_wolfe_gap",
]


class QPError(RuntimeError):
    """Raised when the simplex QP fails to certify convergence.

    Carries the last iterate and its Frank-Wolfe gap for diagnostics.
    """

    def __init__(self, message: str, last_lambda=None, residual: float | None = None):
        super().__init__(message)
        self.last_lambda = last_lambda
        self.residual = residual


def _check_matrix(G) -> np.ndarray:
    G = np.atleast_2d(np.asarray(G, dtype=np.float64))
    if G.ndim != 2:
        raise ValueError("gradient matrix must be 2-D with shape (S, d)")
    if not np.all(np.isfinite(G)):
        raise ValueError("gradient matrix contains non-finite entries")
    return G


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-threshold)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ValueError("input must be a 1-D vector of length >= 1")
    if not np.all(np.isfinite(v)):
        raise ValueError("input contains non-finite entries")
    u = np.sort(v)[::-1]
    cssv = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    valid = u - cssv / ks > 0
    rho = np.nonzero(valid)[0][-1]
    theta = cssv[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def solve_two_task(u1, u2) -> np.ndarray:
    """Closed-form two-task weights.

    Minimizing ||g*u1 + (1-g)*u2||^2 over g in [0,1] gives
    g* = clip((u2 - u1) . u2 / ||u1 - u2||^2, 0, 1); identical gradients get
    the symmetric (0.5, 0.5).
    """
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    if u1.shape != u2.shape or u1.ndim != 1:
        raise ValueError(f"gradient shapes differ: {u1.shape} vs {u2.shape}")
    diff = u1 - u2
    denom = float(diff @ diff)
    if denom == 0.0:
        return np.array([0.5, 0.5])
    gamma = float(np.clip(-(diff @ u2) / denom, 0.0, 1.0))
    return np.array([gamma, 1.0 - gamma])


def min_norm_value(G, lam) -> float:
    """Objective ||sum_s lambda_s u^s||^2 at the given weights."""
    G = _check_matrix(G)
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape != (G.shape[0],):
        raise ValueError(f"weights have shape {lam.shape}, expected ({G.shape[0]},)")
    d = G.T @ lam
    return float(d @ d)


def frank_wolfe_gap(G, lam) -> float:
    """max_s (d . d - d . u^s) for d = G^T lambda; <= 0 iff lambda optimal."""
    G = _check_matrix(G)
    lam = np.asarray(lam, dtype=np.float64)
    d = G.T @ lam
    return float(d @ d - np.min(G @ d))


def _top_eigenvalue(M: np.ndarray) -> float:
    """Power-iteration estimate of the top eigenvalue of a PSD matrix."""
    S = M.shape[0]
    v = np.full(S, 1.0 / np.sqrt(S))
    w = M @ v
    if float(np.linalg.norm(w)) == 0.0:
        # uniform start landed in the kernel; restart from the heaviest axis
        v = np.zeros(S)
        v[int(np.argmax(np.diag(M)))] = 1.0
        w = M @ v
    lam = 0.0
    for _ in range(200):
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            break
        v = w / norm
        w = M @ v
        new_lam = float(v @ w)
        if abs(new_lam - lam) <= 1e-13 * max(1.0, abs(new_lam)):
            lam = new_lam
            break
        lam = new_lam
    return max(lam, 0.0)


def _support_polish(M: np.ndarray, lam: np.ndarray) -> np.ndarray | None:
    """Exact KKT solve of the QP restricted to the current support.

    Returns a feasible candidate or None; used to finish off projected
    gradient once the active face has settled.
    """
    support = np.nonzero(lam > 0.0)[0]
    if support.size == 0:
        return None
    k = support.size
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = 2.0 * M[np.ix_(support, support)]
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    cand = np.zeros(lam.size)
    cand[support] = sol[:k]
    if np.any(cand < 0.0) or not np.all(np.isfinite(cand)):
        return None
    total = cand.sum()
    if total <= 0.0:
        return None
    return cand / total


def solve_general(G, tol: float = 1e-10, max_iters: int = 10000) -> np.ndarray:
    """Solve the min-norm simplex QP for an (S, d) gradient matrix.

    Parameters
    ----------
    G : array-like, shape (S, d)
        Per-task gradient estimates, one row per task.
    tol : float
        Certification target: Frank-Wolfe gap or projected-gradient
        fixed-point residual at most ``tol``.
    max_iters : int
        Iteration budget for the projected-gradient loop.

    Raises
    ------
    QPError
        If neither certificate reaches ``tol`` within ``max_iters``.
    """
    G = _check_matrix(G)
    if tol <= 0:
        raise ValueError("tol must be positive")
    S = G.shape[0]
    if S == 1:
        return np.array([1.0])
    M = G @ G.T
    if not M.any():
        return np.full(S, 1.0 / S)  # all-zero gradients: Pareto-stationary signal
    if S == 2:
        return solve_two_task(G[0], G[1])

    step = 1.0 / (2.0 * max(_top_eigenvalue(M), np.max(np.abs(M)) * 1e-12))
    lam = np.full(S, 1.0 / S)
    mv = M @ lam
    for it in range(max_iters):
        gap = float(lam @ mv - np.min(mv))
        if gap <= tol:
            return lam
        if (it + 1) % 50 == 0:
            cand = _support_polish(M, lam)
            if cand is not None:
                cand_mv = M @ cand
                if float(cand @ cand_mv) <= float(lam @ mv):
                    lam, mv = cand, cand_mv
                    continue
        new_lam = project_simplex(lam - step * 2.0 * mv)
        residual = float(np.max(np.abs(new_lam - lam)))
        lam = new_lam
        mv = M @ lam
        if residual <= tol:
            gap = float(lam @ mv - np.min(mv))
            if gap <= max(tol, 1e2 * np.finfo(np.float64).eps * float(lam @ mv)):
                return lam
    gap = float(lam @ mv - np.min(mv))
    raise QPError(
        f"simplex QP failed to reach tol={tol:g} in {max_iters} iterations "
        f"(final gap {gap:.3e})",
        last_lambda=lam,
        residual=gap,
    )
