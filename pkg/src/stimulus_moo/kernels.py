"""Hot batched loss/gradient kernels, in numba and pure-numpy flavors.

Every kernel takes an explicit ``idx`` array of sample indices and reduces
over it in a fixed (ascending-position) order, so results are reproducible
for a given backend regardless of caller-side threading. Gradient kernels
return the *mean* over the batch; value kernels return per-sample losses.

The numba flavor loops over samples; the numpy flavor vectorizes. Use
:func:`set_backend` to switch the dispatch table at runtime (the default
comes from the ``STIMULUS_MOO_BACKEND`` environment variable).
"""

import math

import numpy as np

from .backend import DEFAULT_BACKEND, HAS_NUMBA

if HAS_NUMBA:
    from numba import njit


# ---------------------------------------------------------------------------
# numpy flavor
# ---------------------------------------------------------------------------


def _sigmoid_np(m):
    # split by sign to avoid overflow in exp
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    em = np.exp(m[~pos])
    out[~pos] = em / (1.0 + em)
    return out


def _softplus_np(m):
    # log(1 + e^m) without overflow
    return np.maximum(m, 0.0) + np.log1p(np.exp(-np.abs(m)))


def quad_values_np(curv, anchors, idx, x):
    diff = x - anchors[idx]
    return 0.5 * np.sum(curv[idx] * diff * diff, axis=1)


def quad_grad_mean_np(curv, anchors, idx, x):
    return np.mean(curv[idx] * (x - anchors[idx]), axis=0)


def lin2_values_np(feats, labels, idx, v, w, b):
    m = feats[idx] @ (v + w) + b
    return _softplus_np(m) - labels[idx] * m


def lin2_grad_mean_np(feats, labels, idx, v, w, b):
    a = feats[idx]
    r = _sigmoid_np(a @ (v + w) + b) - labels[idx]
    gvw = (r @ a) / idx.shape[0]
    return gvw, float(np.mean(r))


def tanh2_values_np(feats, labels, idx, wmat, w, b):
    z = np.tanh(feats[idx] @ wmat.T)
    m = z @ w + b
    return _softplus_np(m) - labels[idx] * m


def tanh2_grad_mean_np(feats, labels, idx, wmat, w, b):
    a = feats[idx]
    z = np.tanh(a @ wmat.T)
    r = _sigmoid_np(z @ w + b) - labels[idx]
    back = (r[:, None] * (1.0 - z * z)) * w
    gmat = (back.T @ a) / idx.shape[0]
    gw = (r @ z) / idx.shape[0]
    return gmat, gw, float(np.mean(r))


# ---------------------------------------------------------------------------
# numba flavor
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _sigmoid_nb(m):
        if m >= 0.0:
            return 1.0 / (1.0 + math.exp(-m))
        em = math.exp(m)
        return em / (1.0 + em)

    @njit(cache=True)
    def _softplus_nb(m):
        if m > 0.0:
            return m + math.log1p(math.exp(-m))
        return math.log1p(math.exp(m))

    @njit(cache=True)
    def quad_values_nb(curv, anchors, idx, x):
        nb = idx.shape[0]
        d = x.shape[0]
        out = np.empty(nb)
        for i in range(nb):
            j = idx[i]
            acc = 0.0
            for k in range(d):
                diff = x[k] - anchors[j, k]
                acc += curv[j, k] * diff * diff
            out[i] = 0.5 * acc
        return out

    @njit(cache=True)
    def quad_grad_mean_nb(curv, anchors, idx, x):
        nb = idx.shape[0]
        d = x.shape[0]
        out = np.zeros(d)
        for i in range(nb):
            j = idx[i]
            for k in range(d):
                out[k] += curv[j, k] * (x[k] - anchors[j, k])
        return out / nb

    @njit(cache=True)
    def lin2_values_nb(feats, labels, idx, v, w, b):
        nb = idx.shape[0]
        p = v.shape[0]
        out = np.empty(nb)
        for i in range(nb):
            j = idx[i]
            m = b
            for k in range(p):
                m += feats[j, k] * (v[k] + w[k])
            out[i] = _softplus_nb(m) - labels[j] * m
        return out

    @njit(cache=True)
    def lin2_grad_mean_nb(feats, labels, idx, v, w, b):
        nb = idx.shape[0]
        p = v.shape[0]
        gvw = np.zeros(p)
        gb = 0.0
        for i in range(nb):
            j = idx[i]
            m = b
            for k in range(p):
                m += feats[j, k] * (v[k] + w[k])
            r = _sigmoid_nb(m) - labels[j]
            for k in range(p):
                gvw[k] += r * feats[j, k]
            gb += r
        return gvw / nb, gb / nb

    @njit(cache=True)
    def tanh2_values_nb(feats, labels, idx, wmat, w, b):
        nb = idx.shape[0]
        h, p = wmat.shape
        out = np.empty(nb)
        for i in range(nb):
            j = idx[i]
            m = b
            for u in range(h):
                acc = 0.0
                for k in range(p):
                    acc += wmat[u, k] * feats[j, k]
                m += w[u] * math.tanh(acc)
            out[i] = _softplus_nb(m) - labels[j] * m
        return out

    @njit(cache=True)
    def tanh2_grad_mean_nb(feats, labels, idx, wmat, w, b):
        nb = idx.shape[0]
        h, p = wmat.shape
        gmat = np.zeros((h, p))
        gw = np.zeros(h)
        gb = 0.0
        z = np.empty(h)
        for i in range(nb):
            j = idx[i]
            m = b
            for u in range(h):
                acc = 0.0
                for k in range(p):
                    acc += wmat[u, k] * feats[j, k]
                z[u] = math.tanh(acc)
                m += w[u] * z[u]
            r = _sigmoid_nb(m) - labels[j]
            for u in range(h):
                back = r * w[u] * (1.0 - z[u] * z[u])
                for k in range(p):
                    gmat[u, k] += back * feats[j, k]
                gw[u] += r * z[u]
            gb += r
        return gmat / nb, gw / nb, gb / nb


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_KERNEL_NAMES = (
    "quad_values",
    "quad_grad_mean",
    "lin2_values",
    "lin2_grad_mean",
    "tanh2_values",
    "tanh2_grad_mean",
)

_FLAVORS = {"numpy": {name: globals()[name + "_np"] for name in _KERNEL_NAMES}}
if HAS_NUMBA:
    _FLAVORS["numba"] = {name: globals()[name + "_nb"] for name in _KERNEL_NAMES}

_active = dict(_FLAVORS[DEFAULT_BACKEND])
_active_name = DEFAULT_BACKEND


def get_backend() -> str:
    """Name of the currently dispatched backend ('numba' or 'numpy')."""
    return _active_name


def set_backend(name: str) -> str:
    """Switch the kernel dispatch table; returns the previous backend name.

    Global and not thread-safe; meant for tests and benchmarks.
    """
    global _active_name
    if name not in _FLAVORS:
        raise ValueError(f"unknown backend {name!r}; available: {sorted(_FLAVORS)}")
    previous = _active_name
    _active.update(_FLAVORS[name])
    _active_name = name
    return previous


def quad_values(curv, anchors, idx, x):
    return _active["quad_values"](curv, anchors, idx, x)


def quad_grad_mean(curv, anchors, idx, x):
    return _active["quad_grad_mean"](curv, anchors, idx, x)


def lin2_values(feats, labels, idx, v, w, b):
    return _active["lin2_values"](feats, labels, idx, v, w, b)


def lin2_grad_mean(feats, labels, idx, v, w, b):
    return _active["lin2_grad_mean"](feats, labels, idx, v, w, b)


def tanh2_values(feats, labels, idx, wmat, w, b):
    return _active["tanh2_values"](feats, labels, idx, wmat, w, b)


def tanh2_grad_mean(feats, labels, idx, wmat, w, b):
    return _active["tanh2_grad_mean"](feats, labels, idx, wmat, w, b)
