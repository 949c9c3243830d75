"""Kernel backend selection.

The batched per-sample loss/gradient kernels exist in two functionally
identical flavors: numba-jitted loops (fast after first compile) and plain
vectorized numpy. The active flavor is chosen once at import from the
``STIMULUS_MOO_BACKEND`` environment variable:

* ``numba``  - require numba, fail loudly if it is missing
* ``numpy``  - pure-numpy fallback, no JIT
* unset/auto - numba when importable, numpy otherwise

Both flavors are deterministic run-to-run. They may differ from each other
in the last floating-point bit because reduction orders differ (sequential
loop vs numpy's pairwise summation), so pin the backend when byte-identical
output files matter.
"""

import os

_ENV_VAR = "STIMULUS_MOO_BACKEND"

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def _resolve(requested: str) -> str:
    requested = requested.strip().lower()
    if requested in ("", "auto"):
        return "numba" if HAS_NUMBA else "numpy"
    if requested == "numba":
        if not HAS_NUMBA:
            raise ImportError(
                f"{_ENV_VAR}=numba requested but numba is not importable"
            )
        return "numba"
    if requested == "numpy":
        return "numpy"
    raise ValueError(
        f"{_ENV_VAR} must be 'numba', 'numpy' or 'auto', got {requested!r}"
    )


DEFAULT_BACKEND = _resolve(os.environ.get(_ENV_VAR, "auto"))
