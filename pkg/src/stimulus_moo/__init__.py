"""Variance-reduced stochastic multi-gradient methods for finite-sum MOO.

Library surface:

* :mod:`stimulus_moo.problems`   - benchmark problems with exact per-sample gradients
* :mod:`stimulus_moo.simplex`    - the min-norm simplex QP for descent weights
* :mod:`stimulus_moo.estimators` - recursive/adaptive gradient estimators + IFO accounting
* :mod:`stimulus_moo.optimizers` - the six algorithm variants and the run loop
* :mod:`stimulus_moo.metrics`    - Pareto-stationarity measure and rate fits
* :mod:`stimulus_moo.cli`        - the ``stimulus-moo`` experiment harness
"""

from .estimators import (
    BatchSpec,
    GammaTracker,
    IfoCounter,
    adaptive_batch_size,
    adaptive_refresh,
    draw_batch,
    estimate_sigma2,
    full_refresh,
    gamma_update,
    minibatch_mean,
    recursive_update,
)
from .kernels import get_backend, set_backend
from .metrics import (
    RateFit,
    StationarityReport,
    distance_to_optimum,
    fit_rate,
    fit_rate_series,
    running_average,
    stationarity_measure,
)
from .optimizers import (
    VARIANTS,
    IterateState,
    OptimizerConfig,
    OutputWeighting,
    initial_state,
    resolve_run,
    run,
    select_output_weighted,
    step,
)
from .problems import (
    MultiObjectiveProblem,
    ProblemMetadata,
    estimate_smoothness,
    make_builtin,
)
from .records import RunRecord, emit_csv, read_csv
from .simplex import (
    QPError,
    frank_wolfe_gap,
    min_norm_value,
    project_simplex,
    solve_general,
    solve_two_task,
)

__version__ = "0.1.0"
