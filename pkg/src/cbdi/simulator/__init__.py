"""Monte Carlo engine for CBDI paths."""

import os

# numba sizes its thread pool at import; honour the package variable first.
if os.environ.get("CBDI_THREADS") and not os.environ.get("NUMBA_NUM_THREADS"):
    os.environ["NUMBA_NUM_THREADS"] = os.environ["CBDI_THREADS"]
# the bundled TBB is too old for numba; the OpenMP-free pool needs nothing extra
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from cbdi.simulator.engine import (  # noqa: E402
    AT_INFINITY,
    AT_ZERO,
    DROP,
    GAUSSIAN_CORRECTION,
    INTERIOR,
    Batch,
    Drifts,
    HittingStatistics,
    InitialValues,
    NoiseBundle,
    OrderingReport,
    Path,
    RefinementStudy,
    SimConfig,
    Truncations,
    batch_dual_killed,
    batch_truncated,
    configure_threads,
    coupled_compare,
    estimate_laplace,
    hitting_statistics,
    laplace_values,
    mean_and_error,
    refinement_studies,
    refinement_study,
    run_batch,
    simulate_dual_killed,
    simulate_minimal,
    simulate_truncated,
)
