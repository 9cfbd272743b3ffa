"""Global constants for qcdsim."""

from __future__ import annotations

CONFIG_ENV = "QCDSIM_CONFIG"
THREADS_ENV = "QCDSIM_THREADS"

OBS_LOG_FILENAME = "events.jsonl"

# Quadrature and integration tolerances.
KERNEL_ATOL = 1e-10
ODE_RTOL = 1e-9
ODE_ATOL = 1e-12
ORACLE_RTOL = 1e-10
ORACLE_ATOL = 1e-12
ORACLE_AGREEMENT = 1e-6
ORACLE_TRACE_DRIFT = 1e-9
ORACLE_POSITIVITY_FLOOR = -1e-10

# Below this κt the sinh-ratio in μ(t) switches to its series.
SMALL_KAPPA_T = 1e-6
# Below this κt the constant-coupling closed forms switch to their series.
SCENARIO_SERIES_KAPPA_T = 1e-3

PERTURBATIVE_LIMIT = 0.2

DEFAULT_GRID_COUNT = 101
GRID_ENVELOPE_FLOOR = 1e-12
ODE_CHUNK_SIZE = 64

FOCK_TAIL_TARGET = 1e-10
FOCK_TAIL_BREACH = 1e-8
FOCK_MAX_CUTOFF = 2048

WIGNER_TOL = 1e-8
WIGNER_ENVELOPE_FLOOR = 1e-14

PRESET_TOLERANCE = 0.2

CSV_FLOAT_FORMAT = "%.12g"
