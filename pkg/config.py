"""
Numerical defaults and runtime settings.

Tolerances are absolute Frobenius-norm thresholds unless noted otherwise.
Every value can be overridden per scenario through `Settings`.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

from errors import ConfigError

SEED = 42

# ── Algebra ───────────────────────────────────────────────────────────────────

ZERO_TOL = 1e-10
FREQ_TOL = 1e-9
DROP_TOL = 1e-12
RANK_TOL = 1e-9
HERMITIAN_TOL = 1e-10

# ── Dynamics ──────────────────────────────────────────────────────────────────

DEFAULT_DT = 0.01
NORM_DEFECT_BOUND = 1e-9
MAX_DT_REFINEMENTS = 3
TOP_LEVEL_WARNING = 1e-6
AGREEMENT_FACTOR = 10.0

# ── Finite-difference oracle ──────────────────────────────────────────────────

ORACLE_BASE_STEP = 1e-3
ORACLE_LEVELS = 2
MAX_ORACLE_CHAIN = 4
ORACLE_ORDER_SCALE = {1: 1.0, 2: 2.0, 3: 5.0, 4: 10.0}

# ── Command line ──────────────────────────────────────────────────────────────

FEEDBACK_MAX_DIM = 256

THREADS_ENV = "DECOQ_THREADS"


@dataclass(frozen=True)
class Settings:
    """Per-run overrides of the module defaults."""

    tol: float = ZERO_TOL
    rank_tol: float = RANK_TOL
    freq_tol: float = FREQ_TOL
    max_dim: Optional[int] = None
    max_ad_depth: Optional[int] = None
    max_stage: Optional[int] = None
    dt: float = DEFAULT_DT
    seed: int = SEED
    threads: int = 1

    @classmethod
    def from_env(cls, **overrides) -> "Settings":
        """Build settings, taking the thread bound from DECOQ_THREADS."""
        threads = read_thread_count()
        return cls(threads=threads, **{k: v for k, v in overrides.items() if v is not None})

    def with_overrides(self, **overrides) -> "Settings":
        """Return a copy with every non-None override applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def read_thread_count(environ=None) -> int:
    """Parse DECOQ_THREADS; unset means single-threaded."""
    environ = os.environ if environ is None else environ
    raw = environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


def thread_pool(threads: Optional[int] = None) -> ThreadPoolExecutor:
    """Executor bounded by the configured thread count."""
    return ThreadPoolExecutor(max_workers=threads or read_thread_count())
