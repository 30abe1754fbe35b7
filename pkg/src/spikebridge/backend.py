"""Kernel backend selection.

Hot numeric kernels ship in two interchangeable implementations: numba
``@njit`` loops (default when numba imports) and pure numpy. Setting the
environment variable ``SPIKEBRIDGE_NO_NUMBA=1`` before import forces the
numpy path; ``SPIKEBRIDGE_THREADS=N`` caps the numba thread pool.

Both backends pin the same left-to-right floating-point reduction order in
their contraction loops, so results agree bit-for-bit with the scalar
reference loops used in tests.
"""

import os
import warnings

try:
    with warnings.catch_warnings():
        # numba warns about old TBB versions while probing threading layers
        warnings.simplefilter("ignore")
        import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but stay graceful
    numba = None
    HAS_NUMBA = False

_ENV_DISABLED = os.environ.get("SPIKEBRIDGE_NO_NUMBA", "").strip() not in ("", "0")

if HAS_NUMBA:
    _threads = os.environ.get("SPIKEBRIDGE_THREADS", "").strip()
    if _threads:
        numba.set_num_threads(max(1, int(_threads)))


def default_backend() -> str:
    """Backend chosen at import time from availability and the env flag."""
    return "numba" if (HAS_NUMBA and not _ENV_DISABLED) else "numpy"


def available_backends() -> tuple[str, ...]:
    return ("numba", "numpy") if HAS_NUMBA else ("numpy",)
