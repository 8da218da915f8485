"""Selects the jitter-estimator implementation at import time.

The compiled kernel is preferred when it built; the pure-Python twin is the
fallback and can be forced with the environment variable ``RELAYSIM_PURE=1``
(useful for the benchmark and for debugging). Both produce bit-identical
results, so everything downstream is implementation-agnostic.
"""

from __future__ import annotations

import os

if os.environ.get("RELAYSIM_PURE"):
    from ._estimator_py import JitterEstimator

    IMPLEMENTATION = "python"
else:
    try:
        from ._estimator_cy import JitterEstimator  # type: ignore[no-redef]

        IMPLEMENTATION = "cython"
    except ImportError:
        from ._estimator_py import JitterEstimator  # type: ignore[no-redef]

        IMPLEMENTATION = "python"

__all__ = ["JitterEstimator", "IMPLEMENTATION"]
