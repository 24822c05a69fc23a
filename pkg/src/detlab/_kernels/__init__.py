"""Kernel backend selection.

Prefers the compiled core (``detlab._kernels._core``, built from Cython)
and falls back to the pure-NumPy implementations when the extension is
missing or when ``DETLAB_PURE_PYTHON`` is set in the environment. Both
backends expose the same functions with the same contracts; see
``benchmarks/bench_backends.py`` for a side-by-side timing comparison.
"""

from __future__ import annotations

import os

from . import _fallback

if os.environ.get("DETLAB_PURE_PYTHON"):
    _impl = _fallback
    HAVE_EXTENSION = False
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        HAVE_EXTENSION = True
    except ImportError:
        _impl = _fallback
        HAVE_EXTENSION = False

BACKEND = "compiled" if HAVE_EXTENSION else "python"

conv2d_direct = _impl.conv2d_direct
jacobi_singular_values = _impl.jacobi_singular_values
nms_greedy = _impl.nms_greedy


def available_backends() -> dict:
    """Map of backend name -> kernel module, for benchmarks and parity tests."""
    out = {"python": _fallback}
    try:
        from . import _core

        out["compiled"] = _core
    except ImportError:
        pass
    return out
