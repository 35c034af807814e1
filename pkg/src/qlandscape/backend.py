"""Propagation-kernel backend selection.

The compiled extension (`qlandscape._fastcore`, Cython + LAPACK) is preferred;
the batched-NumPy implementation in `qlandscape._purecore` is the drop-in
fallback.  Set the environment variable ``QLANDSCAPE_PURE_PYTHON=1`` before
import to force the fallback (useful for benchmarking and debugging).

Both backends expose:

    evolve_p(h0, mu, eps, dt, i0, f0) -> (P, c)
    grad_p(h0, mu, eps, dt, i0, f0)   -> (P, c, grad)

with 0-based state indices and grad_j = (1/dt) dP/d(eps_j).
"""

from __future__ import annotations

import os

if os.environ.get("QLANDSCAPE_PURE_PYTHON"):
    from . import _purecore as _impl
else:
    try:
        from . import _fastcore as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _purecore as _impl

BACKEND_NAME = _impl.NAME
evolve_p = _impl.evolve_p
grad_p = _impl.grad_p


def get_backend(name: str):
    """Return the named backend module ('cython' or 'numpy'); for benchmarks."""
    if name == "numpy":
        from . import _purecore

        return _purecore
    if name == "cython":
        from . import _fastcore  # raises ImportError when not built

        return _fastcore
    raise ValueError(f"unknown backend {name!r}")
