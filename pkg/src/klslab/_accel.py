"""Optional numba acceleration.

Hot kernels are written once in a numba-compatible subset of Python and
compiled with :func:`njit` when numba is importable and not disabled.  Set
``KLSLAB_DISABLE_NUMBA=1`` to force the pure-numpy path everywhere.
"""
import os

try:
    import numba as _numba
    from numba.core.registry import CPUDispatcher as _CPUDispatcher
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None
    _CPUDispatcher = None

_FLAG = os.environ.get("KLSLAB_DISABLE_NUMBA", "").strip().lower()
NUMBA_ENABLED = _numba is not None and _FLAG not in {"1", "true", "yes", "on"}


def njit(func=None, **options):
    """``numba.njit`` when acceleration is enabled, identity otherwise."""
    options.setdefault("cache", False)

    def wrap(f):
        if not NUMBA_ENABLED:
            return f
        return _numba.njit(**options)(f)

    if func is None:
        return wrap
    return wrap(func)


def is_jitted(func) -> bool:
    return _CPUDispatcher is not None and isinstance(func, _CPUDispatcher)
