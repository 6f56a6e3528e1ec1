"""Numba switch for the sampling kernels.

Set ``MACSIM_DISABLE_NUMBA=1`` to force the pure-numpy code paths. The flag is
read once at import time.
"""
import os

_FLAG = os.environ.get("MACSIM_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG in ("1", "true", "yes", "on")

# the TBB layer in some images is too old and warns on every import
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and not DISABLED


def opts(**overrides):
    kw = dict(cache=True, nogil=True, fastmath=False, error_model="numpy")
    kw.update(overrides)
    return kw


def njit(**kw):
    """``numba.njit`` with project defaults; identity when numba is off."""

    def deco(fn):
        if not USE_NUMBA:
            return fn
        return numba.njit(**opts(**kw))(fn)

    return deco


def set_threads(n):
    if USE_NUMBA and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
