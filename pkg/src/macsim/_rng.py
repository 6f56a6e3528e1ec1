"""Counter-based uniform streams.

Every uniform is a pure function of ``(key, run, counter)``, so an encoder and a
decoder holding the same key regenerate identical shared samples without storing
them, and the numba and numpy kernels consume randomness identically.
"""
import hashlib

import numpy as np

from ._accel import njit

_G1 = np.uint64(0x9E3779B97F4A7C15)
_G2 = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

SHARED1, PRIVATE1, SHARED2, PRIVATE2, DECODER = range(5)


def derive_key(seed, *path):
    """64-bit stream key from a user seed and a path of ints/strings."""
    h = hashlib.blake2b(digest_size=8)
    h.update(repr((int(seed),) + tuple(path)).encode())
    return int.from_bytes(h.digest(), "little")


@njit()
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit()
def uniform(key, run, counter):
    z = _mix(np.uint64(key) + np.uint64(run) * _G1)
    z = _mix(z + np.uint64(counter) * _G2)
    return np.float64(z >> _S11) * _INV53


def uniforms(key, runs, counter):
    """Vectorized ``uniform`` over an array of run indices (numpy only)."""
    runs = np.asarray(runs, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix_np(np.uint64(key) + runs * _G1)
        z = _mix_np(z + np.uint64(counter) * _G2)
    return (z >> _S11).astype(np.float64) * _INV53


def _mix_np(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit()
def draw(cdf, u):
    """Index sampled from a normalized cumulative table."""
    k = np.searchsorted(cdf, u, side="right")
    if k >= cdf.shape[0]:
        k = cdf.shape[0] - 1
    return k


def cdf_table(probs):
    """Row-wise normalized cumulative sums.

    Entries from the last positive-probability symbol onward are pinned to 1 so
    rounding can never select a trailing zero-probability symbol.
    """
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    c = np.cumsum(p, axis=-1)
    c = c / c[..., -1:]
    for row, prow in zip(c, p):
        last = np.flatnonzero(prow > 0)[-1]
        row[last:] = 1.0
    return np.ascontiguousarray(c)
