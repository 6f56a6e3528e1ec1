"""Hot sampling loops for the accept-reject protocols.

Each kernel has a numba version and a vectorized numpy version. Both read the
same counter-based streams, so they return identical arrays; the public entry
points pick one according to ``_accel.USE_NUMBA``.
"""
import numpy as np

from . import _accel
from ._rng import draw, uniform, uniforms

if _accel.USE_NUMBA:
    from numba import prange
else:  # pragma: no cover - exercised with MACSIM_DISABLE_NUMBA=1
    prange = range


@_accel.njit()
def _accept_reject_one(cdf, acc_row, trials, key_s, key_p, run):
    sym = 0
    for i in range(trials):
        sym = draw(cdf, uniform(key_s, run, i))
        if uniform(key_p, run, i) < acc_row[sym]:
            return i + 1, sym, False
    return trials, sym, True


@_accel.njit(parallel=True)
def _ar_batch_nb(cdf, acc, xs, trials, key_s, key_p, run0, out_idx, out_sym, out_abort):
    for r in prange(xs.shape[0]):
        i, s, a = _accept_reject_one(cdf, acc[xs[r]], trials, key_s, key_p, run0 + r)
        out_idx[r] = i
        out_sym[r] = s
        out_abort[r] = a


def _ar_batch_np(cdf, acc, xs, trials, key_s, key_p, run0):
    n = xs.shape[0]
    runs = np.arange(run0, run0 + n, dtype=np.uint64)
    idx = np.full(n, trials, dtype=np.int64)
    sym = np.zeros(n, dtype=np.int64)
    aborted = np.ones(n, dtype=np.bool_)
    active = np.arange(n)
    last = cdf.shape[0] - 1
    for i in range(trials):
        if active.size == 0:
            break
        s = np.minimum(np.searchsorted(cdf, uniforms(key_s, runs[active], i), side="right"), last)
        sym[active] = s
        hit = uniforms(key_p, runs[active], i) < acc[xs[active], s]
        done = active[hit]
        idx[done] = i + 1
        aborted[done] = False
        active = active[~hit]
    return idx, sym, aborted


def accept_reject_batch(cdf, acc, xs, trials, key_s, key_p, run0=0):
    """Run one accept-reject round per entry of ``xs``.

    ``cdf`` is the proposal's cumulative table, ``acc[x, y]`` the acceptance
    probability of sample y under input x. Returns (1-based index, accepted or
    final sample, aborted flag) arrays.
    """
    xs = np.ascontiguousarray(xs, dtype=np.int64)
    acc = np.ascontiguousarray(acc, dtype=np.float64)
    if not _accel.USE_NUMBA:
        return _ar_batch_np(cdf, acc, xs, int(trials), key_s, key_p, int(run0))
    n = xs.shape[0]
    idx = np.empty(n, dtype=np.int64)
    sym = np.empty(n, dtype=np.int64)
    aborted = np.empty(n, dtype=np.bool_)
    _ar_batch_nb(cdf, acc, xs, int(trials), np.uint64(key_s), np.uint64(key_p), int(run0), idx, sym, aborted)
    return idx, sym, aborted


@_accel.njit(parallel=True)
def _mac_batch_nb(cdf1, acc1, t1, ks1, kp1, cdf2, acc2, t2, ks2, kp2, dec_cdf, d2, kd,
                  x1, x2, run0, m1, m2, u1, u2, y, ab1, ab2):
    for r in prange(x1.shape[0]):
        run = run0 + r
        i1, _, a1 = _accept_reject_one(cdf1, acc1[x1[r]], t1, ks1, kp1, run)
        i2, _, a2 = _accept_reject_one(cdf2, acc2[x2[r]], t2, ks2, kp2, run)
        # decoder side: regenerate the indexed shared samples from the keys
        v1 = draw(cdf1, uniform(ks1, run, i1 - 1))
        v2 = draw(cdf2, uniform(ks2, run, i2 - 1))
        m1[r] = i1
        m2[r] = i2
        u1[r] = v1
        u2[r] = v2
        ab1[r] = a1
        ab2[r] = a2
        y[r] = draw(dec_cdf[v1 * d2 + v2], uniform(kd, run, 0))


def mac_batch(s1, s2, dec_cdf, d2, kd, x1, x2, run0=0):
    """Full MAC protocol runs. ``s_j`` = (cdf, acc, trials, key_shared, key_private)."""
    x1 = np.ascontiguousarray(x1, dtype=np.int64)
    x2 = np.ascontiguousarray(x2, dtype=np.int64)
    n = x1.shape[0]
    if not _accel.USE_NUMBA:
        m1, _, ab1 = _ar_batch_np(s1[0], s1[1], x1, s1[2], s1[3], s1[4], run0)
        m2, _, ab2 = _ar_batch_np(s2[0], s2[1], x2, s2[2], s2[3], s2[4], run0)
        runs = np.arange(run0, run0 + n, dtype=np.uint64)
        u1 = _regenerate(s1[0], s1[3], runs, m1)
        u2 = _regenerate(s2[0], s2[3], runs, m2)
        rows = dec_cdf[u1 * d2 + u2]
        yv = uniforms(kd, runs, 0)
        y = np.minimum((rows <= yv[:, None]).sum(axis=1), dec_cdf.shape[1] - 1)
        return m1, m2, u1, u2, y, ab1, ab2
    out = [np.empty(n, dtype=np.int64) for _ in range(5)] + [np.empty(n, dtype=np.bool_) for _ in range(2)]
    _mac_batch_nb(
        s1[0], np.ascontiguousarray(s1[1]), int(s1[2]), np.uint64(s1[3]), np.uint64(s1[4]),
        s2[0], np.ascontiguousarray(s2[1]), int(s2[2]), np.uint64(s2[3]), np.uint64(s2[4]),
        dec_cdf, int(d2), np.uint64(kd), x1, x2, int(run0), *out,
    )
    return tuple(out)


def _regenerate(cdf, key_s, runs, idx):
    out = np.empty(runs.shape[0], dtype=np.int64)
    last = cdf.shape[0] - 1
    for i in np.unique(idx):
        sel = idx == i
        out[sel] = np.minimum(np.searchsorted(cdf, uniforms(key_s, runs[sel], i - 1), side="right"), last)
    return out
