import numpy as np
import pytest

from macsim import Channel, Decomposition, MacChannel, Pmf
from macsim.cq import CqState, MeasuredInput

BITS = (0, 1)
XOR_TENSOR = np.array([[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [1.0, 0.0]]])


def xor_mac():
    return MacChannel.from_function(BITS, BITS, BITS, lambda a, b: a ^ b)


def xor_decomposition():
    return Decomposition.build(Channel.identity(BITS), Channel.identity(BITS), XOR_TENSOR, BITS)


def random_decomposition(rng, n1=2, n2=2, ny=2, d1=2, d2=2, concentration=1.0):
    a1 = rng.dirichlet(np.full(d1, concentration), size=n1)
    a2 = rng.dirichlet(np.full(d2, concentration), size=n2)
    dec = rng.dirichlet(np.full(ny, concentration), size=(d1, d2))
    return Decomposition.build(
        Channel(tuple(range(n1)), tuple(range(d1)), a1, normalize=True),
        Channel(tuple(range(n2)), tuple(range(d2)), a2, normalize=True),
        dec, tuple(range(ny)), normalize=True,
    )


def random_density(rng, d, rank=None):
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_cq(rng, d=2, k=2):
    blocks = np.array([random_density(rng, d) for _ in range(k)])
    return CqState(Pmf(tuple(range(k)), rng.dirichlet(np.ones(k)), normalize=True), blocks)


def random_diagonal_cq(rng, d=2, k=2):
    return CqState.diagonal(rng.dirichlet(np.ones(k * d)).reshape(k, d))


def random_measured(rng, n=2, d=2, diagonal=False):
    if diagonal:
        states = np.array([np.diag(rng.dirichlet(np.ones(d))) for _ in range(n)]).astype(complex)
    else:
        states = np.array([random_density(rng, d) for _ in range(n)])
    return MeasuredInput(Pmf(tuple(range(n)), rng.dirichlet(np.ones(n)), normalize=True), states)


def random_small_channel(rng, max_in=4, max_out=4):
    nx, ny = rng.integers(1, max_in + 1), rng.integers(2, max_out + 1)
    rows = rng.dirichlet(np.full(ny, rng.choice([0.3, 1.0, 3.0])), size=nx)
    return Channel(tuple(range(nx)), tuple(range(ny)), rows, normalize=True)


def grid_smooth_imax_2x2(rows, eps, input=None, step=1e-3):
    """Brute-force smoothed I_max of a 2x2 channel over a grid of candidate rows.

    A binary row (a, 1 - a) is at TV |a - p| from (p, 1 - p), so the ball is a
    box (per-row radius) or a weighted diamond (input-averaged radius). The grid
    is topped up with the ball's edge points so the oracle is not biased by
    where the grid happens to fall.
    """
    rows = np.asarray(rows, dtype=np.float64)
    p0, p1 = rows[0, 0], rows[1, 0]
    q = np.array([1.0, 1.0]) if input is None else np.asarray(input, dtype=np.float64)
    grid = np.arange(0.0, 1.0 + step / 2, step)

    def value(a, b):
        return np.maximum(a, b) + np.maximum(1 - a, 1 - b)

    r0 = eps if input is None else (eps / q[0] if q[0] > 0 else 1.0)
    a = np.unique(np.clip(np.concatenate([grid, [p0 - r0, p0 + r0, p0]]), 0, 1))
    a = a[np.abs(a - p0) <= r0 + 1e-12]
    if input is None:
        room = np.full(a.shape, eps)
    else:
        left = eps - q[0] * np.abs(a - p0)
        room = left / q[1] if q[1] > 0 else np.full(a.shape, 1.0)
    lo = np.clip(p1 - room, 0, 1)
    hi = np.clip(p1 + room, 0, 1)
    b = grid[None, :]
    inside = (b >= lo[:, None] - 1e-12) & (b <= hi[:, None] + 1e-12)
    best = np.where(inside, value(a[:, None], b), np.inf).min()
    best = min(best, value(a, lo).min(), value(a, hi).min(), value(a, np.clip(a, lo, hi)).min())
    return float(np.log2(best))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def uniform_pair():
    return Pmf.uniform(BITS), Pmf.uniform(BITS)

