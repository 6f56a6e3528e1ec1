"""Max-divergence, (smoothed) max-mutual information and Shannon information.

Everything is in bits. Smoothed quantities are computed exactly as linear
programs over the total-variation ball around a channel.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .lp import Builder
from .probability import (
    SUPPORT_CUTOFF,
    AlphabetMismatch,
    Channel,
    Joint,
    Pmf,
    ProbabilityError,
    row_tv,
)

CERT_TOL = 1e-7


class SupportError(ValueError):
    pass


@dataclass(frozen=True)
class SmoothingSpec:
    """TV ball for smoothing.

    ``variant="state"`` smooths under the average TV weighted by ``input``;
    ``variant="channel"`` bounds the TV of every row separately.
    """

    epsilon: float
    variant: str = "channel"
    input: Pmf | None = None

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if self.variant not in ("state", "channel"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "state" and self.input is None:
            raise ValueError("state variant needs an input distribution")

    def at(self, epsilon):
        return SmoothingSpec(epsilon, self.variant, self.input)

    @classmethod
    def state(cls, epsilon, input):
        return cls(epsilon, "state", input)

    @classmethod
    def channel(cls, epsilon):
        return cls(epsilon, "channel")


@dataclass(frozen=True, eq=False)
class SmoothedResult:
    value: float
    smoothed_channel: Channel
    reference: Pmf
    lp_status: str
    ball_tv: float
    spec: SmoothingSpec

    def to_dict(self):
        return {
            "value": self.value,
            "epsilon": self.spec.epsilon,
            "variant": self.spec.variant,
            "lp_status": self.lp_status,
            "ball_tv": self.ball_tv,
            "smoothed_channel": self.smoothed_channel.to_dict(),
            "reference": self.reference.to_dict(),
        }


def dmax(p: Pmf, q: Pmf) -> float:
    """log2 of the worst likelihood ratio p/q over supp(p)."""
    if p.alphabet != q.alphabet:
        raise AlphabetMismatch("dmax: alphabets differ")
    sp = p.probs > SUPPORT_CUTOFF
    bad = sp & (q.probs <= SUPPORT_CUTOFF)
    if bad.any():
        raise SupportError(f"dmax: symbol {p.alphabet[int(np.argmax(bad))]!r} outside supp(q)")
    return max(0.0, float(np.log2(np.max(p.probs[sp] / q.probs[sp]))))


def _admissible(w: Channel, input: Pmf | None):
    if input is None:
        return np.ones(w.shape[0], dtype=bool)
    if input.alphabet != w.input_alphabet:
        raise AlphabetMismatch("input distribution is not over the channel input alphabet")
    return input.support


def imax_rows(rows, mask=None) -> float:
    rows = np.asarray(rows)
    if mask is not None:
        rows = rows[mask]
    return float(np.log2(rows.max(axis=0).sum()))


def imax_channel(w: Channel) -> float:
    return imax_rows(w.rows)


def imax_state(w: Channel, input: Pmf) -> float:
    return imax_rows(w.rows, _admissible(w, input))


def smooth_imax(w: Channel, spec: SmoothingSpec) -> SmoothedResult:
    """Smoothed max-mutual information of ``w`` as an exact LP.

    The LP works with the output envelope m(y) and the shortfalls
    s(x,y) >= p(y|x) - m(y): any row can be brought under m at TV cost
    sum_y (p(y|x) - m(y))^+ as long as sum_y m(y) >= 1, so minimizing sum_y m(y)
    subject to the ball constraint on the shortfalls gives the smoothed value.
    The smoothed rows are rebuilt from the envelope afterwards. Rows whose input
    probability is zero (state variant) are left out and set to the reference.
    """
    mask = _admissible(w, spec.input if spec.variant == "state" else None)
    rows = w.rows[mask]
    na, ny = rows.shape
    S = np.arange(na * ny).reshape(na, ny)
    M = na * ny + np.arange(ny)
    nv = na * ny + ny

    b = Builder(nv)
    # -s(x,y) - m(y) <= -p(y|x)
    b.le_block(np.stack([S.ravel(), np.tile(M, na)], axis=1), -1.0, -rows.ravel())
    b.le(M, -1.0, -1.0)
    if spec.variant == "channel":
        b.le_block(S, 1.0, np.full(na, spec.epsilon))
    else:
        b.le(S.ravel(), np.repeat(spec.input.probs[mask], ny), spec.epsilon)
    c = np.zeros(nv)
    c[M] = 1.0
    res = b.solve(c)

    if res.status == "optimal":
        smoothed = _fill_under(rows, np.clip(res.x[M], 0.0, None))
    else:
        smoothed = rows.copy()
    status = res.status
    env = smoothed.max(axis=0)
    total = env.sum()
    reference = env / total
    full = np.tile(reference, (w.shape[0], 1))
    full[mask] = smoothed
    per = row_tv(rows, smoothed)
    if spec.variant == "channel":
        achieved = float(per.max())
    else:
        achieved = float(spec.input.probs[mask] @ per)
    if status == "optimal" and achieved > spec.epsilon + CERT_TOL:
        status = "numerical"
    return SmoothedResult(
        value=max(0.0, float(np.log2(total))),
        smoothed_channel=w.with_rows(full, normalize=True),
        reference=Pmf(w.output_alphabet, reference, normalize=True),
        lp_status=status,
        ball_tv=achieved,
        spec=spec,
    )


def _fill_under(rows, env):
    """Clip rows at ``env`` and spread the removed mass over the headroom."""
    clipped = np.minimum(rows, env)
    room = env - clipped
    deficit = 1.0 - clipped.sum(axis=1, keepdims=True)
    total_room = room.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(total_room > 0, room / total_room, 0.0)
    out = clipped + np.clip(deficit, 0.0, None) * share
    return out / out.sum(axis=1, keepdims=True)


def _xlog2x(p):
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = p[nz] * np.log2(p[nz])
    return out


def entropy(p) -> float:
    probs = p.probs if isinstance(p, Pmf) else np.asarray(p)
    return float(-_xlog2x(probs).sum())


def mutual_information(j) -> float:
    """I(A;B) of a two-axis joint (``Joint`` or 2-D array)."""
    p = j.probs if isinstance(j, Joint) else np.asarray(j, dtype=np.float64)
    if p.ndim != 2:
        raise ProbabilityError("mutual_information needs a two-axis joint")
    mi = (
        _xlog2x(p).sum()
        - _xlog2x(p.sum(axis=1)).sum()
        - _xlog2x(p.sum(axis=0)).sum()
    )
    return max(0.0, float(mi))


def channel_mutual_information(w: Channel, input: Pmf) -> float:
    if input.alphabet != w.input_alphabet:
        raise AlphabetMismatch("input distribution is not over the channel input alphabet")
    return mutual_information(input.probs[:, None] * w.rows)


def _row_divergences(rows, q):
    # D(W(.|x) || q) in bits for every x
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(rows > 0, np.log2(rows / q), 0.0)
    return (rows * logs).sum(axis=1)


def max_mutual_information(w: Channel, tol=1e-9, max_iter=10_000):
    """Capacity max_q I(X;U) by Blahut-Arimoto; returns (value, argmax input)."""
    rows = w.rows
    nx = rows.shape[0]
    r = np.full(nx, 1.0 / nx)
    prev = -np.inf
    lower = 0.0
    for it in range(1, max_iter + 1):
        q = r @ rows
        d = _row_divergences(rows, q)
        lower = float(r @ d)
        upper = float(d.max())
        if upper - lower < tol or abs(lower - prev) < tol * 1e-3:
            break
        prev = lower
        r = r * np.exp2(d - d.max())
        r /= r.sum()
    else:
        warnings.warn(f"Blahut-Arimoto hit the iteration cap ({max_iter})", RuntimeWarning)
    return max(0.0, lower), Pmf(w.input_alphabet, r, normalize=True)


def binary_entropy(p):
    return entropy([p, 1.0 - p])


def loglog(delta):
    """log2 log2 (1/delta); the rejection-sampling overhead."""
    return math.log2(math.log2(1.0 / delta))
