"""Accept-reject sampling and one-shot point-to-point channel simulation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._rng import cdf_table, derive_key, uniforms
from .entropic import SmoothingSpec, dmax, loglog, smooth_imax
from .probability import SUPPORT_CUTOFF, Channel, Pmf, ProbabilityError

ABORT_CONVENTION = "emit index M"


@dataclass(frozen=True, eq=False)
class Transcript:
    shared_samples: tuple
    private_uniforms: tuple
    message_index: int  # 1-based
    output_symbol: object
    aborted: bool


def _streams(seed, *path):
    return derive_key(seed, "shared", *path), derive_key(seed, "private", *path)


def _acceptance(target_rows, proposal_probs):
    """Acceptance table target/(lambda * proposal) and the per-row lambda."""
    target_rows = np.atleast_2d(target_rows)
    q = proposal_probs
    live = q > SUPPORT_CUTOFF
    ratio = np.zeros_like(target_rows)
    ratio[:, live] = target_rows[:, live] / q[live]
    lam = np.maximum(ratio.max(axis=1), 1.0)
    return np.clip(ratio / lam[:, None], 0.0, 1.0), lam


def accept_reject(target: Pmf, proposal: Pmf, M: int, seed: int, run: int = 0) -> Transcript:
    """One accept-reject round with M shared proposal draws.

    Draw Y_1..Y_M from ``proposal`` (shared stream), accept Y_i with probability
    target(Y_i) / (lambda proposal(Y_i)) using the encoder's private stream, and
    emit the first accepted index. With no acceptance the round aborts and emits
    index M.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    dmax(target, proposal)  # support check
    key_s, key_p = _streams(seed)
    acc, _ = _acceptance(target.probs, proposal.probs)
    cdf = cdf_table(proposal.probs)[0]
    runs = np.array([run], dtype=np.uint64)
    shared = [int(np.searchsorted(cdf, uniforms(key_s, runs, i)[0], side="right")) for i in range(M)]
    shared = [min(s, len(cdf) - 1) for s in shared]
    private = []
    index, aborted = M, True
    for i, s in enumerate(shared):
        v = float(uniforms(key_p, runs, i)[0])
        private.append(v)
        if v < acc[0, s]:
            index, aborted = i + 1, False
            break
    labels = proposal.alphabet
    return Transcript(
        tuple(labels[s] for s in shared), tuple(private), index, labels[shared[index - 1]], aborted
    )


def accept_reject_batch(target: Pmf, proposal: Pmf, M: int, seed: int, n_runs: int, run0: int = 0):
    """Many independent rounds; returns (indices, output symbol indices, aborted)."""
    dmax(target, proposal)
    key_s, key_p = _streams(seed)
    acc, _ = _acceptance(target.probs, proposal.probs)
    xs = np.zeros(n_runs, dtype=np.int64)
    return _kernels.accept_reject_batch(cdf_table(proposal.probs)[0], acc, xs, M, key_s, key_p, run0)


def abort_probability(target: Pmf, proposal: Pmf, M: int) -> float:
    lam = 2.0 ** dmax(target, proposal)
    return (1.0 - 1.0 / lam) ** M


@dataclass(frozen=True, eq=False)
class P2PProtocol:
    """Point-to-point simulation of ``target_channel`` from shared ``proposal`` samples."""

    target_channel: Channel
    proposal: Pmf
    trials: int
    rate_bits: float
    lambda_per_input: np.ndarray
    spec: SmoothingSpec
    delta: float
    smoothed_value: float
    abort_convention: str = ABORT_CONVENTION

    @property
    def acceptance(self):
        return _acceptance(self.target_channel.rows, self.proposal.probs)[0]

    @property
    def abort_probs(self):
        return (1.0 - 1.0 / self.lambda_per_input) ** self.trials

    def to_dict(self):
        return {
            "rate_bits": self.rate_bits,
            "trials": self.trials,
            "epsilon": self.spec.epsilon,
            "delta": self.delta,
            "variant": self.spec.variant,
            "smoothed_value": self.smoothed_value,
            "lambda_per_input": self.lambda_per_input.tolist(),
            "abort_probs": self.abort_probs.tolist(),
            "abort_convention": self.abort_convention,
            "target_channel": self.target_channel.to_dict(),
            "proposal": self.proposal.to_dict(),
        }


def trials_exponent(value, delta):
    """ceil(value + log2 log2(1/delta)), floored at 0."""
    return max(0, math.ceil(value + loglog(delta)))


def build_p2p(w: Channel, spec: SmoothingSpec, delta: float) -> P2PProtocol:
    """Smooth at radius epsilon - delta and size the trial budget for abort <= delta."""
    if not 0.0 < delta < spec.epsilon:
        raise ValueError(f"delta must lie in (0, epsilon={spec.epsilon}), got {delta}")
    res = smooth_imax(w, spec.at(spec.epsilon - delta))
    if res.lp_status != "optimal":
        raise ProbabilityError(f"smoothing LP failed: {res.lp_status}")
    exponent = trials_exponent(res.value, delta)
    _, lam = _acceptance(res.smoothed_channel.rows, res.reference.probs)
    return P2PProtocol(
        target_channel=res.smoothed_channel,
        proposal=res.reference,
        trials=2 ** exponent,
        rate_bits=float(exponent),
        lambda_per_input=lam,
        spec=spec,
        delta=delta,
        smoothed_value=res.value,
    )


def p2p_simulate(p: P2PProtocol, x, seed: int, run: int = 0) -> Transcript:
    return accept_reject(p.target_channel.row(x), p.proposal, p.trials, seed, run)


def p2p_sample(p: P2PProtocol, xs, seed: int, run0: int = 0):
    """Vectorized protocol runs for input indices ``xs``."""
    key_s, key_p = _streams(seed)
    return _kernels.accept_reject_batch(
        cdf_table(p.proposal.probs)[0], p.acceptance, np.asarray(xs), p.trials, key_s, key_p, run0
    )


def exact_induced_p2p(p: P2PProtocol) -> Channel:
    """Closed-form output law of the sampler.

    With probability 1 - beta_x some draw is accepted and the output follows
    p'(.|x). On abort the output is draw M conditioned on its rejection, with
    law r_x = (q* - p'(.|x)/lambda_x) / (1 - 1/lambda_x). Summing the two gives
    (1 - beta_x) p' + beta_x r_x, which equals (1 - b) p' + b q* with
    b = (1 - 1/lambda_x)^(M-1).
    """
    lam = p.lambda_per_input[:, None]
    beta = p.abort_probs[:, None]
    target = p.target_channel.rows
    q = p.proposal.probs[None, :]
    keep = 1.0 - 1.0 / lam
    with np.errstate(invalid="ignore", divide="ignore"):
        rejected = np.where(keep > 0, (q - target / lam) / keep, q)
    rows = (1.0 - beta) * target + beta * np.clip(rejected, 0.0, None)
    return p.target_channel.with_rows(rows, normalize=True)


def histogram(symbols, k):
    return np.bincount(np.asarray(symbols), minlength=k).astype(np.float64)
