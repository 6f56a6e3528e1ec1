"""Two-sender MAC simulation: protocol construction, execution, exact and
Monte Carlo verification, and converse extraction from explicit tables."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._rng import cdf_table, derive_key
from .entropic import SmoothingSpec, smooth_imax
from .probability import (
    ATOL,
    AlphabetMismatch,
    Channel,
    Decomposition,
    MacChannel,
    Pmf,
    ProbabilityError,
    _same,
    mac_tv,
    row_tv,
)
from .rejection import P2PProtocol, build_p2p, exact_induced_p2p


class DegenerateTruncation(ProbabilityError):
    pass


@dataclass(frozen=True, eq=False)
class MacProtocol:
    sender1: P2PProtocol
    sender2: P2PProtocol
    decoder: Channel
    eps1: float
    eps2: float
    delta: float
    variant: str  # "fixed" or "universal"
    inputs: tuple | None = None

    @property
    def mode(self):
        return "average" if self.variant == "fixed" else "max"

    @property
    def rates(self):
        return self.sender1.rate_bits, self.sender2.rate_bits

    def to_dict(self):
        return {
            "variant": self.variant,
            "eps1": self.eps1,
            "eps2": self.eps2,
            "delta": self.delta,
            "sender1": self.sender1.to_dict(),
            "sender2": self.sender2.to_dict(),
            "decoder": self.decoder.to_dict(),
        }


def _check_params(eps1, eps2, delta):
    for name, e in (("eps1", eps1), ("eps2", eps2)):
        if not 0.0 < e < 1.0:
            raise ValueError(f"{name} must lie in (0, 1), got {e}")
    if not 0.0 < delta < min(eps1, eps2):
        raise ValueError(f"delta must lie in (0, min(eps1, eps2)={min(eps1, eps2)}), got {delta}")


def build_mac_protocol(d: Decomposition, eps1, eps2, delta, variant="fixed", inputs=None) -> MacProtocol:
    """One rejection-sampling protocol per sender for its auxiliary channel."""
    _check_params(eps1, eps2, delta)
    if variant == "fixed":
        if inputs is None:
            raise ValueError("fixed variant needs the input pair")
        q1, q2 = inputs
        _same(q1.alphabet, d.aux1.input_alphabet, "first input vs aux1")
        _same(q2.alphabet, d.aux2.input_alphabet, "second input vs aux2")
        specs = SmoothingSpec.state(eps1, q1), SmoothingSpec.state(eps2, q2)
    elif variant == "universal":
        specs = SmoothingSpec.channel(eps1), SmoothingSpec.channel(eps2)
        inputs = None
    else:
        raise ValueError(f"unknown variant {variant!r}")
    s1 = build_p2p(d.aux1, specs[0], delta)
    s2 = build_p2p(d.aux2, specs[1], delta)
    return MacProtocol(s1, s2, d.decoder, eps1, eps2, delta, variant, inputs)


def _sender_state(p: P2PProtocol, seed, j):
    return (
        cdf_table(p.proposal.probs)[0],
        p.acceptance,
        p.trials,
        derive_key(seed, "shared", j),
        derive_key(seed, "private", j),
    )


def simulate_batch(p: MacProtocol, x1_idx, x2_idx, seed, run0=0):
    """Vectorized runs on input index arrays; returns a dict of index arrays."""
    d2 = len(p.sender2.proposal)
    dec_cdf = cdf_table(p.decoder.rows)
    m1, m2, u1, u2, y, ab1, ab2 = _kernels.mac_batch(
        _sender_state(p.sender1, seed, 1),
        _sender_state(p.sender2, seed, 2),
        dec_cdf, d2, derive_key(seed, "decoder"),
        x1_idx, x2_idx, run0,
    )
    return {"m1": m1, "m2": m2, "u1": u1, "u2": u2, "y": y, "abort1": ab1, "abort2": ab2}


def mac_simulate(p: MacProtocol, x1, x2, seed, run=0):
    """One protocol run; returns (m1, m2, y label)."""
    i1 = p.sender1.target_channel.input_index(x1)
    i2 = p.sender2.target_channel.input_index(x2)
    out = simulate_batch(p, [i1], [i2], seed, run)
    return int(out["m1"][0]), int(out["m2"][0]), p.decoder.output_alphabet[int(out["y"][0])]


def exact_induced_mac(p: MacProtocol) -> MacChannel:
    a1 = exact_induced_p2p(p.sender1).rows
    a2 = exact_induced_p2p(p.sender2).rows
    d1, d2 = a1.shape[1], a2.shape[1]
    dec = p.decoder.rows.reshape(d1, d2, -1)
    probs = np.einsum("ab,cd,bde->ace", a1, a2, dec, optimize=True)
    return MacChannel(
        p.sender1.target_channel.input_alphabet,
        p.sender2.target_channel.input_alphabet,
        p.decoder.output_alphabet,
        np.clip(probs, 0.0, None),
        normalize=True,
    )


def _aggregate(per, mode, inputs):
    if mode == "max":
        return float(per.max())
    q1, q2 = inputs
    return float(q1.probs @ per @ q2.probs)


def verify_simulation(p: MacProtocol, target: MacChannel, N: int, seed: int) -> dict:
    """Exact end-to-end error plus an N-run Monte Carlo check per input pair."""
    exact = exact_induced_mac(p)
    _same(exact.x1_alphabet, target.x1_alphabet, "x1")
    _same(exact.x2_alphabet, target.x2_alphabet, "x2")
    _same(exact.y_alphabet, target.y_alphabet, "y")
    n1, n2, ny = target.probs.shape
    exact_per = row_tv(exact.probs, target.probs)

    pairs = np.array(list(itertools.product(range(n1), range(n2))), dtype=np.int64)
    x1 = np.repeat(pairs[:, 0], N)
    x2 = np.repeat(pairs[:, 1], N)
    out = simulate_batch(p, x1, x2, seed)
    code = np.repeat(np.arange(len(pairs)), N) * ny + out["y"]
    counts = np.bincount(code, minlength=len(pairs) * ny).reshape(n1, n2, ny)
    emp = counts / N
    emp_per = row_tv(emp, target.probs)
    sd = np.sqrt(exact.probs * (1.0 - exact.probs) / N)
    slack = 3.0 * 0.5 * sd.sum(axis=-1)

    mode = p.mode
    exact_tv = _aggregate(exact_per, mode, p.inputs)
    emp_tv = _aggregate(emp_per, mode, p.inputs)
    slack_tv = _aggregate(slack, mode, p.inputs)
    ab1 = out["abort1"].reshape(len(pairs), N)
    ab2 = out["abort2"].reshape(len(pairs), N)
    return {
        "mode": mode,
        "rates": list(p.rates),
        "exact_tv": exact_tv,
        "exact_tv_per_pair": exact_per.tolist(),
        "empirical_tv": emp_tv,
        "empirical_tv_per_pair": emp_per.tolist(),
        "slack": slack_tv,
        "slack_per_pair": slack.tolist(),
        "within_slack": bool(np.all(np.abs(emp_per - exact_per) <= slack + 1e-12)),
        "bound": p.eps1 + p.eps2,
        "exact_within_bound": exact_tv <= p.eps1 + p.eps2 + 1e-12,
        "abort_rates": {
            "sender1_exact": p.sender1.abort_probs.tolist(),
            "sender2_exact": p.sender2.abort_probs.tolist(),
            "sender1_empirical": float(ab1.mean()),
            "sender2_empirical": float(ab2.mean()),
        },
        "samples_per_pair": N,
    }


# --- explicit finite protocols and the converse ----------------------------


@dataclass(frozen=True, eq=False)
class ProtocolTables:
    """A one-shot protocol written out as conditional tables.

    ``enc_j[s, x, m]`` = p'(m | s, x) and ``decoder_table[m1, m2, s1, s2, y]``.
    Message labels are 1..|M_j|; shared-randomness labels are whatever the
    ``shared_j`` Pmf carries.
    """

    x1_alphabet: tuple
    x2_alphabet: tuple
    y_alphabet: tuple
    shared1: Pmf
    shared2: Pmf
    enc1: np.ndarray
    enc2: np.ndarray
    decoder_table: np.ndarray

    def __post_init__(self):
        s1, s2 = len(self.shared1), len(self.shared2)
        n1, n2, ny = len(self.x1_alphabet), len(self.x2_alphabet), len(self.y_alphabet)
        e1 = np.asarray(self.enc1, dtype=np.float64)
        e2 = np.asarray(self.enc2, dtype=np.float64)
        dec = np.asarray(self.decoder_table, dtype=np.float64)
        if e1.shape[:2] != (s1, n1) or e2.shape[:2] != (s2, n2):
            raise AlphabetMismatch(f"encoder shapes {e1.shape}, {e2.shape} do not match S x X")
        if dec.shape != (e1.shape[2], e2.shape[2], s1, s2, ny):
            raise AlphabetMismatch(f"decoder table shape {dec.shape} does not match M1 x M2 x S1 x S2 x Y")
        for name, t in (("enc1", e1), ("enc2", e2), ("decoder_table", dec)):
            if (t < -ATOL).any():
                raise ProbabilityError(f"{name}: negative entry")
            dev = np.abs(t.sum(axis=-1) - 1.0)
            if (dev > ATOL).any():
                bad = np.unravel_index(int(np.argmax(dev)), dev.shape)
                raise ProbabilityError(f"{name}: row {list(map(int, bad))} sums to {t.sum(axis=-1)[bad]:.12g}")
        for name, t in (("enc1", e1), ("enc2", e2), ("decoder_table", dec)):
            t = np.clip(t, 0.0, None)
            t.flags.writeable = False
            object.__setattr__(self, name, t)

    @property
    def message_sizes(self):
        return self.enc1.shape[2], self.enc2.shape[2]

    def induced_mac(self, enc1=None, enc2=None) -> MacChannel:
        """Output law of the protocol; ``enc_j`` may be replaced by joint
        tables w_j[s, x, m] = p(s, m | x)."""
        w1 = self.shared1.probs[:, None, None] * self.enc1 if enc1 is None else enc1
        w2 = self.shared2.probs[:, None, None] * self.enc2 if enc2 is None else enc2
        probs = np.einsum("sam,tbn,mnsty->aby", w1, w2, self.decoder_table, optimize=True)
        return MacChannel(self.x1_alphabet, self.x2_alphabet, self.y_alphabet,
                          np.clip(probs, 0.0, None), normalize=True)

    def to_dict(self):
        return {
            "x1": [_lab(v) for v in self.x1_alphabet],
            "x2": [_lab(v) for v in self.x2_alphabet],
            "y": [_lab(v) for v in self.y_alphabet],
            "shared1": self.shared1.to_dict(),
            "shared2": self.shared2.to_dict(),
            "enc1": self.enc1.tolist(),
            "enc2": self.enc2.tolist(),
            "decoder": self.decoder_table.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            tuple(_unlab(v) for v in d["x1"]),
            tuple(_unlab(v) for v in d["x2"]),
            tuple(_unlab(v) for v in d["y"]),
            Pmf.from_dict(d["shared1"]),
            Pmf.from_dict(d["shared2"]),
            np.asarray(d["enc1"], dtype=np.float64),
            np.asarray(d["enc2"], dtype=np.float64),
            np.asarray(d["decoder"], dtype=np.float64),
        )


def _lab(v):
    return [_lab(x) for x in v] if isinstance(v, tuple) else v


def _unlab(v):
    return tuple(_unlab(x) for x in v) if isinstance(v, list) else v


def clear_tables(target: MacChannel) -> ProtocolTables:
    """Each sender sends its input verbatim; the decoder applies the target."""
    n1, n2, ny = target.probs.shape
    one = Pmf((0,), [1.0])
    e1 = np.eye(n1)[None, :, :]
    e2 = np.eye(n2)[None, :, :]
    dec = target.probs[:, :, None, None, :]
    return ProtocolTables(target.x1_alphabet, target.x2_alphabet, target.y_alphabet, one, one, e1, e2, dec)


def _truncated_trials(M, k, max_trials=8, max_shared=64):
    cap = int(math.floor(math.log(max_shared) / math.log(k) + 1e-9)) if k > 1 else max_trials
    return max(1, min(M, max_trials, cap))


def _sender_tables(p: P2PProtocol, trials):
    """Rejection sampler with ``trials`` draws written out over S = U^trials."""
    q = p.proposal.probs
    k = len(q)
    acc = p.acceptance  # [x, u]
    strings = list(itertools.product(range(k), repeat=trials))
    ps = np.array([np.prod(q[list(s)]) for s in strings])
    S = np.array(strings, dtype=np.int64)  # [s, i]
    a = acc[:, S].transpose(1, 0, 2)  # [s, x, i]
    reject = np.cumprod(1.0 - a, axis=2)
    before = np.concatenate([np.ones(a.shape[:2] + (1,)), reject[:, :, :-1]], axis=2)
    enc = before * a
    enc[:, :, -1] = before[:, :, -1]  # abort mass goes to the last index
    labels = tuple(tuple(p.proposal.alphabet[i] for i in s) for s in strings)
    shared = Pmf(labels, ps, normalize=True)
    assert shared.alphabet == labels, "shared strings must already be in canonical order"
    return shared, enc, S


def protocol_tables(p: MacProtocol, max_trials=8, max_shared=64) -> ProtocolTables:
    """Re-express a built protocol as explicit tables with a small shared alphabet.

    Each sender keeps M' = min(M, max_trials, floor(log_|U| max_shared)) trials,
    so that |S_j| = |U_j|^M' stays small; the result is a valid finite protocol
    (with the abort rate of M' trials).
    """
    t1 = _truncated_trials(p.sender1.trials, len(p.sender1.proposal), max_trials, max_shared)
    t2 = _truncated_trials(p.sender2.trials, len(p.sender2.proposal), max_trials, max_shared)
    sh1, enc1, S1 = _sender_tables(p.sender1, t1)
    sh2, enc2, S2 = _sender_tables(p.sender2, t2)
    d2 = len(p.sender2.proposal)
    dec_rows = p.decoder.rows
    # decoder[m1, m2, s1, s2, y] = dec(y | s1[m1], s2[m2])
    u1 = S1.T  # [m1, s1]
    u2 = S2.T
    flat = u1[:, None, :, None] * d2 + u2[None, :, None, :]
    dec = dec_rows[flat]
    return ProtocolTables(
        p.sender1.target_channel.input_alphabet,
        p.sender2.target_channel.input_alphabet,
        p.decoder.output_alphabet,
        sh1, sh2, enc1, enc2, dec,
    )


@dataclass(frozen=True, eq=False)
class ConverseExtract:
    aux1: Channel
    aux2: Channel
    truncation_mass1: np.ndarray  # per x1
    truncation_mass2: np.ndarray  # per x2
    truncation_mass: np.ndarray  # per (x1, x2)
    rate_bound_1: float
    rate_bound_2: float
    message_bits: tuple
    satisfied: tuple
    ball_tv: tuple
    output_tv: float
    variant: str
    epsilons: tuple = (0.0, 0.0)

    @property
    def ball_ok(self):
        """Truncated auxiliaries re-checked to lie in their smoothing balls."""
        return tuple(b <= e + 1e-12 for b, e in zip(self.ball_tv, self.epsilons))

    def to_dict(self):
        return {
            "variant": self.variant,
            "rate_bound_1": self.rate_bound_1,
            "rate_bound_2": self.rate_bound_2,
            "message_bits": list(self.message_bits),
            "satisfied": list(self.satisfied),
            "truncation_mass1": self.truncation_mass1.tolist(),
            "truncation_mass2": self.truncation_mass2.tolist(),
            "max_truncation_mass": float(self.truncation_mass.max()),
            "ball_tv": list(self.ball_tv),
            "ball_ok": list(self.ball_ok),
            "output_tv": self.output_tv,
            "aux1_size": len(self.aux1.output_alphabet),
            "aux2_size": len(self.aux2.output_alphabet),
        }


def _truncate(shared: Pmf, enc, eps, x_alphabet, which):
    """Keep (m, s) with p'(m|s,x) >= eps/|M| (ties kept); renormalize per x."""
    ns, nx, nm = enc.shape
    joint = shared.probs[:, None, None] * enc  # p(s, m | x) as [s, x, m]
    keep = (enc >= eps / nm) & (shared.probs[:, None, None] > 0)
    kept = np.where(keep, joint, 0.0)
    mass = kept.sum(axis=(0, 2))
    if (mass <= 0).any():
        x = x_alphabet[int(np.argmin(mass))]
        raise DegenerateTruncation(f"sender {which}: truncation removes all mass for input {x!r}")
    trunc = kept / mass[None, :, None]
    # U = (m, s); rows indexed by x, columns ordered (m, s) with m 1-based
    rows = trunc.transpose(1, 2, 0).reshape(nx, nm * ns)
    orig = joint.transpose(1, 2, 0).reshape(nx, nm * ns)
    labels = tuple((m + 1, s) for m in range(nm) for s in shared.alphabet)
    aux = Channel(x_alphabet, labels, rows, normalize=True)
    return aux, np.clip(1.0 - mass, 0.0, None), trunc, row_tv(rows, orig)


def converse_extract(t: ProtocolTables, eps1, eps2, inputs=None) -> ConverseExtract:
    """Recover auxiliaries U_j = (M_j, S_j) from tables and test the rate bounds.

    ``inputs=None`` selects the universal variant (channel smoothing); otherwise
    the fixed-input state variant is used with the given pair.
    """
    for name, e in (("eps1", eps1), ("eps2", eps2)):
        if not 0.0 <= e < 1.0:
            raise ValueError(f"{name} must lie in [0, 1), got {e}")
    aux1, c1, tr1, b1 = _truncate(t.shared1, t.enc1, eps1, t.x1_alphabet, 1)
    aux2, c2, tr2, b2 = _truncate(t.shared2, t.enc2, eps2, t.x2_alphabet, 2)
    if inputs is None:
        variant = "universal"
        specs = SmoothingSpec.channel(eps1), SmoothingSpec.channel(eps2)
        ball = float(b1.max()), float(b2.max())
    else:
        variant = "fixed"
        q1, q2 = inputs
        _same(q1.alphabet, t.x1_alphabet, "first input")
        _same(q2.alphabet, t.x2_alphabet, "second input")
        specs = SmoothingSpec.state(eps1, q1), SmoothingSpec.state(eps2, q2)
        ball = float(q1.probs @ b1), float(q2.probs @ b2)
    r1 = smooth_imax(aux1, specs[0])
    r2 = smooth_imax(aux2, specs[1])
    for r in (r1, r2):
        if r.lp_status != "optimal":
            raise ProbabilityError(f"smoothing LP failed: {r.lp_status}")
    bits = tuple(math.log2(m) for m in t.message_sizes)
    tol = 1e-9
    sat = (bits[0] >= r1.value - tol, bits[1] >= r2.value - tol)
    truncated_out = t.induced_mac(tr1, tr2)
    out_tv = mac_tv(truncated_out, t.induced_mac(), "max")
    return ConverseExtract(
        aux1, aux2, c1, c2, c1[:, None] + c2[None, :],
        r1.value, r2.value, bits, sat, ball, out_tv, variant, (eps1, eps2),
    )
