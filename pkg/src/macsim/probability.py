"""Finite distributions, channels and total-variation distances.

All objects are immutable: arrays are copied on construction and flagged
read-only. Alphabets are stored in canonical (sorted) label order and every
tensor is dense in that order.
"""
from __future__ import annotations

import itertools
from dataclasses import InitVar, dataclass, field

import numpy as np

ATOL = 1e-9
SUPPORT_CUTOFF = 1e-15


class ProbabilityError(ValueError):
    """Malformed distribution or channel data."""


class AlphabetMismatch(ProbabilityError):
    pass


def _label_key(label):
    if isinstance(label, tuple):
        return (2, tuple(_label_key(x) for x in label))
    if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
        return (0, int(label))
    return (1, str(label))


def _freeze(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _canon(alphabet):
    alphabet = tuple(_hashable(x) for x in alphabet)
    if len(set(alphabet)) != len(alphabet):
        dup = sorted({x for x in alphabet if alphabet.count(x) > 1}, key=_label_key)
        raise ProbabilityError(f"duplicate labels {list(dup)}")
    order = sorted(range(len(alphabet)), key=lambda i: _label_key(alphabet[i]))
    return tuple(alphabet[i] for i in order), np.array(order, dtype=np.intp)


def _hashable(x):
    if isinstance(x, list):
        return tuple(_hashable(v) for v in x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def _check_rows(rows, what, normalize):
    if rows.size and (not np.all(np.isfinite(rows)) or rows.min() < -ATOL):
        bad = np.argwhere(~np.isfinite(rows) | (rows < -ATOL))[0]
        raise ProbabilityError(f"{what}: negative or non-finite entry at {tuple(int(i) for i in bad)}")
    rows = np.clip(rows, 0.0, None)
    sums = rows.sum(axis=-1)
    if normalize:
        if np.any(sums <= 0):
            raise ProbabilityError(f"{what}: cannot normalize an all-zero row")
        return rows / sums[..., None]
    off = np.abs(sums - 1.0) > ATOL
    if np.any(off):
        idx = tuple(int(i) for i in np.argwhere(off)[0])
        raise ProbabilityError(f"{what}: row {list(idx)} sums to {sums[idx]:.12g}, expected 1")
    return rows


@dataclass(frozen=True, eq=False)
class Pmf:
    alphabet: tuple
    probs: np.ndarray
    normalize: InitVar[bool] = False

    def __post_init__(self, normalize):
        alphabet, order = _canon(self.alphabet)
        probs = np.asarray(self.probs, dtype=np.float64).reshape(-1)
        if probs.shape != (len(alphabet),):
            raise ProbabilityError(f"{len(alphabet)} labels but {probs.size} probabilities")
        probs = _check_rows(probs[order], "pmf", normalize)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "probs", _freeze(probs))

    @classmethod
    def uniform(cls, alphabet):
        alphabet = tuple(alphabet)
        return cls(alphabet, np.full(len(alphabet), 1.0 / len(alphabet)))

    @classmethod
    def point(cls, alphabet, label):
        alphabet = tuple(alphabet)
        return cls(alphabet, [1.0 if a == label else 0.0 for a in alphabet])

    def __len__(self):
        return len(self.alphabet)

    def __getitem__(self, label):
        return float(self.probs[self.index(label)])

    def index(self, label):
        try:
            return self.alphabet.index(_hashable(label))
        except ValueError:
            raise ProbabilityError(f"label {label!r} not in alphabet") from None

    @property
    def support(self):
        return self.probs > SUPPORT_CUTOFF

    def product(self, other):
        labels = tuple(itertools.product(self.alphabet, other.alphabet))
        return Pmf(labels, np.outer(self.probs, other.probs).ravel())

    def power(self, n):
        """n-fold iid product; labels become n-tuples."""
        probs = self.probs
        for _ in range(n - 1):
            probs = np.kron(probs, self.probs)
        return Pmf(tuple(itertools.product(self.alphabet, repeat=n)), probs)

    def to_dict(self):
        return {"alphabet": list(self.alphabet), "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, d, normalize=False):
        return cls(d["alphabet"], d["probs"], normalize=normalize)

    def __repr__(self):
        return f"Pmf({dict(zip(self.alphabet, np.round(self.probs, 6)))})"


@dataclass(frozen=True, eq=False)
class Channel:
    """Row-stochastic conditional distribution p(out|in)."""

    input_alphabet: tuple
    output_alphabet: tuple
    rows: np.ndarray
    normalize: InitVar[bool] = False

    def __post_init__(self, normalize):
        ins, iorder = _canon(self.input_alphabet)
        outs, oorder = _canon(self.output_alphabet)
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.shape != (len(ins), len(outs)):
            raise ProbabilityError(
                f"channel rows have shape {rows.shape}, expected {(len(ins), len(outs))}"
            )
        rows = _check_rows(rows[np.ix_(iorder, oorder)], "channel", normalize)
        object.__setattr__(self, "input_alphabet", ins)
        object.__setattr__(self, "output_alphabet", outs)
        object.__setattr__(self, "rows", _freeze(rows))

    @classmethod
    def identity(cls, alphabet):
        alphabet = tuple(alphabet)
        return cls(alphabet, alphabet, np.eye(len(alphabet)))

    @classmethod
    def constant(cls, input_alphabet, out):
        return cls(tuple(input_alphabet), out.alphabet, np.tile(out.probs, (len(input_alphabet), 1)))

    @classmethod
    def bsc(cls, flip):
        return cls((0, 1), (0, 1), [[1 - flip, flip], [flip, 1 - flip]])

    @property
    def shape(self):
        return self.rows.shape

    def row(self, label):
        return Pmf(self.output_alphabet, self.rows[self.input_index(label)])

    def input_index(self, label):
        try:
            return self.input_alphabet.index(_hashable(label))
        except ValueError:
            raise ProbabilityError(f"input label {label!r} not in alphabet") from None

    def push(self, p: Pmf) -> Pmf:
        _same(p.alphabet, self.input_alphabet, "push-forward")
        return Pmf(self.output_alphabet, p.probs @ self.rows)

    def then(self, other: Channel) -> Channel:
        """Serial composition: self followed by other."""
        _same(self.output_alphabet, other.input_alphabet, "composition")
        return Channel(self.input_alphabet, other.output_alphabet, self.rows @ other.rows)

    def product(self, other: Channel) -> Channel:
        ins = tuple(itertools.product(self.input_alphabet, other.input_alphabet))
        outs = tuple(itertools.product(self.output_alphabet, other.output_alphabet))
        return Channel(ins, outs, np.kron(self.rows, other.rows))

    def power(self, n):
        """n-fold parallel product; labels become n-tuples."""
        rows = self.rows
        for _ in range(n - 1):
            rows = np.kron(rows, self.rows)
        ins = tuple(itertools.product(self.input_alphabet, repeat=n))
        outs = tuple(itertools.product(self.output_alphabet, repeat=n))
        return Channel(ins, outs, rows)

    def with_rows(self, rows, normalize=False):
        return Channel(self.input_alphabet, self.output_alphabet, rows, normalize=normalize)

    def to_dict(self):
        return {
            "input_alphabet": list(map(_jsonable, self.input_alphabet)),
            "output_alphabet": list(map(_jsonable, self.output_alphabet)),
            "rows": self.rows.tolist(),
        }

    @classmethod
    def from_dict(cls, d, normalize=False):
        return cls(d["input_alphabet"], d["output_alphabet"], d["rows"], normalize=normalize)


@dataclass(frozen=True, eq=False)
class MacChannel:
    """Two-input channel p(y|x1,x2), probs indexed [x1, x2, y]."""

    x1_alphabet: tuple
    x2_alphabet: tuple
    y_alphabet: tuple
    probs: np.ndarray
    normalize: InitVar[bool] = False

    def __post_init__(self, normalize):
        x1, o1 = _canon(self.x1_alphabet)
        x2, o2 = _canon(self.x2_alphabet)
        y, oy = _canon(self.y_alphabet)
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.shape != (len(x1), len(x2), len(y)):
            raise ProbabilityError(
                f"MAC probs have shape {probs.shape}, expected {(len(x1), len(x2), len(y))}"
            )
        probs = _check_rows(probs[np.ix_(o1, o2, oy)], "mac", normalize)
        object.__setattr__(self, "x1_alphabet", x1)
        object.__setattr__(self, "x2_alphabet", x2)
        object.__setattr__(self, "y_alphabet", y)
        object.__setattr__(self, "probs", _freeze(probs))

    @property
    def shape(self):
        return self.probs.shape

    def as_channel(self) -> Channel:
        ins = tuple(itertools.product(self.x1_alphabet, self.x2_alphabet))
        return Channel(ins, self.y_alphabet, self.probs.reshape(len(ins), -1))

    @classmethod
    def from_function(cls, x1, x2, y, fn):
        """Deterministic MAC y = fn(x1, x2)."""
        x1, x2, y = tuple(x1), tuple(x2), tuple(y)
        probs = np.zeros((len(x1), len(x2), len(y)))
        for i, a in enumerate(x1):
            for j, b in enumerate(x2):
                probs[i, j, y.index(fn(a, b))] = 1.0
        return cls(x1, x2, y, probs)

    def to_dict(self):
        return {
            "x1": list(map(_jsonable, self.x1_alphabet)),
            "x2": list(map(_jsonable, self.x2_alphabet)),
            "y": list(map(_jsonable, self.y_alphabet)),
            "probs": self.probs.tolist(),
        }

    @classmethod
    def from_dict(cls, d, normalize=False):
        return cls(d["x1"], d["x2"], d["y"], d["probs"], normalize=normalize)


@dataclass(frozen=True, eq=False)
class Joint:
    axes: tuple
    probs: np.ndarray
    names: tuple = field(default=())

    def __post_init__(self):
        axes = tuple(tuple(a) for a in self.axes)
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.shape != tuple(len(a) for a in axes):
            raise ProbabilityError(f"joint shape {probs.shape} does not match axes")
        if probs.size and probs.min() < -ATOL:
            raise ProbabilityError("joint has negative entries")
        if abs(probs.sum() - 1.0) > ATOL:
            raise ProbabilityError(f"joint sums to {probs.sum():.12g}")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "probs", _freeze(np.clip(probs, 0.0, None)))

    def marginal(self, keep):
        keep = tuple(keep)
        drop = tuple(i for i in range(len(self.axes)) if i not in keep)
        p = self.probs.sum(axis=drop) if drop else self.probs
        srt = sorted(keep)
        p = p.transpose([srt.index(k) for k in keep])
        names = tuple(self.names[i] for i in keep) if self.names else ()
        if len(keep) == 1:
            return Pmf(self.axes[keep[0]], p)
        return Joint(tuple(self.axes[i] for i in keep), p, names)


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Auxiliary channels U_j|X_j and a decoder Y|(U1,U2).

    ``residual`` is the factorization error against the target MAC, measured
    in ``residual_mode`` ("average" under product inputs, or "max").
    """

    aux1: Channel
    aux2: Channel
    decoder: Channel
    residual: float | None = None
    residual_mode: str | None = None

    def __post_init__(self):
        expect = tuple(itertools.product(self.aux1.output_alphabet, self.aux2.output_alphabet))
        if self.decoder.input_alphabet != expect:
            raise AlphabetMismatch(
                "decoder input alphabet must be U1 x U2 "
                f"({len(expect)} pairs), got {len(self.decoder.input_alphabet)} labels"
            )

    @property
    def dims(self):
        return len(self.aux1.output_alphabet), len(self.aux2.output_alphabet)

    @property
    def decoder_tensor(self):
        d1, d2 = self.dims
        return self.decoder.rows.reshape(d1, d2, -1)

    def induced_mac(self) -> MacChannel:
        probs = np.einsum(
            "ab,cd,bde->ace", self.aux1.rows, self.aux2.rows, self.decoder_tensor, optimize=True
        )
        return MacChannel(
            self.aux1.input_alphabet,
            self.aux2.input_alphabet,
            self.decoder.output_alphabet,
            np.clip(probs, 0.0, None),
            normalize=True,
        )

    def to_dict(self):
        return {
            "aux1": self.aux1.to_dict(),
            "aux2": self.aux2.to_dict(),
            "decoder": self.decoder.to_dict(),
            "residual": self.residual,
            "residual_mode": self.residual_mode,
        }

    @classmethod
    def from_dict(cls, d, normalize=False):
        return cls(
            Channel.from_dict(d["aux1"], normalize),
            Channel.from_dict(d["aux2"], normalize),
            Channel.from_dict(d["decoder"], normalize),
            d.get("residual"),
            d.get("residual_mode"),
        )

    @classmethod
    def build(cls, aux1, aux2, decoder_tensor, y_alphabet, normalize=False):
        """Decomposition from aux channels and a dense decoder [u1, u2, y]."""
        ins = tuple(itertools.product(aux1.output_alphabet, aux2.output_alphabet))
        dec = np.asarray(decoder_tensor, dtype=np.float64).reshape(len(ins), -1)
        return cls(aux1, aux2, Channel(ins, tuple(y_alphabet), dec, normalize=normalize))


def _jsonable(label):
    if isinstance(label, tuple):
        return [_jsonable(x) for x in label]
    return label


def _same(a, b, what):
    if tuple(a) != tuple(b):
        only_a = [x for x in a if x not in b]
        only_b = [x for x in b if x not in a]
        if not only_a and not only_b:
            raise AlphabetMismatch(f"{what}: alphabets differ in size or order")
        raise AlphabetMismatch(f"{what}: alphabet mismatch, only left {only_a}, only right {only_b}")


def tv_distance(p: Pmf, q: Pmf) -> float:
    _same(p.alphabet, q.alphabet, "tv_distance")
    return 0.5 * float(np.abs(p.probs - q.probs).sum())


def row_tv(a, b):
    """Per-row total variation between two stacked row arrays."""
    return 0.5 * np.abs(np.asarray(a) - np.asarray(b)).sum(axis=-1)


def channel_tv(a: Channel, b: Channel, mode="max", input: Pmf | None = None) -> float:
    """Total variation between channels: worst row, or averaged under ``input``."""
    _same(a.input_alphabet, b.input_alphabet, "channel_tv inputs")
    _same(a.output_alphabet, b.output_alphabet, "channel_tv outputs")
    per = row_tv(a.rows, b.rows)
    if mode == "max":
        return float(per.max())
    if mode == "average":
        if input is None:
            raise ProbabilityError("average mode needs an input distribution")
        _same(input.alphabet, a.input_alphabet, "channel_tv input distribution")
        return float(input.probs @ per)
    raise ProbabilityError(f"unknown mode {mode!r}")


def _check_inputs(q1, q2, x1, x2):
    _same(q1.alphabet, x1, "first input")
    _same(q2.alphabet, x2, "second input")


def induced_joint(q1: Pmf, q2: Pmf, d: Decomposition) -> Joint:
    _check_inputs(q1, q2, d.aux1.input_alphabet, d.aux2.input_alphabet)
    probs = np.einsum(
        "a,c,ab,cd,bde->ace", q1.probs, q2.probs, d.aux1.rows, d.aux2.rows, d.decoder_tensor,
        optimize=True,
    )
    return Joint((q1.alphabet, q2.alphabet, d.decoder.output_alphabet), probs, ("X1", "X2", "Y"))


def mac_joint(q1: Pmf, q2: Pmf, m: MacChannel) -> Joint:
    _check_inputs(q1, q2, m.x1_alphabet, m.x2_alphabet)
    probs = q1.probs[:, None, None] * q2.probs[None, :, None] * m.probs
    return Joint((q1.alphabet, q2.alphabet, m.y_alphabet), probs, ("X1", "X2", "Y"))


def mac_tv(a: MacChannel, b: MacChannel, mode="max", inputs=None) -> float:
    """Simulation error between two MACs: worst input pair or product-averaged."""
    if a.probs.shape != b.probs.shape:
        raise AlphabetMismatch(f"MAC shapes {a.probs.shape} vs {b.probs.shape}")
    per = row_tv(a.probs, b.probs)
    if mode == "max":
        return float(per.max())
    q1, q2 = inputs
    return float(q1.probs @ per @ q2.probs)


def factorization_residual(d: Decomposition, target: MacChannel, inputs=None) -> float:
    """Residual of ``d`` against ``target``; averaged when ``inputs`` is given."""
    mode = "max" if inputs is None else "average"
    return mac_tv(d.induced_mac(), target, mode, inputs)


def with_residual(d: Decomposition, target: MacChannel, inputs=None) -> Decomposition:
    mode = "max" if inputs is None else "average"
    return Decomposition(d.aux1, d.aux2, d.decoder, factorization_residual(d, target, inputs), mode)


def random_channel(rng, n_in, n_out, concentration=1.0, inputs=None, outputs=None):
    rows = rng.dirichlet(np.full(n_out, concentration), size=n_in)
    return Channel(
        tuple(range(n_in)) if inputs is None else inputs,
        tuple(range(n_out)) if outputs is None else outputs,
        rows,
        normalize=True,
    )


def random_pmf(rng, n, concentration=1.0, alphabet=None):
    return Pmf(tuple(range(n)) if alphabet is None else alphabet, rng.dirichlet(np.full(n, concentration)), normalize=True)
