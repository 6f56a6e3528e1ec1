import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import BITS, random_decomposition, xor_decomposition, xor_mac
from macsim.probability import (
    AlphabetMismatch,
    Channel,
    Decomposition,
    Joint,
    MacChannel,
    Pmf,
    ProbabilityError,
    channel_tv,
    factorization_residual,
    induced_joint,
    mac_joint,
    tv_distance,
)


def test_tv_examples():
    assert tv_distance(Pmf(BITS, [0.5, 0.5]), Pmf(BITS, [0.5, 0.5])) == 0
    assert tv_distance(Pmf(BITS, [1, 0]), Pmf(BITS, [0, 1])) == 1
    assert tv_distance(Pmf(BITS, [0.75, 0.25]), Pmf(BITS, [0.5, 0.5])) == pytest.approx(0.25)


def test_tv_alphabet_mismatch_names_labels():
    with pytest.raises(AlphabetMismatch, match="'c'"):
        tv_distance(Pmf(("a", "b"), [0.5, 0.5]), Pmf(("a", "c"), [0.5, 0.5]))


def test_pmf_validation():
    with pytest.raises(ProbabilityError):
        Pmf(BITS, [0.5, 0.4])
    with pytest.raises(ProbabilityError, match="duplicate"):
        Pmf((0, 0), [0.5, 0.5])
    assert Pmf(BITS, [1, 1], normalize=True).probs.tolist() == [0.5, 0.5]


def test_labels_are_canonically_sorted():
    p = Pmf(("b", "a"), [0.3, 0.7])
    assert p.alphabet == ("a", "b")
    assert p["a"] == pytest.approx(0.7)


def test_channel_row_error_names_row():
    with pytest.raises(ProbabilityError, match=r"row \[1\]"):
        Channel(BITS, BITS, [[0.5, 0.5], [0.2, 0.7]])


def test_channel_tv_examples():
    ident = Channel.identity(BITS)
    const = Channel.constant(BITS, Pmf.point(BITS, 0))
    assert channel_tv(ident, ident) == 0
    assert channel_tv(ident, ident, "average", Pmf.uniform(BITS)) == 0
    assert channel_tv(ident, const, "max") == 1
    assert channel_tv(ident, const, "average", Pmf(BITS, [1, 0])) == 0


def test_induced_joint_xor():
    u = Pmf.uniform(BITS)
    j = induced_joint(u, u, xor_decomposition())
    for a, b, y in itertools.product(BITS, BITS, BITS):
        assert j.probs[a, b, y] == pytest.approx(0.25 if y == a ^ b else 0.0)


def test_induced_joint_decoder_ignoring_u2(rng):
    d = random_decomposition(rng)
    tensor = d.decoder_tensor.copy()
    tensor[:, 1] = tensor[:, 0]
    d = Decomposition.build(d.aux1, d.aux2, tensor, d.decoder.output_alphabet)
    u = Pmf.uniform(BITS)
    p = induced_joint(u, u, d).probs
    cond = p / p.sum(axis=2, keepdims=True)
    assert np.allclose(cond[:, 0], cond[:, 1])


def nested_loop_joint(q1, q2, d):
    n1, n2 = len(q1), len(q2)
    d1, d2 = d.dims
    ny = len(d.decoder.output_alphabet)
    out = np.zeros((n1, n2, ny))
    for a in range(n1):
        for c in range(n2):
            for b in range(d1):
                for e in range(d2):
                    for y in range(ny):
                        out[a, c, y] += (q1.probs[a] * q2.probs[c] * d.aux1.rows[a, b]
                                         * d.aux2.rows[c, e] * d.decoder.rows[b * d2 + e, y])
    return out


def test_induced_joint_matches_nested_loops(rng):
    for _ in range(10):
        d = random_decomposition(rng, 2, 2, 2, 2, 2)
        q1 = Pmf(BITS, rng.dirichlet([1, 1]))
        q2 = Pmf(BITS, rng.dirichlet([1, 1]))
        assert np.allclose(induced_joint(q1, q2, d).probs, nested_loop_joint(q1, q2, d), atol=1e-15)


def test_mac_joint_examples(rng):
    u = Pmf.uniform(BITS)
    j = mac_joint(u, u, xor_mac())
    assert sorted(j.probs.ravel().tolist()) == [0.0] * 4 + [0.25] * 4
    j = mac_joint(Pmf.point(BITS, 1), Pmf.point(BITS, 0), xor_mac())
    assert j.probs[1, 0].sum() == 1.0
    m = MacChannel(BITS, BITS, BITS, rng.dirichlet([1, 1], size=(2, 2)))
    q1, q2 = Pmf(BITS, rng.dirichlet([1, 1])), Pmf(BITS, rng.dirichlet([1, 1]))
    brute = np.array([[[q1.probs[a] * q2.probs[b] * m.probs[a, b, y] for y in BITS] for b in BITS] for a in BITS])
    assert np.allclose(mac_joint(q1, q2, m).probs, brute)


def test_joint_marginals_recover_inputs(rng):
    d = random_decomposition(rng, 3, 2, 3, 2, 4)
    q1 = Pmf((0, 1, 2), rng.dirichlet(np.ones(3)))
    q2 = Pmf(BITS, rng.dirichlet(np.ones(2)))
    j = induced_joint(q1, q2, d)
    m = j.marginal([0, 1])
    assert np.allclose(m.probs, np.outer(q1.probs, q2.probs), atol=1e-15)
    assert np.allclose(j.marginal([1, 0]).probs, np.outer(q2.probs, q1.probs), atol=1e-15)
    assert isinstance(j.marginal([2]), Pmf)


def test_joint_rejects_bad_mass():
    with pytest.raises(ProbabilityError):
        Joint((BITS, BITS), np.full((2, 2), 0.3))


def test_xor_factorization_residual_is_zero(uniform_pair):
    assert factorization_residual(xor_decomposition(), xor_mac(), uniform_pair) == 0.0
    assert factorization_residual(xor_decomposition(), xor_mac()) == 0.0


def test_decomposition_roundtrip(rng):
    d = random_decomposition(rng, 2, 3, 2, 3, 2)
    e = Decomposition.from_dict(d.to_dict())
    assert e.aux1.input_alphabet == d.aux1.input_alphabet
    assert np.array_equal(e.decoder.rows, d.decoder.rows)


def _vec(n):
    return st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n).map(lambda v: np.array(v) / sum(v))


@settings(max_examples=60, deadline=None)
@given(_vec(4), _vec(4), _vec(4))
def test_tv_metric(p, q, r):
    a, b, c = (Pmf(tuple(range(4)), v, normalize=True) for v in (p, q, r))
    assert tv_distance(a, b) >= 0
    assert tv_distance(a, b) == pytest.approx(tv_distance(b, a))
    assert tv_distance(a, a) <= 1e-12
    assert tv_distance(a, c) <= tv_distance(a, b) + tv_distance(b, c) + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_data_processing_and_mode_order(seed):
    g = np.random.default_rng(seed)
    w = Channel(tuple(range(3)), tuple(range(4)), g.dirichlet(np.ones(4), size=3))
    p = Pmf(tuple(range(3)), g.dirichlet(np.ones(3)), normalize=True)
    q = Pmf(tuple(range(3)), g.dirichlet(np.ones(3)), normalize=True)
    assert tv_distance(w.push(p), w.push(q)) <= tv_distance(p, q) + 1e-12
    v = Channel(tuple(range(3)), tuple(range(4)), g.dirichlet(np.ones(4), size=3))
    assert channel_tv(w, v, "average", p) <= channel_tv(w, v, "max") + 1e-12
