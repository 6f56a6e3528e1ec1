import numpy as np
import pytest

from conftest import BITS, random_small_channel
from macsim.entropic import SmoothingSpec, SupportError
from macsim.probability import Channel, Pmf
from macsim.rejection import (
    abort_probability,
    accept_reject,
    accept_reject_batch,
    build_p2p,
    exact_induced_p2p,
    histogram,
    p2p_sample,
    p2p_simulate,
    trials_exponent,
)


def test_point_mass_target_accepts_first_match():
    target = Pmf(BITS, [1.0, 0.0])
    proposal = Pmf(BITS, [0.5, 0.5])
    t = accept_reject(target, proposal, 64, seed=3)
    assert not t.aborted
    assert t.output_symbol == 0
    # every earlier shared sample must have been the rejected symbol
    assert all(s == 1 for s in t.shared_samples[: t.message_index - 1])
    assert t.shared_samples[t.message_index - 1] == 0


def test_identical_target_and_proposal_accepts_immediately():
    p = Pmf(BITS, [0.3, 0.7])
    for run in range(20):
        t = accept_reject(p, p, 4, seed=1, run=run)
        assert t.message_index == 1 and not t.aborted


def test_abort_emits_last_index():
    target = Pmf(BITS, [1.0, 0.0])
    proposal = Pmf(BITS, [1e-3, 1 - 1e-3])
    idx, sym, ab = accept_reject_batch(target, proposal, 2, seed=0, n_runs=2000)
    assert ab.any()
    assert np.all(idx[ab] == 2)
    assert np.all(idx[~ab] <= 2)


def test_support_violation_raises():
    with pytest.raises(SupportError):
        accept_reject(Pmf(BITS, [0.5, 0.5]), Pmf(BITS, [1.0, 0.0]), 4, seed=0)


def test_single_round_matches_batch():
    target, proposal = Pmf((0, 1, 2), [0.6, 0.3, 0.1]), Pmf((0, 1, 2), [0.2, 0.3, 0.5])
    idx, sym, ab = accept_reject_batch(target, proposal, 8, seed=11, n_runs=50)
    for r in range(50):
        t = accept_reject(target, proposal, 8, seed=11, run=r)
        assert (t.message_index, t.output_symbol, t.aborted) == (idx[r], sym[r], ab[r])


def test_same_seed_same_transcript():
    target, proposal = Pmf(BITS, [0.9, 0.1]), Pmf(BITS, [0.5, 0.5])
    a = accept_reject(target, proposal, 8, seed=5, run=7)
    b = accept_reject(target, proposal, 8, seed=5, run=7)
    assert a == b or a.__dict__ == b.__dict__


@pytest.mark.parametrize("M", [1, 2, 4])
def test_abort_rate_matches_formula(M):
    target, proposal = Pmf((0, 1, 2), [0.7, 0.2, 0.1]), Pmf((0, 1, 2), [0.3, 0.3, 0.4])
    beta = abort_probability(target, proposal, M)
    assert beta == pytest.approx((1 - 0.3 / 0.7) ** M)
    n = 100_000
    _, _, ab = accept_reject_batch(target, proposal, M, seed=M, n_runs=n)
    assert abs(ab.mean() - beta) <= 3 * np.sqrt(beta * (1 - beta) / n)


def test_trials_exponent():
    assert trials_exponent(0.0, 0.5) == 0
    assert trials_exponent(0.0, 0.25) == 1
    assert trials_exponent(1.0, 0.01) == int(np.ceil(1 + np.log2(np.log2(100))))
    assert trials_exponent(-5.0, 0.01) == 0


def test_build_p2p_validates_delta():
    w = Channel.bsc(0.25)
    with pytest.raises(ValueError):
        build_p2p(w, SmoothingSpec.channel(0.1), 0.1)
    with pytest.raises(ValueError):
        build_p2p(w, SmoothingSpec.channel(0.1), 0.0)


def test_p2p_abort_bound_and_error(rng):
    for _ in range(10):
        w = random_small_channel(rng)
        p = build_p2p(w, SmoothingSpec.channel(0.1), 0.02)
        assert np.all(p.abort_probs <= 0.02 + 1e-12)
        assert p.trials == 2 ** int(p.rate_bits)
        induced = exact_induced_p2p(p)
        per = 0.5 * np.abs(induced.rows - w.rows).sum(axis=1)
        assert per.max() <= 0.1 + 1e-9


def test_p2p_histogram_matches_exact_law(rng):
    w = random_small_channel(rng, 3, 3)
    p = build_p2p(w, SmoothingSpec.channel(0.1), 0.05)
    exact = exact_induced_p2p(p).rows
    n = 50_000
    for x in range(w.shape[0]):
        _, sym, _ = p2p_sample(p, np.full(n, x), seed=9, run0=x * n)
        h = histogram(sym, w.shape[1]) / n
        assert 0.5 * np.abs(h - exact[x]).sum() <= 3 * np.sqrt(w.shape[1] / n)


def test_p2p_simulate_consistent_with_sample():
    w = Channel.bsc(0.25)
    p = build_p2p(w, SmoothingSpec.channel(0.1), 0.05)
    idx, sym, ab = p2p_sample(p, np.array([1] * 10), seed=2)
    for r in range(10):
        t = p2p_simulate(p, 1, seed=2, run=r)
        assert t.message_index == idx[r]
        assert t.output_symbol == w.output_alphabet[sym[r]]


def test_protocol_dict_is_plain():
    import json

    p = build_p2p(Channel.bsc(0.25), SmoothingSpec.channel(0.1), 0.05)
    d = json.loads(json.dumps(p.to_dict()))
    assert d["abort_convention"] == "emit index M"
    assert d["trials"] == p.trials


def brute_force_law(target, proposal, M):
    """Output law of the sampler by enumerating every string of M draws."""
    import itertools

    lam = max(target[proposal > 0] / proposal[proposal > 0])
    acc = np.where(proposal > 0, target / (lam * np.where(proposal > 0, proposal, 1)), 0)
    law = np.zeros(len(proposal))
    for s in itertools.product(range(len(proposal)), repeat=M):
        ps = np.prod(proposal[list(s)])
        reach = 1.0
        for i, u in enumerate(s):
            if i == M - 1:
                law[u] += ps * reach
            else:
                law[u] += ps * reach * acc[u]
                reach *= 1 - acc[u]
    return law


@pytest.mark.parametrize("M", [1, 2, 3])
def test_exact_law_matches_enumeration(M, rng):
    w = random_small_channel(rng, 3, 3)
    p = build_p2p(w, SmoothingSpec.channel(0.1), 0.05)
    from dataclasses import replace

    p = replace(p, trials=M)
    exact = exact_induced_p2p(p).rows
    for x in range(w.shape[0]):
        law = brute_force_law(p.target_channel.rows[x], p.proposal.probs, M)
        assert np.allclose(exact[x], law, atol=1e-12)
