import json

import numpy as np
import pytest

from conftest import BITS, random_decomposition, xor_decomposition, xor_mac
from macsim.mac import (
    ProtocolTables,
    build_mac_protocol,
    clear_tables,
    converse_extract,
    exact_induced_mac,
    mac_simulate,
    protocol_tables,
    simulate_batch,
    verify_simulation,
)
from macsim.probability import MacChannel, Pmf, ProbabilityError, mac_tv


def test_parameter_validation(uniform_pair):
    d = xor_decomposition()
    with pytest.raises(ValueError):
        build_mac_protocol(d, 0.05, 0.05, 0.05, "fixed", uniform_pair)
    with pytest.raises(ValueError):
        build_mac_protocol(d, 0.05, 0.05, 0.01, "fixed", None)
    with pytest.raises(ValueError):
        build_mac_protocol(d, 0.05, 0.05, 0.01, "sideways", uniform_pair)


@pytest.mark.parametrize("variant", ["fixed", "universal"])
def test_xor_protocol_error(uniform_pair, variant):
    p = build_mac_protocol(xor_decomposition(), 0.05, 0.05, 0.01, variant, uniform_pair)
    exact = exact_induced_mac(p)
    mode = "average" if variant == "fixed" else "max"
    err = mac_tv(exact, xor_mac(), mode, uniform_pair if mode == "average" else None)
    assert err <= 0.1 + 1e-12
    # identity auxiliaries need one bit plus the log log overhead
    assert p.rates[0] == p.rates[1] >= 1


def test_verify_simulation_report(uniform_pair):
    p = build_mac_protocol(xor_decomposition(), 0.05, 0.05, 0.01, "fixed", uniform_pair)
    r = verify_simulation(p, xor_mac(), 20_000, seed=4)
    assert r["exact_within_bound"]
    assert r["within_slack"]
    assert r["bound"] == pytest.approx(0.1)
    json.dumps(r)
    for j in (1, 2):
        assert max(r["abort_rates"][f"sender{j}_exact"]) <= 0.01


def test_random_exact_decompositions(rng, uniform_pair):
    for _ in range(3):
        d = random_decomposition(rng)
        target = d.induced_mac()
        p = build_mac_protocol(d, 0.05, 0.05, 0.01, "fixed", uniform_pair)
        r = verify_simulation(p, target, 20_000, seed=1)
        assert r["exact_tv"] <= 0.1 + 1e-12
        assert r["within_slack"]


def test_single_run_agrees_with_batch(uniform_pair):
    p = build_mac_protocol(xor_decomposition(), 0.05, 0.05, 0.01, "universal")
    out = simulate_batch(p, np.array([0, 1, 1]), np.array([1, 1, 0]), seed=8)
    for r, (a, b) in enumerate([(0, 1), (1, 1), (1, 0)]):
        m1, m2, y = mac_simulate(p, a, b, seed=8, run=r)
        assert (m1, m2, y) == (out["m1"][r], out["m2"][r], out["y"][r])


def test_simulation_is_deterministic(uniform_pair):
    p = build_mac_protocol(xor_decomposition(), 0.05, 0.05, 0.01, "fixed", uniform_pair)
    x = np.arange(1000) % 2
    a = simulate_batch(p, x, x[::-1].copy(), seed=3)
    b = simulate_batch(p, x, x[::-1].copy(), seed=3)
    c = simulate_batch(p, x, x[::-1].copy(), seed=4)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not np.array_equal(a["m1"], c["m1"])


def test_clear_tables_reproduce_target(rng):
    m = MacChannel(BITS, BITS, (0, 1, 2), rng.dirichlet(np.ones(3), size=(2, 2)))
    t = clear_tables(m)
    assert np.allclose(t.induced_mac().probs, m.probs)
    c = converse_extract(t, 0.1, 0.1)
    assert all(c.satisfied)
    assert c.output_tv <= 0.2


def test_tables_validate_rows():
    t = clear_tables(xor_mac())
    bad = t.enc1.copy()
    bad[0, 0] = [0.5, 0.4]
    with pytest.raises(ProbabilityError, match="enc1"):
        ProtocolTables(t.x1_alphabet, t.x2_alphabet, t.y_alphabet, t.shared1, t.shared2,
                       bad, t.enc2, t.decoder_table)


def test_tables_roundtrip():
    t = clear_tables(xor_mac())
    u = ProtocolTables.from_dict(json.loads(json.dumps(t.to_dict())))
    assert np.array_equal(u.decoder_table, t.decoder_table)
    assert u.shared1.alphabet == t.shared1.alphabet


def test_protocol_tables_match_truncated_sampler(uniform_pair):
    # with M' trials written out, the table protocol must equal the sampler's
    # closed-form law at M' trials
    p = build_mac_protocol(xor_decomposition(), 0.05, 0.05, 0.01, "fixed", uniform_pair)
    t = protocol_tables(p)
    m1, m2 = t.message_sizes
    assert len(t.shared1) == 2 ** m1
    induced = t.induced_mac()
    # draw M' is emitted whenever it is reached, so the reach probability uses M' - 1
    beta = lambda s: (1 - 1 / s.lambda_per_input) ** (m1 - 1)
    a1 = (1 - beta(p.sender1))[:, None] * p.sender1.target_channel.rows + beta(p.sender1)[:, None] * p.sender1.proposal.probs
    a2 = (1 - beta(p.sender2))[:, None] * p.sender2.target_channel.rows + beta(p.sender2)[:, None] * p.sender2.proposal.probs
    expect = np.einsum("ab,cd,bde->ace", a1, a2, p.decoder.rows.reshape(2, 2, 2))
    assert np.allclose(induced.probs, expect, atol=1e-12)


@pytest.mark.parametrize("variant", ["fixed", "universal"])
def test_converse_on_built_protocol(uniform_pair, variant):
    p = build_mac_protocol(xor_decomposition(), 0.05, 0.05, 0.01, variant, uniform_pair)
    t = protocol_tables(p)
    c = converse_extract(t, 0.05, 0.05, uniform_pair if variant == "fixed" else None)
    assert all(c.satisfied)
    assert all(c.ball_ok)
    assert c.output_tv <= 0.1
    assert c.aux1.output_alphabet[0][0] == 1
    assert np.all(c.truncation_mass1 >= 0)
    json.dumps(c.to_dict())
