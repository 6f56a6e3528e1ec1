import numpy as np
import pytest

from conftest import BITS, random_decomposition, xor_decomposition, xor_mac
from macsim.entropic import imax_state, loglog
from macsim.probability import Channel, Decomposition, MacChannel, Pmf, induced_joint
from macsim.region import (
    RatePoint,
    aep_curve,
    find_decomposition,
    inner_point,
    iid_point,
    outer_point,
    pareto_front,
    perturbation_steps,
    reduce_cardinality,
    trace_region,
    universal_iid_point,
)


@pytest.mark.parametrize("mode", ["fixed", "universal"])
def test_find_xor_decomposition(uniform_pair, mode):
    d = find_decomposition(xor_mac(), 2, 2, mode, uniform_pair, restarts=8, seed=0)
    assert d.residual <= 1e-7


def test_xor_with_trivial_auxiliaries_has_half_residual(uniform_pair):
    # with |U1| = |U2| = 1 the output law r is the same for every pair, and the
    # average TV to the XOR point masses is 1 - (r0 + r1)/2 = 1/2 for any r
    grid = np.linspace(0, 1, 1001)
    assert np.min(1 - (grid + (1 - grid)) / 2) == pytest.approx(0.5)
    d = find_decomposition(xor_mac(), 1, 1, "fixed", uniform_pair, restarts=3, seed=1)
    assert d.residual == pytest.approx(0.5, abs=1e-9)


def test_mac_ignoring_second_input(rng, uniform_pair):
    w = rng.dirichlet([1, 1, 1], size=2)
    m = MacChannel(BITS, BITS, (0, 1, 2), np.repeat(w[:, None, :], 2, axis=1))
    d = find_decomposition(m, 2, 1, "fixed", uniform_pair, restarts=8, seed=2)
    assert d.residual <= 1e-7
    assert d.dims == (2, 1)


def test_residual_is_recomputed_independently(rng, uniform_pair):
    d = find_decomposition(xor_mac(), 2, 2, "fixed", uniform_pair, restarts=2, iters=3, seed=5)
    j = induced_joint(*uniform_pair, d).probs
    target = 0.25 * xor_mac().probs
    assert d.residual == pytest.approx(0.5 * np.abs(j - target).sum(), abs=1e-9)


def test_rate_points_for_xor(uniform_pair):
    d = xor_decomposition()
    outer = outer_point(d, 0.1, 0.1, "fixed", uniform_pair)
    inner = inner_point(d, 0.1, 0.1, 0.01, "fixed", uniform_pair)
    iid = iid_point(d, uniform_pair)
    assert iid.r1 == pytest.approx(1.0) and iid.r2 == pytest.approx(1.0)
    # identity aux under a uniform input: clipping the point mass at 1 - eps
    assert outer.r1 == pytest.approx(np.log2(2 * 0.9), abs=1e-9)
    assert inner.r1 == pytest.approx(np.log2(2 * 0.91) + loglog(0.01), abs=1e-9)
    assert universal_iid_point(d).r1 == pytest.approx(1.0, abs=1e-7)
    with pytest.raises(ValueError):
        inner_point(d, 0.1, 0.1, 0.2, "fixed", uniform_pair)


def test_inner_dominates_outer(rng, uniform_pair):
    for _ in range(5):
        d = random_decomposition(rng)
        for mode in ("fixed", "universal"):
            o = outer_point(d, 0.1, 0.1, mode, uniform_pair)
            i = inner_point(d, 0.1, 0.1, 0.01, mode, uniform_pair)
            assert i.r1 >= o.r1 - 1e-9 and i.r2 >= o.r2 - 1e-9


def test_membership_warning(uniform_pair):
    d = find_decomposition(xor_mac(), 1, 1, "fixed", uniform_pair, restarts=1, seed=0)
    with pytest.warns(RuntimeWarning, match="residual"):
        iid_point(d, uniform_pair)


def test_pareto_front():
    pts = [RatePoint(1, 2, "x"), RatePoint(2, 1, "x"), RatePoint(2, 2, "x"), RatePoint(1, 2, "x")]
    front = pareto_front(pts)
    assert [(p.r1, p.r2) for p in front] == [(1, 2), (2, 1)]
    with pytest.raises(ValueError):
        RatePoint(-1, 0, "x")


def test_trace_region_xor(uniform_pair):
    clouds, decomps = trace_region(xor_mac(), (2, 2), "fixed", uniform_pair, samples=2, restarts=4, seed=3)
    assert decomps
    assert set(clouds) == {"inner", "outer", "iid"}
    assert all(p.r1 >= 0 for ps in clouds.values() for p in ps)


def duplicate_symbol(d: Decomposition, u):
    """Split aux1 symbol u into two copies sharing its decoder rows."""
    rows = d.aux1.rows
    new = np.hstack([rows, rows[:, u:u + 1] / 2])
    new[:, u] /= 2
    tensor = np.concatenate([d.decoder_tensor, d.decoder_tensor[u:u + 1]], axis=0)
    k = new.shape[1]
    aux1 = Channel(d.aux1.input_alphabet, tuple(range(k)), new)
    return Decomposition.build(aux1, d.aux2, tensor, d.decoder.output_alphabet)


def test_reduce_duplicate_symbols(uniform_pair):
    d = xor_decomposition()
    for _ in range(7):  # |U1| = 9 > 2 * 2 * 2
        d = duplicate_symbol(d, 0)
    log = []
    r = reduce_cardinality(d, uniform_pair, log=log)
    assert r.dims[0] <= 8
    j0 = induced_joint(*uniform_pair, d).probs
    assert np.allclose(induced_joint(*uniform_pair, r).probs, j0, atol=1e-9)
    assert imax_state(r.aux1, uniform_pair[0]) == pytest.approx(imax_state(d.aux1, uniform_pair[0]), abs=1e-9)


def inflated(rng, extra):
    d = random_decomposition(rng, 2, 2, 2, 8 + extra, 2 + extra)
    q1 = Pmf(BITS, rng.dirichlet([2, 2]), normalize=True)
    q2 = Pmf(BITS, rng.dirichlet([2, 2]), normalize=True)
    return d, (q1, q2)


def test_reduce_inflated_instances(rng):
    for extra in (1, 2, 3):
        d, inputs = inflated(rng, extra)
        log = []
        r = reduce_cardinality(d, inputs, log=log)
        assert max(r.dims) <= 8
        for rec in log:
            assert rec["marginal_drift"] <= 1e-9
            assert max(rec["imax_drift"]) <= 1e-9
        assert np.allclose(induced_joint(*inputs, r).probs, induced_joint(*inputs, d).probs, atol=1e-9)


def test_perturbation_steps_record_eps_star(rng):
    d, inputs = inflated(rng, 1)
    recs = [rec for _, rec in perturbation_steps(d, inputs)]
    elim = [r for r in recs if r["action"] == "eliminate"]
    assert elim and all(r["eps_star"] > 0 for r in elim)
    assert [r["size"] for r in elim if r["aux"] == 1] == [8]


def test_zero_probability_symbols_are_pruned(uniform_pair):
    d = xor_decomposition()
    rows = np.hstack([d.aux1.rows, np.zeros((2, 1))])
    tensor = np.concatenate([d.decoder_tensor, d.decoder_tensor[:1]], axis=0)
    d = Decomposition.build(Channel(BITS, (0, 1, 2), rows), d.aux2, tensor, BITS)
    log = []
    r = reduce_cardinality(d, uniform_pair, log=log)
    assert log[0]["action"] == "prune"
    assert r.dims == (2, 2)


def test_aep_small():
    w = Channel.bsc(0.25)
    c = aep_curve(w, Pmf.uniform(BITS), 0.1, 3)
    assert [n for n, _ in c.points] == [1, 2, 3]
    assert c.limit == pytest.approx(0.188722, abs=1e-6)
    assert c.points[0][1] == pytest.approx(np.log2(1.3), abs=1e-6)
    assert all(v >= c.limit for _, v in c.points)


def test_aep_cap_notice():
    c = aep_curve(Channel.bsc(0.25), Pmf.uniform(BITS), 0.1, 6, cell_cap=4 ** 3)
    assert c.capped and len(c.points) == 3
    assert "n=3" in c.notice


def test_aep_channel_variant_limit_is_capacity():
    c = aep_curve(Channel.bsc(0.25), None, 0.1, 2, variant="channel")
    assert c.limit == pytest.approx(1 - 0.811278, abs=1e-6)
