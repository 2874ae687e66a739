import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqtape import ltm, smps
from seqtape.channels import Channel, stochastic_matrix
from seqtape.errors import FactorizationError, InvalidInput, NotStochastic


def test_hadamard_channel_doubly_stochastic():
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    s = stochastic_matrix(Channel.unitary(h))
    assert smps.is_doubly_stochastic(s, 1e-12)


# -- Birkhoff -------------------------------------------------------------------

def test_birkhoff_permutation_is_itself():
    p = ltm.permutation_matrix([2, 0, 1])
    terms = smps.birkhoff_decompose(p)
    assert len(terms) == 1
    assert terms[0][0] == pytest.approx(1)
    assert terms[0][1].tolist() == [2, 0, 1]


def test_birkhoff_half_half():
    terms = smps.birkhoff_decompose(np.full((2, 2), 0.5))
    assert [w for w, _ in terms] == pytest.approx([0.5, 0.5])
    # lexicographic tie-break: identity first
    assert [p.tolist() for _, p in terms] == [[0, 1], [1, 0]]


@pytest.mark.parametrize("seed", range(5))
def test_birkhoff_sinkhorn(seed):
    rng = np.random.default_rng(seed)
    s = smps.sinkhorn(rng.random((5, 5)))
    terms = smps.birkhoff_decompose(s)
    assert len(terms) <= (5 - 1) ** 2 + 1
    assert sum(w for w, _ in terms) == pytest.approx(1, abs=1e-9)
    assert np.abs(smps.birkhoff_reconstruct(terms) - s).max() < 1e-8


def test_birkhoff_deterministic():
    s = smps.sinkhorn(np.random.default_rng(9).random((4, 4)))
    a = smps.birkhoff_decompose(s)
    b = smps.birkhoff_decompose(s)
    assert [(w, p.tolist()) for w, p in a] == [(w, p.tolist()) for w, p in b]


def test_birkhoff_rejects():
    with pytest.raises(NotStochastic):
        smps.birkhoff_decompose(np.array([[0.7, 0.3], [0.7, 0.3]]))


# -- probabilistic machines -----------------------------------------------------

def coin_spec(n_sites=1):
    # processor (dim 1) (x) bit: fair coin flip of the bit
    return ltm.LtmSpec("lptm", 1, 2, n_sites, {"coin": np.full((2, 2), 0.5)})


def test_fair_coin():
    spec = coin_spec()
    r = smps.lptm_run(spec, [ltm.GateStep("coin", 0, 0)], [0])
    np.testing.assert_allclose(r.distribution, [0.5, 0.5])


def test_deterministic_program_point_mass():
    spec = ltm.LtmSpec("lptm", 1, 2, 2, {"not": np.array([[0.0, 1], [1, 0]])})
    prog = [ltm.GateStep("not", 0, 1), ltm.GateStep("not", 1, 0)]
    r = smps.lptm_run(spec, prog, [0, 1])
    np.testing.assert_allclose(r.distribution, [0, 0, 1, 0])


def two_step(seed):
    rng = np.random.default_rng(seed)
    gates = {"a": smps.sinkhorn(rng.random((4, 4))), "b": smps.sinkhorn(rng.random((4, 4)))}
    spec = ltm.LtmSpec("lptm", 2, 2, 3, gates)
    prog = [ltm.GateStep("a", 0, 1), ltm.GateStep("b", 1, 1), ltm.GateStep(None, 2, 0, ltm.HALT)]
    return spec, prog


@pytest.mark.parametrize("seed", range(3))
def test_exact_equals_trajectories(seed):
    spec, prog = two_step(seed)
    ex = smps.lptm_run(spec, prog, [1, 0, 1]).distribution
    tr = smps.lptm_trajectories(spec, prog, [1, 0, 1])
    assert np.abs(ex - tr).sum() <= 1e-10


def test_random_walk_by_hand():
    # processor-free walk: each step flips the site with probability 1/4
    g = np.array([[0.75, 0.25], [0.25, 0.75]])
    spec = ltm.LtmSpec("lptm", 1, 2, 2, {"w": g})
    prog = [ltm.GateStep("w", 0, 1), ltm.GateStep("w", 1, 0)]
    expect = np.kron([0.75, 0.25], [0.75, 0.25])
    np.testing.assert_allclose(smps.lptm_run(spec, prog, [0, 0]).distribution, expect)
    np.testing.assert_allclose(smps.lptm_trajectories(spec, prog, [0, 0]), expect)


def test_sampled_frequencies_converge():
    spec, prog = two_step(0)
    ex = smps.lptm_run(spec, prog, [0, 0, 0]).distribution
    sm = smps.lptm_run(spec, prog, [0, 0, 0], mode="sample", shots=20000, seed=3)
    assert 0.5 * np.abs(ex - sm.distribution).sum() < 0.03
    again = smps.lptm_run(spec, prog, [0, 0, 0], mode="sample", shots=20000, seed=3)
    np.testing.assert_array_equal(sm.counts, again.counts)


def test_lptm_rejects_quantum():
    with pytest.raises(InvalidInput):
        smps.lptm_run(ltm.LtmSpec("lctm", 1, 2, 1, {}), [], [0])


# -- NMF ------------------------------------------------------------------------

def test_nmf_rank_one():
    a = np.outer([0.2, 0.5, 0.3], [0.1, 0.9])
    r = smps.nmf_kl(a, 1)
    assert r.divergence < 1e-10


def test_nmf_diagonal():
    r = smps.nmf_kl(np.diag([0.5, 0.5]), 2, seed=1)
    np.testing.assert_allclose(r.approx, np.diag([0.5, 0.5]), atol=1e-6)
    assert np.trace(r.D) == pytest.approx(1, abs=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_nmf_monotone_and_normalized(seed):
    a = np.random.default_rng(seed).random((6, 8))
    r = smps.nmf_kl(a, 4, max_iter=300, seed=seed)
    tr = np.array(r.trace)
    assert np.all(np.diff(tr) <= 1e-12 * np.maximum(1, tr[:-1]))
    assert smps.is_column_stochastic(r.P) and smps.is_column_stochastic(r.Qt.T)
    assert np.trace(r.D) == pytest.approx(a.sum(), abs=1e-8)


def test_nmf_errors():
    with pytest.raises(InvalidInput):
        smps.nmf_kl(-np.ones((2, 2)), 1)
    with pytest.raises(InvalidInput):
        smps.nmf_kl(np.ones((2, 3)), 3)


def test_generalized_kl_by_hand():
    a = np.array([[1.0, 0.0]])
    b = np.array([[2.0, 1.0]])
    assert smps.kl_divergence(a, b) == pytest.approx(np.log(0.5) - 1 + 3)


def test_cluster_factor_exact():
    a = np.array([[1.0, 2, 0], [3, 6, 0], [0, 0, 4]])
    p, d, qt = smps.cluster_factor(a, 2)
    np.testing.assert_allclose(p @ d @ qt, a)
    assert p.shape[1] == 2
    assert smps.cluster_factor(np.eye(3), 2) is None


# -- stochastic MPS -------------------------------------------------------------

def product(*coins):
    p = np.ones(1)
    for c in coins:
        p = np.kron(p, [1 - c, c])
    return p


def test_product_has_unit_bonds():
    p = product(0.3, 0.6, 0.1, 0.8)
    s = smps.prob_to_smps(p, 2)
    assert s.bonds == [1] * 5
    assert np.abs(smps.smps_to_prob(s) - p).sum() < 1e-12


def test_correlated_has_bond_two():
    p = np.zeros(16)
    p[0] = p[-1] = 0.5
    s = smps.prob_to_smps(p, 2)
    assert max(s.bonds) == 2
    assert np.abs(smps.smps_to_prob(s) - p).sum() < 1e-12
    assert s.stochastic_deviation() < 1e-12


def test_random_three_bits_round_trip():
    p = np.random.default_rng(1).dirichlet(np.ones(8))
    s = smps.prob_to_smps(p, 2)
    assert np.abs(smps.smps_to_prob(s) - p).sum() < 1e-10


def test_truncated_uses_nmf_and_reports():
    p = np.random.default_rng(2).dirichlet(np.ones(16))
    s = smps.prob_to_smps(p, 2, chi_max=2)
    assert "nmf" in s.meta["methods"] and max(s.bonds) <= 2
    assert s.stochastic_deviation() < 1e-8
    q = smps.smps_to_prob(s)
    assert q.min() >= 0 and q.sum() == pytest.approx(1, abs=1e-8)


def test_prob_to_smps_dimension_check():
    with pytest.raises(Exception):
        smps.prob_to_smps(np.ones(6) / 6, 2, 3)


def test_decouple_product_is_trivial():
    s = smps.prob_to_smps(product(0.25, 0.5), 2)
    prog = smps.decouple_stochastic(s)
    assert prog.chi == 1
    np.testing.assert_allclose(prog.qmats[0], [[0.75, 0], [0.25, 1]])
    np.testing.assert_allclose(prog.qmats[1], [[0.5, 0], [0.5, 1]])


def test_decouple_correlated_pair():
    p = np.array([0.5, 0, 0, 0.5])
    prog = smps.decouple_stochastic(smps.prob_to_smps(p, 2))
    g = smps.generate_distribution(prog)
    assert np.abs(g.distribution - p).sum() < 1e-10
    assert g.correlator.max() >= 1 - 1e-8
    for q in prog.qmats:
        assert q.shape == (2 * prog.chi, 2 * prog.chi) and smps.is_column_stochastic(q)


def test_decouple_absorbs_general_boundaries():
    rng = np.random.default_rng(4)
    tensors = [rng.random((2, 2, 3)), rng.random((2, 3, 2)), rng.random((2, 2, 2))]
    s = smps.StochasticMps(tensors, rng.random(2), rng.random(2))
    target = smps.smps_to_prob(s)
    g = smps.generate_distribution(smps.decouple_stochastic(s))
    assert np.abs(g.distribution - target / target.sum()).sum() < 1e-12
    assert g.correlator.max() >= 1 - 1e-12


def test_decouple_zero_mass_reports_site():
    s = smps.StochasticMps([np.ones((2, 1, 1)) / 2, np.ones((2, 1, 1)) / 2], right=np.zeros(1))
    with pytest.raises(FactorizationError) as exc:
        smps.decouple_stochastic(s)
    assert exc.value.site == 2


def test_negative_tensor_rejected():
    with pytest.raises(InvalidInput):
        smps.StochasticMps([-np.ones((2, 1, 1))])


def test_sampling_bounds():
    prog = smps.decouple_stochastic(smps.prob_to_smps(np.array([0.5, 0.5]), 2))
    rep = smps.sample_sequential(prog, 10_000, seed=11)
    assert abs(rep.frequencies[0] - 0.5) <= 0.015
    corr = smps.decouple_stochastic(smps.prob_to_smps(np.array([0.5, 0, 0, 0.5]), 2))
    rep = smps.sample_sequential(corr, 100_000, seed=12)
    assert rep.tv <= 0.01 and rep.tv <= rep.bound
    point = smps.decouple_stochastic(smps.prob_to_smps(np.array([0, 0, 1.0, 0]), 2))
    assert smps.sample_sequential(point, 50, seed=0).counts.tolist() == [0, 0, 50, 0]


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 4), d=st.integers(2, 3), seed=st.integers(0, 2**32 - 1))
def test_round_trip_and_generation_property(n, d, seed):
    p = np.random.default_rng(seed).dirichlet(np.ones(d**n))
    s = smps.prob_to_smps(p, d, n)
    assert np.abs(smps.smps_to_prob(s) - p).sum() <= 1e-10
    g = smps.generate_distribution(smps.decouple_stochastic(s))
    assert np.abs(g.distribution - p).sum() <= 1e-10
    assert g.correlator.max() >= 1 - 1e-10


def test_bond_bound():
    # exact factorization never exceeds min(d^n, d^(N-n)) at a cut
    p = np.random.default_rng(5).dirichlet(np.ones(2**6))
    s = smps.prob_to_smps(p, 2)
    for n, b in enumerate(s.bonds):
        assert b <= min(2**n, 2 ** (6 - n))
