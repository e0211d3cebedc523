import numpy as np
import pytest

from bppd.bp import bp_init
from bppd.dem import DetectorErrorModel
from bppd.errors import DecodeError
from bppd.graph import decompose_to_graph
from bppd.matching import (belief_matching_decode, build_matching_problem,
                           mwpm_decode, reweighted_edge_posteriors, reweighted_mwpm,
                           timed_batch_decode)

from oracles import (oracle_matching_weight, oracle_min_weight_and_mask,
                     random_graphlike_dem)


def syndrome_of(dem, mech):
    s = np.zeros(dem.n_detectors, np.uint8)
    for k in np.flatnonzero(mech):
        for d in dem.column_dets[k]:
            s[d] ^= 1
    return s


def test_zero_syndrome(d3):
    corr = mwpm_decode(d3.graph, np.zeros(d3.dem.n_detectors, np.uint8))
    assert not corr.mechanisms.any()
    assert not corr.observables.any()
    assert corr.edges == ()


def test_two_defects_pick_the_cheap_edge():
    # path graph 0-1-2 plus boundary edges; the chain is likelier (lighter)
    # than routing both defects out through the boundary
    dem = DetectorErrorModel(
        n_detectors=3, n_observables=1,
        priors=np.array([0.01, 0.01, 0.4, 0.4]),
        column_dets=[(0,), (2,), (0, 1), (1, 2)],
        column_obs=[(0,), (), (), ()],
    )
    g = decompose_to_graph(dem)
    s = np.array([1, 0, 1], np.uint8)
    corr = mwpm_decode(g, s)
    # expected: chain through detector 1 (two light edges), not two heavy
    # boundary edges
    assert corr.mechanisms[2] == 1 and corr.mechanisms[3] == 1
    assert corr.mechanisms[0] == 0 and corr.mechanisms[1] == 0
    assert np.array_equal(syndrome_of(dem, corr.mechanisms), s)
    assert corr.matched_weight == pytest.approx(oracle_matching_weight(g, s), rel=1e-12)


def test_single_defect_boundary_mask():
    dem = DetectorErrorModel(
        n_detectors=2, n_observables=1,
        priors=np.array([0.01, 0.3]),
        column_dets=[(0,), (0, 1)],
        column_obs=[(0,), ()],
    )
    g = decompose_to_graph(dem)
    s = np.array([1, 0], np.uint8)
    corr = mwpm_decode(g, s)
    assert corr.mechanisms[0] == 1
    assert corr.observables[0] == 1
    assert corr.matched_weight == pytest.approx(oracle_matching_weight(g, s), rel=1e-12)


def test_optimality_oracle_random_instances():
    rng = np.random.default_rng(17)
    feasible = 0
    for _ in range(150):
        n_det = int(rng.integers(6, 40))
        dem = random_graphlike_dem(rng, n_det, int(rng.integers(n_det, 3 * n_det)))
        g = decompose_to_graph(dem)
        k = int(rng.integers(1, 9))
        s = np.zeros(n_det, np.uint8)
        s[rng.choice(n_det, min(k, n_det), replace=False)] = 1
        want = oracle_matching_weight(g, s)
        if not np.isfinite(want):
            with pytest.raises(DecodeError):
                mwpm_decode(g, s)
            continue
        feasible += 1
        corr = mwpm_decode(g, s)
        assert corr.matched_weight == pytest.approx(want, rel=1e-9, abs=1e-9)
        assert np.array_equal(syndrome_of(dem, corr.mechanisms), s)
    assert feasible > 80


def test_mask_agrees_with_unique_optimum():
    rng = np.random.default_rng(33)
    agreed = unique_count = 0
    for _ in range(80):
        n_det = int(rng.integers(4, 16))
        dem = random_graphlike_dem(rng, n_det, int(rng.integers(n_det, 3 * n_det)))
        g = decompose_to_graph(dem)
        k = int(rng.integers(1, 6))
        s = np.zeros(n_det, np.uint8)
        s[rng.choice(n_det, min(k, n_det), replace=False)] = 1
        w, mask, unique = oracle_min_weight_and_mask(g, s)
        if not np.isfinite(w):
            continue
        corr = mwpm_decode(g, s)
        assert corr.matched_weight == pytest.approx(w, rel=1e-9, abs=1e-9)
        if unique:
            unique_count += 1
            assert int(corr.observables[0]) == mask
            agreed += 1
    assert unique_count > 20


def test_path_consistency(d5):
    rng = np.random.default_rng(2)
    syn = d5.syndromes_from_dem(10, seed=3)
    for i in range(10):
        s = syn[i]
        problem = build_matching_problem(d5.graph, s)
        k = problem.defects.shape[0]
        for a in range(k):
            for b in range(a + 1, k):
                target = int(problem.defects[b])
                if not np.isfinite(problem.dist[a, b]):
                    continue
                # walk the tree and check connectivity and weight
                pred = problem.pred_edge[a]
                if pred[target] < 0:
                    continue
                node, weight, hops = target, 0.0, 0
                while node != int(problem.defects[a]):
                    eid = int(pred[node])
                    weight += float(d5.graph.edge_weight[eid])
                    u, v = int(d5.graph.edge_u[eid]), int(d5.graph.edge_v[eid])
                    assert node in (u, v)
                    node = v if node == u else u
                    hops += 1
                    assert hops < 10_000
                # tree distance within fp slack of the symmetrised matrix
                assert weight <= problem.dist[a, b] * (1 + 1e-9) + 1e-9 or \
                    weight == pytest.approx(problem.dist[a, b], rel=1e-9)


def test_validity_on_sampled_syndromes(d5):
    syn = d5.syndromes_from_dem(40, seed=8)
    for i in range(40):
        corr = mwpm_decode(d5.graph, syn[i])
        assert np.array_equal(syndrome_of(d5.dem, corr.mechanisms), syn[i])


def test_reweighting_identity(d3):
    """Edge posteriors equal to the static priors reproduce mwpm exactly."""
    syn = d3.syndromes_from_dem(25, seed=4)
    priors_as_post = d3.graph.edge_prob.copy()
    for i in range(25):
        a = mwpm_decode(d3.graph, syn[i])
        b = reweighted_mwpm(d3.graph, syn[i], priors_as_post)
        assert np.array_equal(a.mechanisms, b.mechanisms)
        assert np.array_equal(a.observables, b.observables)
        assert a.edges == b.edges


def test_reweighted_posterior_folding(d3):
    post = np.linspace(0.01, 0.4, d3.dem.n_mechanisms)
    pe = reweighted_edge_posteriors(d3.graph, post)
    eid = next(iter(d3.graph.hyper_to_edges.values()))[0]
    contributions = [post[d3.graph.edge_column[eid]]]
    for k, eids in d3.graph.hyper_to_edges.items():
        if eid in eids:
            contributions.append(post[k])
    acc = 0.0
    for c in contributions:
        acc = acc * (1 - c) + c * (1 - acc)
    assert pe[eid] == pytest.approx(acc, rel=1e-9)
    assert np.all(pe > 0) and np.all(pe < 1)


def test_negative_weight_preselection():
    """Posterior above one half presellects the edge and flips its endpoints."""
    dem = DetectorErrorModel(
        n_detectors=3, n_observables=1,
        priors=np.array([0.05, 0.05, 0.05, 0.05]),
        column_dets=[(0,), (0, 1), (1, 2), (2,)],
        column_obs=[(), (0,), (), ()],
    )
    g = decompose_to_graph(dem)
    post = np.array([0.01, 0.95, 0.01, 0.01])
    s = np.array([1, 1, 0], np.uint8)
    corr = reweighted_mwpm(g, s, reweighted_edge_posteriors(g, post))
    # edge (0,1) is near-certain: correction should be exactly that edge
    assert list(np.flatnonzero(corr.mechanisms)) == [1]
    assert corr.observables[0] == 1
    assert np.array_equal(syndrome_of(dem, corr.mechanisms), s)
    # brute-force check on the small instance: the returned solution
    # explains the syndrome with maximal posterior likelihood
    best, best_like = None, -np.inf
    for bits in range(16):
        e = np.array([(bits >> t) & 1 for t in range(4)], np.uint8)
        if not np.array_equal(syndrome_of(dem, e), s):
            continue
        like = float(np.sum(np.where(e, np.log(post), np.log1p(-post))))
        if like > best_like:
            best, best_like = e, like
    assert np.array_equal(corr.mechanisms, best)


def test_belief_matching_converged_skips_matching(d3):
    # an easy syndrome: single boundary-adjacent mechanism
    k = next(i for i in range(d3.dem.n_mechanisms) if len(d3.dem.column_dets[i]) == 1)
    e = np.zeros(d3.dem.n_mechanisms, np.uint8)
    e[k] = 1
    s = syndrome_of(d3.dem, e)
    corr = belief_matching_decode(d3.dem, d3.graph, s, 30, tanner=d3.tanner)
    assert corr.edges == ()
    assert np.array_equal(syndrome_of(d3.dem, corr.mechanisms), s)


def test_belief_matching_validity(d5):
    syn = d5.syndromes_from_dem(20, seed=12)
    for i in range(20):
        corr = belief_matching_decode(d5.dem, d5.graph, syn[i], 30, tanner=d5.tanner)
        assert np.array_equal(syndrome_of(d5.dem, corr.mechanisms), syn[i])


def test_timed_batch_zero_syndromes(d3):
    syn = np.zeros((50, d3.dem.n_detectors), np.uint8)
    corrections, secs = timed_batch_decode(d3.graph, syn)
    assert len(corrections) == 50
    assert all(not c.mechanisms.any() for c in corrections)
    assert secs >= 0
