import warnings

import numpy as np
import pytest
from scipy.linalg import eigh

from curvematch.errors import DisconnectedGraph
from curvematch.matching import MatchConfig
from curvematch.sobolev import MetricCoefficients, metric_inner
from curvematch.splines import (PathControlNet, SplineBasisTime, arc_length_ops, fit_spline,
                                theta_grid)
from curvematch.stats import (TangentVector, distance_matrix, karcher_mean, knn_graph,
                              log_map, principal_geodesic_endpoints, purity,
                              spectral_cluster, symmetrize, tangent_pca)
from curvematch.synthetic import shape_classes, wing_like

from conftest import circle_spline, random_curve

COARSE = MatchConfig().with_levels((6, 20, 50))


@pytest.fixture(scope="module")
def classes():
    names, polys, labels = shape_classes(4, seed=1)
    return names, [fit_spline(p, 20) for p in polys], np.asarray(labels)


@pytest.fixture(scope="module")
def class_matrix(classes):
    names, curves, _ = classes
    return distance_matrix(curves, COARSE, names)


@pytest.fixture(scope="module")
def wings():
    _, polys, _ = wing_like(10, seed=0)
    curves = [fit_spline(p, 20) for p in polys]
    return karcher_mean(curves, COARSE)


# ---------------------------------------------------------------- distance matrices

def test_symmetrize():
    raw = np.array([[5.0, 1.0], [3.0, 7.0]])
    np.testing.assert_array_equal(symmetrize(raw), [[0.0, 2.0], [2.0, 0.0]])


def test_identical_circles_zero_matrix():
    c = circle_spline(20)
    D = distance_matrix([c, c], COARSE)
    assert np.abs(D.values).max() < 1e-4
    assert D.converged.all()


def test_translated_circles_with_rigid():
    c = circle_spline(40)
    cfg = MatchConfig(rigid=True)
    D = distance_matrix([c, c.transformed(translation=[2.0, 1.0])], cfg)
    assert D.values[0, 1] < 1e-3


def test_matrix_properties(class_matrix, classes):
    D = class_matrix
    n = len(classes[0])
    assert D.values.shape == (n, n)
    np.testing.assert_array_equal(D.values, D.values.T)
    np.testing.assert_array_equal(np.diag(D.values), 0.0)
    assert np.all(D.values >= 0)
    assert D.converged.all()
    assert D.names == classes[0]


def test_asymmetry_small_within_classes(class_matrix, classes):
    labels = classes[2]
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    assert class_matrix.asymmetry()[same].max() < 0.1


def test_triangle_inequality_with_slack(class_matrix):
    d = class_matrix.values
    via = d[:, :, None] + d[None, :, :]
    assert np.all(d[:, None, :] <= 1.05 * via.transpose(0, 2, 1) + 1e-12)


def test_jobs_do_not_change_result(classes):
    _, curves, _ = classes
    subset = curves[:3]
    serial = distance_matrix(subset, COARSE, jobs=1)
    parallel = distance_matrix(subset, COARSE, jobs=2)
    np.testing.assert_array_equal(serial.raw, parallel.raw)


def test_completed_entries_are_reused(classes):
    _, curves, _ = classes
    subset = curves[:3]
    full = distance_matrix(subset, COARSE)
    seen = []
    done = {(0, 1): (full.raw[0, 1], "converged"), (2, 0): (full.raw[2, 0], "converged")}
    again = distance_matrix(subset, COARSE, completed=done,
                            on_entry=lambda i, j, d, s: seen.append((i, j)))
    assert (0, 1) not in seen and (2, 0) not in seen and len(seen) == 4
    np.testing.assert_array_equal(again.raw, full.raw)


def test_failed_entry_filled_from_transpose(classes, monkeypatch):
    import curvematch.stats as stats
    _, curves, _ = classes
    real = stats.match_distance

    def flaky(config, s, t):
        if s is curves[0] and t is curves[1]:
            return float("nan"), "failed"
        return real(config, s, t)

    monkeypatch.setattr(stats, "match_distance", flaky)
    D = distance_matrix(curves[:2], COARSE)
    assert D.status[0][1] == "failed"
    assert D.raw[0, 1] == D.raw[1, 0]
    assert not D.converged[0, 1]


def test_needs_two_shapes():
    with pytest.raises(ValueError):
        distance_matrix([circle_spline(12)])


# ---------------------------------------------------------------- clustering

def block_distances(sizes, gap=100.0, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    n = len(labels)
    D = rng.uniform(0.5, 1.0, (n, n))
    D = D + D.T + gap * (labels[:, None] != labels[None, :])
    np.fill_diagonal(D, 0.0)
    return D, labels


def test_knn_graph_is_symmetric_binary():
    D, _ = block_distances([5, 5])
    W = knn_graph(D, 2)
    np.testing.assert_array_equal(W, W.T)
    assert set(np.unique(W)) <= {0.0, 1.0}
    assert np.all(np.diag(W) == 0)
    assert np.all(W.sum(axis=1) >= 2)


def test_two_groups_perfect_partition():
    D, labels = block_distances([10, 10])
    res = spectral_cluster(D, p=4, k=2)
    assert purity(res.labels, labels) == 1.0
    assert res.labels[0] == 0
    np.testing.assert_allclose(np.linalg.norm(res.embedding, axis=1), 1.0)


def test_single_cluster():
    D, _ = block_distances([6, 6])
    res = spectral_cluster(D, p=8, k=1)
    assert np.all(res.labels == 0)


def test_disconnected_graph_warns():
    D, _ = block_distances([6, 6, 6])
    with pytest.warns(DisconnectedGraph):
        res = spectral_cluster(D, p=3, k=2)
    assert np.all(np.isfinite(res.embedding))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        spectral_cluster(D, p=3, k=3)


def test_argument_checks():
    D, _ = block_distances([4, 4])
    with pytest.raises(ValueError):
        spectral_cluster(D, p=8, k=2)
    with pytest.raises(ValueError):
        spectral_cluster(D, p=3, k=9)


def test_permutation_invariance():
    D, _ = block_distances([7, 8, 9], gap=0.4, seed=3)
    base = spectral_cluster(D, p=5, k=3).labels
    perm = np.random.default_rng(5).permutation(len(D))
    permuted = spectral_cluster(D[np.ix_(perm, perm)], p=5, k=3).labels
    # same partition: co-membership matrices agree
    same = base[:, None] == base[None, :]
    same_p = permuted[:, None] == permuted[None, :]
    np.testing.assert_array_equal(same[np.ix_(perm, perm)], same_p)


def test_synthetic_classes_cluster(class_matrix, classes):
    res = spectral_cluster(class_matrix, p=3, k=3, seed=0)
    assert purity(res.labels, classes[2]) >= 0.9


def test_purity():
    assert purity([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
    assert purity([0, 0, 0, 0], [0, 0, 1, 1]) == 0.5


# ---------------------------------------------------------------- Karcher mean

def test_single_shape_mean():
    c = random_curve(np.random.default_rng(2), 20)
    k = karcher_mean([c], COARSE)
    np.testing.assert_allclose(k.mean.controls, c.controls, atol=1e-8)
    assert k.objective < 1e-8


def test_identical_shapes_mean():
    c = random_curve(np.random.default_rng(3), 20)
    k = karcher_mean([c, c, c], COARSE)
    np.testing.assert_allclose(k.mean.controls, c.controls, atol=1e-8)
    assert k.objective < 1e-8
    assert np.all(k.distances < 1e-6)


def test_concentric_circles_mean():
    shapes = [circle_spline(40, 1.0), circle_spline(40, 3.0)]
    k = karcher_mean(shapes)
    assert k.converged
    radius = np.linalg.norm(k.mean.samples(200), axis=1)
    assert 1.9 <= radius.mean() <= 2.1
    assert k.distances[0] == pytest.approx(k.distances[1], rel=0.05)


def test_mean_objective_independent_of_order(wings):
    shapes = [net.curve_at(1.0) for net in wings.nets][:4]
    a = karcher_mean(shapes, COARSE)
    b = karcher_mean(shapes[::-1], COARSE)
    assert a.objective == pytest.approx(b.objective, rel=1e-8)


def test_mean_nets_start_at_mean(wings):
    for net in wings.nets:
        np.testing.assert_array_equal(net.controls[0], wings.mean.controls)
    assert wings.converged
    assert np.all(np.diff(wings.objective_history) <= 0)


# ---------------------------------------------------------------- log map and PCA

def test_log_map_of_simple_paths():
    c = circle_spline(20)
    const = PathControlNet.constant(c, 6)
    assert np.abs(log_map(const).coefficients).max() < 1e-14
    bt = SplineBasisTime(6)
    b = np.array([0.4, -1.0])
    net = PathControlNet(bt, c.basis, c.controls[None] + bt.greville()[:, None, None] * b)
    np.testing.assert_allclose(log_map(net).coefficients, np.tile(b, (20, 1)), atol=1e-13)


def test_log_map_norm_approximates_distance(wings):
    coeffs = MetricCoefficients()
    for net, d in zip(wings.nets, wings.distances):
        assert log_map(net).norm(coeffs) == pytest.approx(d, rel=0.1)


def test_pca_identical_vectors():
    c = circle_spline(20)
    v = np.ones((20, 2))
    pca = tangent_pca(c, [v, v, v], MetricCoefficients())
    assert np.all(pca.eigenvalues == 0)
    assert pca.directions == []


def test_pca_rank_one(rng):
    c = random_curve(rng, 20)
    w = rng.normal(size=(20, 2))
    vecs = [TangentVector(c, s * w) for s in rng.normal(size=8)]
    pca = tangent_pca(c, vecs, MetricCoefficients())
    assert pca.explained[0] > 0.999
    assert len(pca.directions) == 1


def dense_gram(mean, fields, coeffs):
    """Second implementation: pairwise metric_inner calls."""
    n = len(fields)
    return np.array([[metric_inner(mean, fields[j], fields[l], coeffs) for l in range(n)]
                     for j in range(n)])


def test_pca_against_dense_eigensolver(rng):
    c = random_curve(rng, 20)
    coeffs = MetricCoefficients(1.0, 0.3, 0.1)
    fields = rng.normal(size=(7, 20, 2))
    pca = tangent_pca(c, fields, coeffs)
    K = dense_gram(c, fields - fields.mean(axis=0), coeffs)
    ref = np.sort(eigh(K, eigvals_only=True))[::-1]
    np.testing.assert_allclose(pca.gram_eigenvalues, ref, rtol=1e-8, atol=1e-10 * ref[0])
    np.testing.assert_allclose(pca.eigenvalues, ref / 7, rtol=1e-8, atol=1e-10 * ref[0])
    assert np.all(np.diff(pca.eigenvalues) <= 0)
    assert pca.eigenvalues.min() >= -1e-10
    # orthonormal directions and scores reproducing the Gram matrix
    G = np.array([[a.inner(b, coeffs) for b in pca.directions] for a in pca.directions])
    np.testing.assert_allclose(G, np.eye(len(G)), atol=1e-8)
    np.testing.assert_allclose(pca.scores @ pca.scores.T, K, atol=1e-6 * np.abs(K).max())
    # scores are projections onto the directions
    centred = fields - fields.mean(axis=0)
    proj = [[metric_inner(c, v, d.coefficients, coeffs) for d in pca.directions]
            for v in centred]
    np.testing.assert_allclose(pca.scores, proj, atol=1e-8)


def test_principal_geodesic_endpoints(wings):
    coeffs = MetricCoefficients()
    pca = tangent_pca(wings.mean, [log_map(n) for n in wings.nets], coeffs)
    s = np.sqrt(pca.eigenvalues[0])
    minus, zero, plus = principal_geodesic_endpoints(pca, 0, [-s, 0.0, s])
    np.testing.assert_array_equal(zero.controls, wings.mean.controls)
    np.testing.assert_allclose(0.5 * (minus.controls + plus.controls),
                               wings.mean.controls, atol=1e-14)
    for m in range(2):
        s = np.sqrt(pca.eigenvalues[m])
        for cur in principal_geodesic_endpoints(pca, m, [-s, s]):
            g = theta_grid(cur.basis)
            arc_length_ops(g.tables[1] @ cur.controls, g.tables[2] @ cur.controls)
