"""Population statistics built on relaxed geodesic matching.

Pairwise distance matrices, spectral clustering of a distance matrix,
Karcher means by joint minimization over paths with a shared free source,
initial velocities (log map) and principal component analysis in the
tangent space at the mean.
"""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh
from scipy.sparse.csgraph import connected_components
from sklearn.cluster import KMeans

from .errors import CurveMatchError, DisconnectedGraph, OptimizationFailed
from .matching import LevelObjective, MatchConfig, solve_match
from .optimize import CONVERGED, lbfgs_minimize
from .sobolev import metric_inner, metric_matrix, path_length
from .splines import SplineCurve, time_grid
from .varifold import fidelity_hessian

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# distance matrices


@dataclass
class DistanceMatrix:
    """Symmetrized pairwise distances.

    ``raw[i, j]`` is the distance estimate from matching shape ``i`` onto
    shape ``j``; ``values`` is ``(raw + raw.T) / 2`` with a zero diagonal.
    ``status[i][j]`` records the solver outcome of each directed match.
    """

    names: list
    values: np.ndarray
    raw: np.ndarray
    status: list

    @property
    def converged(self):
        n = len(self.names)
        return np.array([[i == j or self.status[i][j] == CONVERGED for j in range(n)]
                         for i in range(n)])

    def asymmetry(self):
        """Relative asymmetry ``|d_ij - d_ji| / mean(d_ij, d_ji)`` off the diagonal."""
        d = self.raw
        denom = 0.5 * (d + d.T)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(denom > 0, np.abs(d - d.T) / denom, 0.0)
        np.fill_diagonal(out, 0.0)
        return out


def symmetrize(raw):
    raw = np.asarray(raw, dtype=float)
    out = 0.5 * (raw + raw.T)
    np.fill_diagonal(out, 0.0)
    return out


def match_distance(config, source, target):
    """``(distance, status)`` of one directed match; failures give NaN."""
    try:
        res = solve_match(config.problem(source, target))
    except OptimizationFailed as exc:
        log.warning("match failed: %s", exc)
        return float("nan"), "failed"
    return res.geodesic_distance, res.status


def _solve_entry(args):
    config, i, j, source, target = args
    return i, j, *match_distance(config, source, target)


def distance_matrix(shapes, config=None, names=None, jobs=1, completed=None,
                    on_entry=None):
    """Pairwise relaxed geodesic distances between ``shapes``.

    An automatic kernel width is resolved once from the whole collection so
    that every entry uses the same fidelity term.  ``completed`` maps
    ``(i, j)`` to ``(distance, status)`` for entries that need not be
    recomputed; ``on_entry(i, j, distance, status)`` is called in the parent
    process as each new entry finishes.  Entries are independent, so the
    result does not depend on ``jobs`` or on completion order.
    """
    n = len(shapes)
    if n < 2:
        raise ValueError(f"need at least 2 shapes, got {n}")
    config = (config or MatchConfig()).resolved(shapes)
    names = list(names) if names is not None else [f"shape_{i}" for i in range(n)]
    raw = np.zeros((n, n))
    status = [["" for _ in range(n)] for _ in range(n)]
    done = dict(completed or {})
    todo = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if (i, j) in done:
                raw[i, j], status[i][j] = done[(i, j)]
            else:
                todo.append((config, i, j, shapes[i], shapes[j]))

    def record(i, j, d, st):
        raw[i, j], status[i][j] = d, st
        if on_entry is not None:
            on_entry(i, j, d, st)

    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, j, d, st in pool.map(_solve_entry, todo, chunksize=1):
                record(i, j, d, st)
    else:
        for item in todo:
            record(*_solve_entry(item))

    bad = ~np.isfinite(raw)
    for i, j in zip(*np.nonzero(bad)):
        if not np.isfinite(raw[j, i]):
            raise CurveMatchError(
                f"matching failed in both directions between {names[i]!r} and {names[j]!r}")
        raw[i, j] = raw[j, i]
    return DistanceMatrix(names, symmetrize(raw), raw, status)


# --------------------------------------------------------------------------
# spectral clustering


@dataclass
class ClusterResult:
    labels: np.ndarray
    embedding: np.ndarray
    graph: np.ndarray
    eigenvalues: np.ndarray

    @property
    def n_clusters(self):
        return self.embedding.shape[1]


def knn_graph(D, p):
    """Binary symmetric p-nearest-neighbour graph (edge if either lists the other)."""
    D = np.asarray(D, dtype=float)
    n = len(D)
    W = np.zeros((n, n))
    for i in range(n):
        d = D[i].copy()
        d[i] = np.inf
        W[i, np.argsort(d, kind="stable")[:p]] = 1.0
    return np.maximum(W, W.T)


def _relabel(labels):
    """Number clusters in order of first appearance."""
    mapping = {}
    for lab in labels:
        mapping.setdefault(lab, len(mapping))
    return np.array([mapping[lab] for lab in labels], dtype=int)


def spectral_cluster(D, p=12, k=3, seed=0):
    """Normalized spectral clustering of a distance matrix.

    Uses ``L = I - D^{-1/2} W D^{-1/2}`` of the p-NN graph, the eigenvectors
    of its ``k`` smallest eigenvalues with rows scaled to unit length, and
    k-means (k-means++ seeding, 20 restarts).
    """
    values = D.values if isinstance(D, DistanceMatrix) else np.asarray(D, dtype=float)
    n = len(values)
    if not 0 < p < n:
        raise ValueError(f"need 0 < p < n, got p={p}, n={n}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    W = knn_graph(values, p)
    n_comp = connected_components(W, directed=False)[0]
    if n_comp > k:
        warnings.warn(f"neighbour graph has {n_comp} components but only {k} clusters "
                      "were requested", DisconnectedGraph, stacklevel=2)
    deg = W.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    L = np.eye(n) - inv_sqrt[:, None] * W * inv_sqrt[None, :]
    evals, evecs = eigh(L)
    U = evecs[:, :k]
    norms = np.linalg.norm(U, axis=1, keepdims=True)
    # rows vanish only on components the k eigenvectors do not reach
    U = U / np.where(norms > 0, norms, 1.0)
    km = KMeans(n_clusters=k, init="k-means++", n_init=20, max_iter=100,
                random_state=seed)
    labels = _relabel(km.fit_predict(U))
    return ClusterResult(labels, U, W, evals[:k])


def purity(labels, truth):
    """Fraction of items that carry the majority true label of their cluster."""
    labels, truth = np.asarray(labels), np.asarray(truth)
    hits = 0
    for lab in np.unique(labels):
        hits += np.bincount(truth[labels == lab]).max()
    return hits / len(labels)


# --------------------------------------------------------------------------
# Karcher mean


@dataclass
class KarcherResult:
    mean: SplineCurve
    nets: list
    rigid: list
    objective: float
    distances: np.ndarray
    iterations: int
    status: str
    objective_history: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status == CONVERGED


class _JointObjective:
    """Sum of relaxed matching objectives over paths sharing a free source.

    The variable vector is ``[a, x_1, ..., x_n]``.  The mean has controls
    ``m_j = m0_j + a_j * n_j`` where ``n_j`` is the unit normal of the initial
    mean at the centre of control ``j``; ``x_j`` packs the remaining rows (and
    rigid motion) of the ``j``-th path.  Tangential motions of the mean only
    reparametrize it, and leaving them out removes a direction in which the
    objective is flat up to discretization error.
    """

    def __init__(self, config, shapes, init, level):
        n_t, n_th, n_p = level
        self.levels = [LevelObjective(config.problem(init, s), n_t, n_th, n_p)
                       for s in shapes]
        first = self.levels[0]
        self.source = first.source
        basis = self.source.basis
        theta = basis.spacing * np.arange(basis.n_controls)
        tangent = self.source(theta, 1)
        tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
        self.normals = np.column_stack([tangent[:, 1], -tangent[:, 0]])
        self.n_mean = basis.n_controls
        self.sizes = [len(obj.pack(obj.constant_net(), obj.initial_rigid()))
                      for obj in self.levels]
        self.offsets = np.cumsum([self.n_mean] + self.sizes)

    def mean_controls(self, a):
        return self.source.controls + a[:, None] * self.normals

    def split(self, x):
        mean = self.mean_controls(x[:self.n_mean])
        parts = np.split(x[self.n_mean:], self.offsets[1:-1] - self.n_mean)
        return mean, parts

    def initial(self):
        xs = [obj.pack(obj.constant_net(), obj.initial_rigid()) for obj in self.levels]
        return np.concatenate([np.zeros(self.n_mean), *xs])

    def value_and_grad(self, x):
        mean, parts = self.split(x)
        total = 0.0
        g_mean = np.zeros_like(mean)
        grads = []
        for obj, xj in zip(self.levels, parts):
            f, g, gs = obj.value_and_grad(xj, source=mean, source_grad=True)
            total += f
            g_mean += gs
            grads.append(g)
        g_a = np.sum(g_mean * self.normals, axis=1)
        return total, np.concatenate([g_a, *grads])

    def build_preconditioner(self, x, shift=1e-3):
        """Approximate Hessian at constant paths from the mean ``x``.

        Each path contributes the energy Hessian ``T (x) M`` over all its rows
        (``T`` the time stiffness, ``M`` the metric Gram matrix of the mean)
        plus ``lam`` times the fidelity Hessian on its end row.  The paths are
        eliminated block-wise, leaving a Schur complement for the mean.  The
        fidelity Hessian is only semi-definite, so the complement gets a small
        ``shift`` towards the energy block.
        """
        first = self.levels[0]
        mean, _ = self.split(x)
        curve = SplineCurve(self.source.basis, mean)
        tg = time_grid(first.basis_t)
        B1 = tg.tables[1]
        T = B1.T @ (tg.weights[:, None] * B1)
        M = metric_matrix(curve, first.problem.coeffs)
        I2 = np.eye(2)
        nth = M.shape[0]
        A = np.kron(np.kron(T[1:, 1:], M), I2)
        fid = fidelity_hessian(curve, first.problem.kernel, first.n_samples)
        A[-2 * nth:, -2 * nth:] += first.problem.lam * fid
        # d(mean controls)/da, indexed like controls.ravel()
        R = (self.normals[:, :, None] * np.eye(nth)[:, None, :]).reshape(2 * nth, nth)
        C = np.kron(np.kron(T[1:, :1], M), I2) @ R
        H00 = R.T @ np.kron(T[0, 0] * M, I2) @ R
        self._block = cho_factor(A)
        self._coupling = C
        self._block_coupling = cho_solve(self._block, C)
        n = len(self.levels)
        S = n * ((1 + shift) * H00 - C.T @ self._block_coupling)
        self._schur = cho_factor(0.5 * (S + S.T))

    def precondition(self, g):
        n_net = self.levels[0].n_net
        parts = np.split(g[self.n_mean:], self.offsets[1:-1] - self.n_mean)
        ys = [cho_solve(self._block, gj[:n_net]) for gj in parts]
        rhs = g[:self.n_mean] - sum(self._coupling.T @ y for y in ys)
        xm = cho_solve(self._schur, rhs)
        back = self._block_coupling @ xm
        out = [xm]
        for gj, y in zip(parts, ys):
            out += [y - back, gj[n_net:]]
        return np.concatenate(out)


def karcher_mean(shapes, config=None, init=None):
    """Karcher mean by joint relaxed minimization.

    Minimizes ``sum_j E(c_j) + lam * d_var(c_j(1), shape_j)^2`` over ``n``
    paths whose common source row is the mean, at the finest level of
    ``config.settings.levels``.  The mean starts from ``init`` or from the
    average of the shapes' control points, each path from the constant path.
    """
    shapes = list(shapes)
    if not shapes:
        raise ValueError("need at least one shape")
    config = (config or MatchConfig()).resolved(shapes)
    if init is None:
        basis = shapes[0].basis
        if any(s.basis != basis for s in shapes):
            raise ValueError("shapes must share a spline basis to average controls")
        init = SplineCurve(basis, np.mean([s.controls for s in shapes], axis=0))
    joint = _JointObjective(config, shapes, init, config.settings.levels[-1])
    x0 = joint.initial()
    joint.build_preconditioner(x0)
    try:
        res = lbfgs_minimize(joint.value_and_grad, x0, config.settings,
                             precondition=joint.precondition)
    except Exception as exc:
        raise OptimizationFailed(f"Karcher mean: {exc}", 0) from exc
    mean_controls, parts = joint.split(res.x)
    mean = SplineCurve(joint.source.basis, mean_controls)
    nets, rigid = [], []
    for obj, xj in zip(joint.levels, parts):
        net, r = obj.unpack(xj, mean_controls)
        nets.append(net)
        rigid.append(r)
    dists = np.array([path_length(net, config.coeffs) for net in nets])
    return KarcherResult(mean, nets, rigid, res.f, dists, res.iterations, res.status,
                         res.history_f)


# --------------------------------------------------------------------------
# tangent space


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Spline coefficient field of a velocity at the curve ``base``."""

    base: SplineCurve
    coefficients: np.ndarray

    def inner(self, other, coeffs):
        return metric_inner(self.base, self.coefficients, other.coefficients, coeffs)

    def norm(self, coeffs):
        return float(np.sqrt(max(self.inner(self, coeffs), 0.0)))


def log_map(net):
    """Initial velocity ``d/dt c(0, .)`` of a path as a tangent vector."""
    return TangentVector(net.source, net.velocity_at(0.0))


@dataclass
class PcaResult:
    """Tangent PCA at ``mean``.

    ``eigenvalues`` are the variances of the scores (Gram eigenvalues over
    ``n``), ``gram_eigenvalues`` the raw eigenvalues of the centred Gram
    matrix; both are sorted in decreasing order.  ``directions`` holds one
    metric-orthonormal tangent vector per nonzero eigenvalue.
    """

    mean: SplineCurve
    directions: list
    eigenvalues: np.ndarray
    gram_eigenvalues: np.ndarray
    scores: np.ndarray
    gram: np.ndarray

    @property
    def explained(self):
        total = np.sum(np.clip(self.eigenvalues, 0.0, None))
        return self.eigenvalues / total if total > 0 else np.zeros_like(self.eigenvalues)


def gram_matrix(mean, fields, coeffs):
    """``K[j, l] = G_mean(v_j, v_l)`` for coefficient fields ``v``."""
    M = metric_matrix(mean, coeffs)
    V = np.asarray(fields, dtype=float)
    return np.einsum("jad,ab,lbd->jl", V, M, V)


def tangent_pca(mean, vectors, coeffs, rel_tol=1e-10):
    """Principal components of tangent vectors under the metric at ``mean``."""
    fields = np.array([v.coefficients if isinstance(v, TangentVector) else v
                       for v in vectors], dtype=float)
    n = len(fields)
    if n < 2:
        raise ValueError(f"need at least 2 tangent vectors, got {n}")
    centred = fields - fields.mean(axis=0)
    K = gram_matrix(mean, centred, coeffs)
    K = 0.5 * (K + K.T)
    evals, U = eigh(K)
    order = np.argsort(evals)[::-1]
    evals, U = evals[order], U[:, order]
    keep = evals > rel_tol * max(evals[0], 0.0) if evals[0] > 0 else np.zeros(n, bool)
    roots = np.sqrt(evals[keep])
    directions = [TangentVector(mean, np.tensordot(U[:, m], centred, axes=1) / r)
                  for m, r in zip(np.flatnonzero(keep), roots)]
    scores = U[:, keep] * roots
    return PcaResult(mean, directions, evals / n, evals, scores, K)


def principal_geodesic_endpoints(pca, index, amplitudes):
    """Curves ``mean + a * direction[index]``: a first-order stand-in for the
    geodesics from the mean along a principal direction."""
    mean = pca.mean
    w = pca.directions[index].coefficients
    return [SplineCurve(mean.basis, mean.controls + float(a) * w) for a in amplitudes]
