"""B-spline bases for closed curves and paths of curves.

Curves are periodic B-splines in ``theta`` on ``[0, 2*pi]``; paths of curves
are tensor products of a clamped B-spline basis in time ``t`` on ``[0, 1]``
with the periodic basis in ``theta``.  Basis evaluation is delegated to
:class:`scipy.interpolate.BSpline`; periodicity is obtained by folding the
columns of an extended uniform basis.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import BSpline

from .errors import DegenerateCurve, RankDeficient

TWO_PI = 2.0 * np.pi

THETA_DEGREE = 3
TIME_DEGREE = 2
THETA_GAUSS_POINTS = 4
TIME_GAUSS_POINTS = 2
MIN_TIME_CONTROLS = 3
MIN_THETA_CONTROLS = 6
REGULARITY_EPS = 1e-8


@dataclass(frozen=True)
class SplineBasisTheta:
    """Uniform periodic B-spline basis on ``[0, 2*pi]``.

    Basis function ``j`` is centred at ``theta = 2*pi*j/N`` (odd degrees), so
    control points placed on a regular polygon produce a curve that follows
    that polygon.
    """

    n_controls: int
    degree: int = THETA_DEGREE

    def __post_init__(self):
        if self.n_controls < self.degree + 1:
            raise ValueError(
                f"need at least degree+1={self.degree + 1} periodic controls, "
                f"got {self.n_controls}")

    @property
    def spacing(self):
        return TWO_PI / self.n_controls

    @property
    def shift(self):
        # moves the support of basis j to be centred at j*spacing
        return 0.5 * (self.degree - 1) * self.spacing

    @property
    def knots(self):
        """Distinct knot locations in ``[0, 2*pi)``."""
        h = self.spacing
        offset = self.shift % h
        return offset + h * np.arange(self.n_controls)

    def design(self, theta, deriv=0):
        """Matrix ``M[s, j] = d^deriv C_j / dtheta^deriv`` at ``theta[s]``."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return _periodic_design(self.n_controls, self.degree, deriv,
                                tuple(theta.tolist()))


@lru_cache(maxsize=256)
def _periodic_design(n, k, deriv, theta):
    h = TWO_PI / n
    shift = 0.5 * (k - 1) * h
    knots = h * np.arange(-k, n + k + 1)
    spline = BSpline(knots, np.eye(n + k), k, extrapolate=False)
    if deriv:
        spline = spline.derivative(deriv)
    x = np.mod(np.asarray(theta) - shift, TWO_PI)
    ext = spline(x)
    ext = np.nan_to_num(ext, nan=0.0)
    out = ext[:, :n].copy()
    out[:, :k] += ext[:, n:]
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SplineBasisTime:
    """Clamped B-spline basis on ``[0, 1]`` with uniform interior knots."""

    n_controls: int
    degree: int = TIME_DEGREE

    def __post_init__(self):
        if self.n_controls < self.degree + 1:
            raise ValueError(
                f"need at least degree+1={self.degree + 1} time controls, "
                f"got {self.n_controls}")

    @property
    def knots(self):
        return _clamped_knots(self.n_controls, self.degree)

    @property
    def breakpoints(self):
        return np.linspace(0.0, 1.0, self.n_controls - self.degree + 1)

    def greville(self):
        """Abscissae at which linear functions are reproduced by their values."""
        t, k = self.knots, self.degree
        return np.array([t[i + 1:i + k + 1].mean() for i in range(self.n_controls)])

    def design(self, t, deriv=0):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return _clamped_design(self.n_controls, self.degree, deriv, tuple(t.tolist()))


@lru_cache(maxsize=256)
def _clamped_design(n, k, deriv, t):
    spline = BSpline(_clamped_knots(n, k), np.eye(n), k, extrapolate=True)
    if deriv:
        spline = spline.derivative(deriv)
    x = np.clip(np.asarray(t), 0.0, 1.0)
    out = np.asarray(spline(x), dtype=float)
    out.setflags(write=False)
    return out


def _clamped_knots(n, k):
    interior = np.linspace(0.0, 1.0, n - k + 1)[1:-1]
    return np.concatenate([np.zeros(k + 1), interior, np.ones(k + 1)])


def make_bases(n_time, n_theta):
    """Return the ``(time, theta)`` basis pair for an ``n_time x n_theta`` net."""
    if n_time < MIN_TIME_CONTROLS:
        raise ValueError(f"n_time must be >= {MIN_TIME_CONTROLS}, got {n_time}")
    if n_theta < MIN_THETA_CONTROLS:
        raise ValueError(f"n_theta must be >= {MIN_THETA_CONTROLS}, got {n_theta}")
    return SplineBasisTime(int(n_time)), SplineBasisTheta(int(n_theta))


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SplineCurve:
    """Closed plane curve given by periodic B-spline control points."""

    basis: SplineBasisTheta
    controls: np.ndarray
    fit_rms: float | None = None

    def __post_init__(self):
        controls = _frozen(self.controls)
        if controls.shape != (self.basis.n_controls, 2):
            raise ValueError(
                f"controls must have shape ({self.basis.n_controls}, 2), "
                f"got {controls.shape}")
        object.__setattr__(self, "controls", controls)

    @classmethod
    def from_controls(cls, controls, degree=THETA_DEGREE):
        controls = np.asarray(controls, dtype=float)
        return cls(SplineBasisTheta(len(controls), degree), controls)

    @property
    def n_controls(self):
        return self.basis.n_controls

    def __call__(self, theta, deriv=0):
        return self.basis.design(theta, deriv) @ self.controls

    def transformed(self, rotation=None, translation=None):
        c = self.controls
        if rotation is not None:
            c = c @ np.asarray(rotation).T
        if translation is not None:
            c = c + np.asarray(translation)
        return SplineCurve(self.basis, c)

    def samples(self, n):
        theta = TWO_PI * np.arange(n) / n
        return self(theta)

    def diameter(self, n=200):
        from scipy.spatial.distance import pdist
        return float(pdist(self.samples(n)).max())


def eval_curve(curve, theta):
    """Positions and first/second ``theta`` derivatives at ``theta``."""
    return curve(theta), curve(theta, 1), curve(theta, 2)


@dataclass(frozen=True, eq=False)
class PathControlNet:
    """Tensor-product control net of a path of curves.

    ``controls[i, j]`` multiplies ``B_i(t) * C_j(theta)``.  Row 0 is the source
    curve and row ``-1`` the end curve, because the time basis is clamped.
    """

    basis_t: SplineBasisTime
    basis_theta: SplineBasisTheta
    controls: np.ndarray

    def __post_init__(self):
        controls = _frozen(self.controls)
        shape = (self.basis_t.n_controls, self.basis_theta.n_controls, 2)
        if controls.shape != shape:
            raise ValueError(f"controls must have shape {shape}, got {controls.shape}")
        object.__setattr__(self, "controls", controls)

    @classmethod
    def constant(cls, curve, n_time):
        basis_t = SplineBasisTime(n_time)
        controls = np.broadcast_to(curve.controls, (n_time,) + curve.controls.shape)
        return cls(basis_t, curve.basis, controls)

    @property
    def shape(self):
        return self.controls.shape[:2]

    def curve_at(self, t):
        weights = self.basis_t.design([t])[0]
        return SplineCurve(self.basis_theta, np.tensordot(weights, self.controls, axes=1))

    def velocity_at(self, t):
        """Control coefficients of ``d/dt c(t, .)``."""
        weights = self.basis_t.design([t], 1)[0]
        return np.tensordot(weights, self.controls, axes=1)

    @property
    def source(self):
        return SplineCurve(self.basis_theta, self.controls[0])

    @property
    def end(self):
        return SplineCurve(self.basis_theta, self.controls[-1])

    def with_controls(self, controls):
        return PathControlNet(self.basis_t, self.basis_theta, controls)

    def transformed(self, rotation=None, translation=None):
        c = self.controls
        if rotation is not None:
            c = c @ np.asarray(rotation).T
        if translation is not None:
            c = c + np.asarray(translation)
        return self.with_controls(c)


def gauss_legendre_composite(breaks, n_points):
    """Composite Gauss-Legendre rule with ``n_points`` nodes per interval."""
    x, w = leggauss(n_points)
    a, b = np.asarray(breaks[:-1]), np.asarray(breaks[1:])
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    sites = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return sites, weights


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Quadrature abscissae, weights and basis tables for one direction.

    ``tables[d]`` is the ``(n_sites, n_controls)`` matrix of ``d``-th basis
    derivatives at the sites.
    """

    sites: np.ndarray
    weights: np.ndarray
    tables: tuple


@lru_cache(maxsize=64)
def theta_grid(basis, n_points=THETA_GAUSS_POINTS):
    breaks = np.append(basis.knots, basis.knots[0] + TWO_PI)
    sites, weights = gauss_legendre_composite(breaks, n_points)
    tables = tuple(basis.design(sites, d) for d in range(3))
    return QuadratureGrid(_frozen(sites), _frozen(weights), tables)


@lru_cache(maxsize=64)
def time_grid(basis, n_points=TIME_GAUSS_POINTS):
    sites, weights = gauss_legendre_composite(basis.breakpoints, n_points)
    tables = tuple(basis.design(sites, d) for d in range(2))
    return QuadratureGrid(_frozen(sites), _frozen(weights), tables)


class ArcLength:
    """Arc-length calculus along a curve known through its derivatives at sites.

    ``c_theta`` and ``c_thetatheta`` are ``(..., 2)`` arrays.  ``ds`` applies
    ``D_s = |c_theta|^{-1} d/dtheta`` and ``ds2`` applies it twice.
    """

    def __init__(self, c_theta, c_thetatheta, eps=REGULARITY_EPS, sites=None):
        self.c_theta = np.asarray(c_theta, dtype=float)
        self.c_thetatheta = np.asarray(c_thetatheta, dtype=float)
        self.speed = np.linalg.norm(self.c_theta, axis=-1)
        floor = eps * self.speed.mean()
        bad = np.flatnonzero(~(self.speed > floor))
        if bad.size:
            idx = np.unravel_index(bad[0], self.speed.shape)
            site = None if sites is None else sites(idx)
            raise DegenerateCurve(
                f"curve speed {self.speed[idx]:.3g} below regularity floor "
                f"{floor:.3g} at site {site if site is not None else idx}", site)
        # <c_theta, c_thetatheta> / |c_theta|^4, used by the second derivative
        self.stretch = np.einsum("...d,...d->...", self.c_theta, self.c_thetatheta) \
            / self.speed ** 4

    def ds(self, h_theta):
        return h_theta / self.speed[..., None]

    def ds2(self, h_theta, h_thetatheta):
        return (h_thetatheta / self.speed[..., None] ** 2
                - h_theta * self.stretch[..., None])


def arc_length_ops(c_theta, c_thetatheta, eps=REGULARITY_EPS):
    return ArcLength(c_theta, c_thetatheta, eps)


def resample_polygon(points, n):
    """``n`` points spaced uniformly by arc length along a closed polygon."""
    pts = np.asarray(points, dtype=float)
    closed = np.vstack([pts, pts[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    target = s[-1] * np.arange(n) / n
    return np.column_stack([np.interp(target, s, closed[:, 0]),
                            np.interp(target, s, closed[:, 1])])


def fit_spline(points, n_controls, resample=True, n_samples=None):
    """Least-squares periodic spline through a closed polygon.

    With ``resample`` the polygon is first redistributed uniformly in arc
    length (``n_samples`` points, default: as many as given) and the samples
    are assigned equispaced parameters.  Without it the points are taken to be
    samples at equispaced parameters already.  The RMS residual is stored in
    ``fit_rms``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"points must have shape (n, 2), got {pts.shape}")
    if len(pts) > 1 and np.allclose(pts[0], pts[-1]):
        pts = pts[:-1]
    if resample:
        pts = resample_polygon(pts, n_samples or len(pts))
    basis = SplineBasisTheta(int(n_controls))
    if len(pts) < basis.n_controls:
        raise RankDeficient(
            f"{len(pts)} samples cannot determine {basis.n_controls} controls")
    theta = TWO_PI * np.arange(len(pts)) / len(pts)
    design = basis.design(theta)
    controls, _, rank, _ = np.linalg.lstsq(design, pts, rcond=None)
    if rank < basis.n_controls:
        raise RankDeficient(f"design matrix has rank {rank} < {basis.n_controls}")
    residual = design @ controls - pts
    rms = float(np.sqrt(np.mean(np.sum(residual ** 2, axis=1))))
    return SplineCurve(basis, controls, fit_rms=rms)


def project_curve(curve, basis, n_samples=None):
    """Least-squares projection of ``curve`` onto another periodic basis.

    Both curves share the parameter ``theta``; no arc-length resampling.
    """
    n = n_samples or 8 * max(basis.n_controls, curve.n_controls)
    return fit_spline(curve.samples(n), basis.n_controls, resample=False)


def refit_net(net, basis_t, basis_theta, n_samples_t=None, n_samples_theta=None):
    """Least-squares re-fit of a path onto a different tensor-product basis."""
    nt = n_samples_t or 4 * max(basis_t.n_controls, net.basis_t.n_controls)
    nth = n_samples_theta or 4 * max(basis_theta.n_controls, net.basis_theta.n_controls)
    t = np.linspace(0.0, 1.0, nt)
    theta = TWO_PI * np.arange(nth) / nth
    values = np.tensordot(net.basis_t.design(t), net.controls, axes=1)
    values = np.matmul(net.basis_theta.design(theta), values)
    fit_t = np.linalg.pinv(basis_t.design(t))
    fit_theta = np.linalg.pinv(basis_theta.design(theta))
    controls = np.matmul(fit_theta, np.tensordot(fit_t, values, axes=1))
    return PathControlNet(basis_t, basis_theta, controls)
