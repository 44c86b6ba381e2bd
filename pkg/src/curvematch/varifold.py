"""Kernel varifold inner products between closed curves.

Curves are approximated by polygons; each edge contributes a Dirac mass at
its midpoint carrying the edge length and unit tangent:

    <mu_1, mu_2> ~ sum_{k,l} |e_k| |f_l| gamma(u_k . w_l) rho(|x_k - y_l|^2)

Gradients are propagated back to polygon vertices and from there to the
spline control points of the curve the polygon was sampled from.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroEdge
from .splines import TWO_PI


def _gaussian(s, sigma):
    r = np.exp(-s / sigma ** 2)
    return r, -r / sigma ** 2


def _cauchy(s, sigma):
    q = 1.0 / (1.0 + s / sigma ** 2)
    return q, -q * q / sigma ** 2


RADIAL = {"gaussian": _gaussian, "cauchy": _cauchy}

ZONAL = {
    "linear": lambda t: (t, np.ones_like(t)),
    "squared": lambda t: (t * t, 2 * t),
    "constant": lambda t: (np.ones_like(t), np.zeros_like(t)),
    "binomial": lambda t: (0.25 * (1 + t) ** 2, 0.5 * (1 + t)),
}


@dataclass(frozen=True)
class VarifoldKernel:
    """Product kernel ``rho(|x - y|^2) * gamma(u . v)``.

    ``sigma=None`` means "not yet resolved"; see :meth:`resolved`.
    """

    rho: str = "gaussian"
    sigma: float | None = None
    gamma: str = "linear"

    def __post_init__(self):
        if self.rho not in RADIAL:
            raise ValueError(f"unknown radial function {self.rho!r}; "
                             f"choose from {sorted(RADIAL)}")
        if self.gamma not in ZONAL:
            raise ValueError(f"unknown zonal function {self.gamma!r}; "
                             f"choose from {sorted(ZONAL)}")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def orientation_invariant(self):
        return self.gamma in ("squared", "constant")

    def resolved(self, curves, factor=0.25):
        """Fix ``sigma`` to ``factor`` times the mean diameter of ``curves``."""
        if self.sigma is not None:
            return self
        diam = float(np.mean([c.diameter() for c in curves]))
        return VarifoldKernel(self.rho, factor * diam, self.gamma)

    def radial(self, s):
        if self.sigma is None:
            raise ValueError("kernel sigma is unresolved")
        return RADIAL[self.rho](s, self.sigma)

    def zonal(self, t):
        return ZONAL[self.gamma](t)

    def as_dict(self):
        return {"rho": {"name": self.rho, "sigma": self.sigma},
                "gamma": {"name": self.gamma}}

    @classmethod
    def from_dict(cls, d):
        return cls(d["rho"]["name"], d["rho"].get("sigma"), d["gamma"]["name"])


class PolygonalCurve:
    """Closed polygon; vertex ``k`` connects to vertex ``k+1`` (mod P)."""

    def __init__(self, vertices, theta=None):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError(f"need at least 3 vertices of dimension 2, got {v.shape}")
        self.vertices = v
        self.theta = theta
        self.edges = np.roll(v, -1, axis=0) - v
        self.lengths = np.linalg.norm(self.edges, axis=1)
        if not np.all(self.lengths > 0):
            k = int(np.flatnonzero(~(self.lengths > 0))[0])
            raise ZeroEdge(f"edge {k} of polygon has zero length")
        self.midpoints = v + 0.5 * self.edges
        self.tangents = self.edges / self.lengths[:, None]

    def __len__(self):
        return len(self.vertices)

    def transformed(self, rotation=None, translation=None):
        v = self.vertices
        if rotation is not None:
            v = v @ np.asarray(rotation).T
        if translation is not None:
            v = v + np.asarray(translation)
        return PolygonalCurve(v, self.theta)

    def reversed(self):
        return PolygonalCurve(self.vertices[::-1], None)


def sample_theta(n):
    return TWO_PI * np.arange(n) / n


def sample_polygon(curve, n):
    """Polygon with vertices ``curve(2*pi*k/n)``."""
    if n < 3:
        raise ValueError(f"need at least 3 samples, got {n}")
    theta = sample_theta(n)
    return PolygonalCurve(curve(theta), theta)


def sample_jacobian(curve, n):
    """``J[k, j] = C_j(theta_k)``: derivative of vertex ``k`` w.r.t. control ``j``."""
    return curve.basis.design(sample_theta(n))


def _pair_terms(p, q, kernel):
    d = p.midpoints[:, None, :] - q.midpoints[None, :, :]
    rho, drho = kernel.radial(d[..., 0] ** 2 + d[..., 1] ** 2)
    cos = np.clip(p.tangents @ q.tangents.T, -1.0, 1.0)
    gam, dgam = kernel.zonal(cos)
    return d, rho, drho, cos, gam, dgam


def varifold_inner(p, q, kernel):
    """Discrete varifold inner product of two polygons."""
    _, rho, _, _, gam, _ = _pair_terms(p, q, kernel)
    return float(p.lengths @ (gam * rho) @ q.lengths)


def varifold_inner_grad(p, q, kernel):
    """Inner product and its gradient w.r.t. the vertices of ``p``."""
    d, rho, drho, cos, gam, dgam = _pair_terms(p, q, kernel)
    lp, lq = p.lengths, q.lengths
    value = float(lp @ (gam * rho) @ lq)
    # w.r.t. midpoints x_k
    a = (lp[:, None] * lq[None, :]) * gam * drho
    g_mid = 2.0 * (np.sum(a, axis=1)[:, None] * p.midpoints - a @ q.midpoints)
    # w.r.t. edge vectors e_k, through |e_k| gamma(u_k . w_l)
    b = rho * lq[None, :]
    g_edge = (np.sum(b * gam, axis=1)[:, None] * p.tangents
              + (b * dgam) @ q.tangents
              - np.sum(b * dgam * cos, axis=1)[:, None] * p.tangents)
    # x_k = (v_k + v_{k+1})/2 and e_k = v_{k+1} - v_k
    return value, _edge_to_vertex(g_mid, g_edge)


def varifold_dist_sq(p, q, kernel):
    """Squared varifold distance, clamped at zero."""
    value = varifold_inner(p, p, kernel) - 2 * varifold_inner(p, q, kernel) \
        + varifold_inner(q, q, kernel)
    return max(value, 0.0)


def _edge_to_vertex(g_mid, g_edge):
    # x_k = (v_k + v_{k+1})/2 and e_k = v_{k+1} - v_k
    return (0.5 * (g_mid + np.roll(g_mid, 1, axis=0))
            + np.roll(g_edge, 1, axis=0) - g_edge)


def varifold_dist_sq_grad(p, q, kernel, q_self=None, target_grad=False):
    """Squared distance and its gradient w.r.t. the vertices of ``p``.

    A single kernel pass pairs the edges of ``p`` with those of ``p`` and
    ``q`` together, the latter carrying negative weights.  ``q_self`` may carry
    a precomputed ``<mu_q, mu_q>``.  With ``target_grad`` the gradient of the
    cross term ``-2 <mu_p, mu_q>`` w.r.t. the vertices of ``q`` is returned as
    a third item; ``<mu_q, mu_q>`` is left out because it does not change when
    ``q`` moves rigidly, which is the only way matching moves the target.  The value is not
    clamped so that it stays consistent with the gradients.
    """
    n = len(p)
    mids = np.vstack([p.midpoints, q.midpoints])
    tans = np.vstack([p.tangents, q.tangents])
    weights = np.concatenate([p.lengths, -q.lengths])
    d = p.midpoints[:, None, :] - mids[None, :, :]
    rho, drho = kernel.radial(d[..., 0] ** 2 + d[..., 1] ** 2)
    cos = np.clip(p.tangents @ tans.T, -1.0, 1.0)
    gam, dgam = kernel.zonal(cos)
    kern = gam * rho
    lp = p.lengths
    rows = kern @ weights
    pq = -float(lp @ rows) + float(lp @ (kern[:, :n] @ lp))
    qq = varifold_inner(q, q, kernel) if q_self is None else q_self
    value = float(lp @ rows) - pq + qq
    # gradient of <p, p - q> in its first slot, doubled
    a = lp[:, None] * weights[None, :] * gam * drho
    g_mid = 2.0 * (np.sum(a, axis=1)[:, None] * p.midpoints - a @ mids)
    b = rho * weights[None, :]
    bd = b * dgam
    g_edge = ((np.sum(b * gam, axis=1) - np.sum(bd * cos, axis=1))[:, None] * p.tangents
              + bd @ tans)
    grad = 2.0 * _edge_to_vertex(g_mid, g_edge)
    if not target_grad:
        return value, grad
    # -2 <p, q> differentiated in its second slot
    aq = a[:, n:]
    gq_mid = -2.0 * (np.sum(aq, axis=0)[:, None] * q.midpoints - aq.T @ p.midpoints)
    bq = rho[:, n:] * lp[:, None]
    bqd = bq * dgam[:, n:]
    cq = cos[:, n:]
    gq_edge = ((np.sum(bq * gam[:, n:], axis=0) - np.sum(bqd * cq, axis=0))[:, None]
               * q.tangents + bqd.T @ p.tangents)
    return value, grad, -2.0 * _edge_to_vertex(gq_mid, gq_edge)


def varifold_grad(curve, target, kernel, n_samples):
    """Gradient of the squared distance w.r.t. ``curve``'s control points.

    ``target`` is a fixed :class:`PolygonalCurve`.  Returns ``(value, grad)``.
    """
    p = sample_polygon(curve, n_samples)
    value, g_vert = varifold_dist_sq_grad(p, target, kernel)
    return value, sample_jacobian(curve, n_samples).T @ g_vert


def fidelity_hessian(curve, kernel, n_samples, step=1e-6):
    """Hessian of ``q -> d_var(q, curve)^2`` at ``q = curve`` w.r.t. controls.

    Central differences of the analytic gradient; the result is symmetrized
    and indexed like ``controls.ravel()``.  At ``q = curve`` the distance has
    its minimum, so the matrix is positive semi-definite up to roundoff.
    """
    target = sample_polygon(curve, n_samples)
    q_self = varifold_inner(target, target, kernel)
    J = sample_jacobian(curve, n_samples)
    base = np.asarray(curve.controls, dtype=float)
    h = step * max(curve.diameter(), 1.0)
    n = base.size
    H = np.empty((n, n))
    for k in range(n):
        cols = []
        for sign in (1.0, -1.0):
            x = base.ravel().copy()
            x[k] += sign * h
            p = PolygonalCurve(J @ x.reshape(base.shape))
            cols.append((J.T @ varifold_dist_sq_grad(p, target, kernel, q_self)[1]).ravel())
        H[:, k] = (cols[0] - cols[1]) / (2 * h)
    return 0.5 * (H + H.T)
