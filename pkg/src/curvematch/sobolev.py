"""Second order Sobolev metric with constant coefficients on spline curves.

The metric at a curve ``c`` is

    G_c(h, k) = int a0 <h, k> + a1 <D_s h, D_s k> + a2 <D_s^2 h, D_s^2 k> ds

and the energy of a path is ``int_0^1 G_c(t)(c_t, c_t) dt``.  Everything is
evaluated with the tensor Gauss quadrature of :mod:`curvematch.splines`, and
the gradients are exact derivatives of that quadrature sum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .splines import ArcLength, theta_grid, time_grid


@dataclass(frozen=True)
class MetricCoefficients:
    a0: float = 1.0
    a1: float = 1.0
    a2: float = 1.0

    def __post_init__(self):
        if min(self.a0, self.a1, self.a2) < 0:
            raise ValueError(f"metric coefficients must be non-negative: {self}")
        if not self.a0 > 0:
            raise ValueError("a0 must be positive")

    @property
    def is_second_order(self):
        return self.a2 > 0

    def as_dict(self):
        return {"a0": self.a0, "a1": self.a1, "a2": self.a2}


@dataclass(frozen=True)
class EnergyReport:
    energy: float
    contributions: np.ndarray  # one entry per time quadrature node


def _dot(x, y):
    return x[..., 0] * y[..., 0] + x[..., 1] * y[..., 1]


def metric_inner(curve, h, k, coeffs):
    """``G_c(h, k)`` for coefficient fields ``h``, ``k`` on the curve's basis."""
    grid = theta_grid(curve.basis)
    C0, C1, C2 = grid.tables
    arc = ArcLength(C1 @ curve.controls, C2 @ curve.controls,
                    sites=lambda i: (None, float(grid.sites[i])))
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    h_th, k_th = C1 @ h, C1 @ k
    integrand = coeffs.a0 * _dot(C0 @ h, C0 @ k)
    if coeffs.a1:
        integrand = integrand + coeffs.a1 * _dot(arc.ds(h_th), arc.ds(k_th))
    if coeffs.a2:
        integrand = integrand + coeffs.a2 * _dot(arc.ds2(h_th, C2 @ h),
                                                 arc.ds2(k_th, C2 @ k))
    return float(np.sum(grid.weights * arc.speed * integrand))


def metric_matrix(curve, coeffs):
    """Matrix ``M`` with ``G_c(h, k) = sum_d h[:, d] @ M @ k[:, d]``."""
    grid = theta_grid(curve.basis)
    C0, C1, C2 = grid.tables
    arc = ArcLength(C1 @ curve.controls, C2 @ curve.controls)
    L = arc.speed
    D1 = C1 / L[:, None]
    D2 = C2 / L[:, None] ** 2 - C1 * arc.stretch[:, None]
    w = grid.weights * L
    return (coeffs.a0 * (C0.T * w) @ C0 + coeffs.a1 * (D1.T * w) @ D1
            + coeffs.a2 * (D2.T * w) @ D2)


class _PathFields:
    """Curve and velocity derivatives of a net at every (t, theta) site."""

    def __init__(self, net):
        tg = time_grid(net.basis_t)
        sg = theta_grid(net.basis_theta)
        self.tgrid, self.sgrid = tg, sg
        B0, B1 = tg.tables
        C0, C1, C2 = sg.tables
        X = net.controls
        pos = np.tensordot(B0, X, axes=1)
        vel = np.tensordot(B1, X, axes=1)
        self.c_th = C1 @ pos
        self.c_thth = C2 @ pos
        self.v = C0 @ vel
        self.v_th = C1 @ vel
        self.v_thth = C2 @ vel
        self.arc = ArcLength(
            self.c_th, self.c_thth,
            sites=lambda idx: (float(tg.sites[idx[0]]), float(sg.sites[idx[1]])))
        self.weights = tg.weights[:, None] * sg.weights[None, :]

    def density(self, coeffs):
        """Metric integrand ``G(c_t, c_t)`` per unit ``dtheta`` at every site."""
        arc = self.arc
        out = coeffs.a0 * _dot(self.v, self.v)
        if coeffs.a1:
            w1 = arc.ds(self.v_th)
            out = out + coeffs.a1 * _dot(w1, w1)
        if coeffs.a2:
            w2 = arc.ds2(self.v_th, self.v_thth)
            out = out + coeffs.a2 * _dot(w2, w2)
        return out * arc.speed


def path_energy(net, coeffs):
    fields = _PathFields(net)
    per_node = fields.tgrid.weights * (fields.density(coeffs) @ fields.sgrid.weights)
    return EnergyReport(float(per_node.sum()), per_node)


def path_length(net, coeffs):
    """Riemannian length of the path, ``int_0^1 sqrt(G(c_t, c_t)) dt``."""
    fields = _PathFields(net)
    speed_sq = fields.density(coeffs) @ fields.sgrid.weights
    return float(fields.tgrid.weights @ np.sqrt(np.maximum(speed_sq, 0.0)))


def path_energy_gradient(net, coeffs, include_source=False):
    """Energy and its gradient with respect to the net's control points.

    Returns ``(energy, grad)``; ``grad`` has shape ``(N_t - 1, N_theta, 2)``
    (rows 1..N_t - 1) unless ``include_source`` is set, in which case the
    source row is included as well.
    """
    f = _PathFields(net)
    arc = f.arc
    a0, a1, a2 = coeffs.a0, coeffs.a1, coeffs.a2
    L = arc.speed[..., None]
    u = f.c_th / L
    m = _dot(f.c_th, f.c_thth)[..., None]
    w2 = arc.ds2(f.v_th, f.v_thth)

    vv = _dot(f.v, f.v)[..., None]
    vthvth = _dot(f.v_th, f.v_th)[..., None]
    w2w2 = _dot(w2, w2)[..., None]
    density = (a0 * vv + a1 * vthvth / L ** 2 + a2 * w2w2)[..., 0] * arc.speed
    energy = float(np.sum(f.weights * density))

    w2_vth = _dot(w2, f.v_th)[..., None]
    w2_vthth = _dot(w2, f.v_thth)[..., None]

    g_v = 2 * a0 * L * f.v
    g_vth = 2 * a1 * f.v_th / L - 2 * a2 * m * w2 / L ** 3
    g_vthth = 2 * a2 * w2 / L
    g_cth = ((a0 * vv - a1 * vthvth / L ** 2 + a2 * w2w2) * u
             + 2 * a2 * L * (-2 * w2_vthth / L ** 3 * u
                             - w2_vth * (f.c_thth / L ** 4 - 4 * m / L ** 5 * u)))
    g_cthth = -2 * a2 * w2_vth / L ** 3 * f.c_th

    W = f.weights[..., None]
    C0, C1, C2 = f.sgrid.tables
    B0, B1 = f.tgrid.tables
    z_vel = C0.T @ (W * g_v) + C1.T @ (W * g_vth) + C2.T @ (W * g_vthth)
    z_pos = C1.T @ (W * g_cth) + C2.T @ (W * g_cthth)
    grad = np.tensordot(B1, z_vel, axes=(0, 0)) + np.tensordot(B0, z_pos, axes=(0, 0))
    if not include_source:
        grad = grad[1:]
    return energy, grad
