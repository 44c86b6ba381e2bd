"""Relaxed geodesic matching between unparametrized closed curves.

Minimizes ``E(c) + lam * d_var(c(1), A c1 + b)^2`` over paths starting at the
source curve and, optionally, over the rigid motion ``(A, b)`` applied to the
target.  Solved with L-BFGS from the constant path, coarse-to-fine.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import OptimizationFailed
from .optimize import CONVERGED, OptimizerSettings, lbfgs_minimize
from .sobolev import (MetricCoefficients, metric_matrix, path_energy,
                      path_energy_gradient, path_length)
from .splines import PathControlNet, make_bases, project_curve, refit_net, time_grid
from .varifold import (PolygonalCurve, VarifoldKernel, sample_theta, varifold_dist_sq,
                       varifold_dist_sq_grad, varifold_inner)

log = logging.getLogger(__name__)


def rotation_matrix(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class RigidMotion:
    """``x -> A(angle) x + translation``."""

    angle: float = 0.0
    translation: tuple = (0.0, 0.0)

    @property
    def matrix(self):
        return rotation_matrix(self.angle)

    @property
    def b(self):
        return np.asarray(self.translation, dtype=float)

    def apply(self, points):
        return np.asarray(points) @ self.matrix.T + self.b

    def inverse(self):
        b = -self.matrix.T @ self.b
        return RigidMotion(-self.angle, (float(b[0]), float(b[1])))

    def as_array(self):
        return np.array([self.angle, *self.translation], dtype=float)

    @classmethod
    def from_array(cls, a):
        return cls(float(a[0]), (float(a[1]), float(a[2])))


@dataclass(frozen=True, eq=False)
class MatchProblem:
    """One inexact matching problem; the finest level of ``settings.levels``
    is the working discretization ``(N_t, N_theta, P)``."""

    source: object
    target: object
    coeffs: MetricCoefficients = MetricCoefficients()
    kernel: VarifoldKernel = VarifoldKernel()
    lam: float = 5.0
    rigid: bool = False
    settings: OptimizerSettings = OptimizerSettings()

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.kernel.sigma is None:
            object.__setattr__(self, "kernel",
                               self.kernel.resolved([self.source, self.target]))

    @property
    def resolution(self):
        return self.settings.levels[-1]

    def with_levels(self, *levels):
        return replace(self, settings=replace(self.settings, levels=tuple(levels)))


@dataclass(frozen=True)
class MatchConfig:
    """Everything in a :class:`MatchProblem` except the two curves."""

    coeffs: MetricCoefficients = MetricCoefficients()
    kernel: VarifoldKernel = VarifoldKernel()
    lam: float = 5.0
    rigid: bool = False
    settings: OptimizerSettings = OptimizerSettings()

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")

    def resolved(self, curves):
        """Fix an automatic kernel width from a whole collection of curves."""
        return replace(self, kernel=self.kernel.resolved(curves))

    def problem(self, source, target):
        return MatchProblem(source, target, self.coeffs, self.kernel, self.lam,
                            self.rigid, self.settings)

    def with_levels(self, *levels):
        return replace(self, settings=replace(self.settings, levels=tuple(levels)))


@dataclass
class MatchResult:
    net: PathControlNet
    rigid: RigidMotion
    energy: float
    fidelity: float
    objective: float
    geodesic_distance: float
    iterations: list = field(default_factory=list)
    gnorm_history: list = field(default_factory=list)
    objective_history: list = field(default_factory=list)
    status: str = CONVERGED
    wall_time: float = 0.0
    lam: float = 0.0

    @property
    def converged(self):
        return self.status == CONVERGED


class LevelObjective:
    """Objective and gradient of a problem at one discretization level.

    The optimization vector holds net rows ``1..N_t-1`` (flattened) followed,
    when rigid motions are enabled, by ``(angle, b_x, b_y)``.
    """

    def __init__(self, problem, n_time, n_theta, n_samples):
        self.problem = problem
        self.basis_t, self.basis_theta = make_bases(n_time, n_theta)
        self.n_samples = int(n_samples)
        if problem.source.basis == self.basis_theta:
            self.source = problem.source
        else:
            self.source = project_curve(problem.source, self.basis_theta)
        self.target_vertices = problem.target(sample_theta(self.n_samples))
        target = PolygonalCurve(self.target_vertices)
        self.target_self = varifold_inner(target, target, problem.kernel)
        self.jacobian = self.basis_theta.design(sample_theta(self.n_samples))
        self.net_shape = (n_time - 1, n_theta, 2)
        self.n_net = int(np.prod(self.net_shape))
        self._precond = None

    def energy_hessian(self, net):
        """``H[(i,j),(k,l)] = sum_q w_q B'_i(t_q) B'_k(t_q) M_q[j,l]``.

        ``M_q`` is the metric Gram matrix of the curve ``c(t_q)``; rows and
        columns cover net rows ``1..N_t-1`` and act on each coordinate alike.
        For a constant path this is the exact Hessian of the energy.
        """
        tg = time_grid(self.basis_t)
        B1 = tg.tables[1][:, 1:]
        nt, nth = self.net_shape[:2]
        H = np.zeros((nt, nth, nt, nth))
        for q, t in enumerate(tg.sites):
            M = metric_matrix(net.curve_at(t), self.problem.coeffs)
            H += tg.weights[q] * (np.outer(B1[q], B1[q])[:, None, :, None]
                                  * M[None, :, None, :])
        return H.reshape(nt * nth, nt * nth)

    def build_preconditioner(self, net):
        """Factor the energy Hessian at ``net``; the fidelity term is left out
        because its Hessian costs more to form than it saves in iterations."""
        self._precond = cho_factor(self.energy_hessian(net))

    def precondition(self, g):
        if self._precond is None:
            self.build_preconditioner(self.constant_net())
        nt, nth = self.net_shape[:2]
        rows = g[:self.n_net].reshape(nt * nth, 2)
        out = cho_solve(self._precond, rows).ravel()
        return np.concatenate([out, g[self.n_net:]])

    def initial_rigid(self):
        if not self.problem.rigid:
            return RigidMotion()
        src = self.source(sample_theta(self.n_samples)).mean(axis=0)
        b = src - self.target_vertices.mean(axis=0)
        return RigidMotion(0.0, (float(b[0]), float(b[1])))

    def constant_net(self):
        return PathControlNet.constant(self.source, self.basis_t.n_controls)

    def pack(self, net, rigid):
        x = np.asarray(net.controls[1:], dtype=float).ravel()
        if self.problem.rigid:
            x = np.concatenate([x, rigid.as_array()])
        return x

    def unpack(self, x, source=None):
        rows = x[:self.n_net].reshape(self.net_shape)
        first = self.source.controls if source is None else source
        controls = np.concatenate([first[None], rows], axis=0)
        net = PathControlNet(self.basis_t, self.basis_theta, controls)
        rigid = RigidMotion.from_array(x[self.n_net:]) if self.problem.rigid \
            else RigidMotion()
        return net, rigid

    def target_polygon(self, rigid):
        return PolygonalCurve(rigid.apply(self.target_vertices))

    def terms(self, net, rigid):
        """``(energy, fidelity)`` without gradients; fidelity is clamped."""
        energy = path_energy(net, self.problem.coeffs).energy
        end = PolygonalCurve(net.end(sample_theta(self.n_samples)))
        fidelity = varifold_dist_sq(end, self.target_polygon(rigid), self.problem.kernel)
        return energy, fidelity

    def value_and_grad(self, x, source=None, source_grad=False):
        """Objective and gradient at the packed vector ``x``.

        ``source`` overrides the source control points; with ``source_grad``
        the gradient w.r.t. them is returned as a third item.
        """
        net, rigid = self.unpack(x, source)
        p = self.problem
        energy, g_net = path_energy_gradient(net, p.coeffs, include_source=source_grad)
        if source_grad:
            g_source, g_net = g_net[0], g_net[1:]
        end = PolygonalCurve(net.end(sample_theta(self.n_samples)))
        target = self.target_polygon(rigid)
        out = varifold_dist_sq_grad(end, target, p.kernel, self.target_self,
                                    target_grad=p.rigid)
        fid, g_end = out[0], out[1]
        g_net[-1] += p.lam * (self.jacobian.T @ g_end)
        grad = g_net.ravel()
        if p.rigid:
            g_target = p.lam * out[2]
            dA = rotation_matrix(rigid.angle + 0.5 * np.pi)
            g_angle = np.sum(g_target * (self.target_vertices @ dA.T))
            grad = np.concatenate([grad, [g_angle], g_target.sum(axis=0)])
        if source_grad:
            return energy + p.lam * fid, grad, g_source
        return energy + p.lam * fid, grad


def objective_and_gradient(problem, net, rigid=None, n_samples=None):
    """Relaxed objective at ``(net, rigid)`` and its gradient.

    Returns ``(value, grad_net, grad_rigid)`` where ``grad_net`` covers net
    rows ``1..N_t-1`` and ``grad_rigid`` is ``(d/dangle, d/db)`` or ``None``.
    """
    n_t, n_th = net.shape
    obj = LevelObjective(problem, n_t, n_th, n_samples or problem.resolution[2])
    if problem.source.basis != net.basis_theta or \
            not np.array_equal(net.controls[0], obj.source.controls):
        obj.source = net.source
    value, grad = obj.value_and_grad(obj.pack(net, rigid or RigidMotion()))
    g_net = grad[:obj.n_net].reshape(obj.net_shape)
    g_rigid = grad[obj.n_net:] if problem.rigid else None
    return value, g_net, g_rigid


def _finish(obj, x, lam):
    net, rigid = obj.unpack(x)
    energy, fidelity = obj.terms(net, rigid)
    return net, rigid, energy, fidelity, energy + lam * fidelity


def solve_match(problem, init=None):
    """Solve ``problem`` over its multigrid schedule.

    Each level starts from the previous level's optimal path re-fitted onto
    the finer bases (the first from the constant path, or from ``init``, a
    ``(net, rigid)`` pair).
    """
    start = time.perf_counter()
    p = problem
    iterations, gnorms, fvals = [], [], []
    status = CONVERGED
    net = rigid = None
    if init is not None:
        net, rigid = init
    for level, (n_t, n_th, n_p) in enumerate(p.settings.levels):
        obj = LevelObjective(p, n_t, n_th, n_p)
        x_const = obj.pack(obj.constant_net(), obj.initial_rigid())
        g_ref = None
        if net is None:
            x0 = x_const
        else:
            # tolerance stays relative to this level's constant-path gradient
            g_ref = float(np.linalg.norm(obj.value_and_grad(x_const)[1]))
            fine = refit_net(net, obj.basis_t, obj.basis_theta)
            # carry the source detail missing from the coarse level along the
            # whole path so that it adds no velocity
            controls = fine.controls + (obj.source.controls - fine.controls[0])
            fine = fine.with_controls(controls)
            obj.build_preconditioner(fine)
            x0 = obj.pack(fine, rigid)
        try:
            res = lbfgs_minimize(obj.value_and_grad, x0, p.settings,
                                 precondition=obj.precondition, g_ref=g_ref)
        except Exception as exc:
            raise OptimizationFailed(f"level {level} {(n_t, n_th, n_p)}: {exc}",
                                     level) from exc
        log.debug("level %d %s: %d iterations, f=%.6g, status=%s",
                  level, (n_t, n_th, n_p), res.iterations, res.f, res.status)
        iterations.append(res.iterations)
        gnorms.append(res.history_gnorm)
        fvals.append(res.history_f)
        if res.status != CONVERGED:
            status = res.status
        net, rigid = obj.unpack(res.x)
    net, rigid, energy, fidelity, objective = _finish(obj, res.x, p.lam)
    return MatchResult(
        net=net, rigid=rigid, energy=energy, fidelity=fidelity, objective=objective,
        geodesic_distance=path_length(net, p.coeffs), iterations=iterations,
        gnorm_history=gnorms, objective_history=fvals, status=status,
        wall_time=time.perf_counter() - start, lam=p.lam)


def evaluate(problem, net, rigid=None):
    """Re-evaluate ``(energy, fidelity, objective)`` of a stored solution."""
    n_t, n_th = net.shape
    obj = LevelObjective(problem, n_t, n_th, problem.resolution[2])
    energy, fidelity = obj.terms(net, rigid or RigidMotion())
    return energy, fidelity, energy + problem.lam * fidelity


def geodesic_snapshots(result, times):
    """Curves of the optimal path at the given times."""
    net = result.net if isinstance(result, MatchResult) else result
    return [net.curve_at(float(t)) for t in times]
