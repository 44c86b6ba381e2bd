import numpy as np
import pytest

from curvematch.errors import DegenerateCurve
from curvematch.matching import (MatchConfig, MatchProblem, RigidMotion, evaluate,
                                 geodesic_snapshots, objective_and_gradient,
                                 rotation_matrix, solve_match)
from curvematch.sobolev import MetricCoefficients, path_energy
from curvematch.splines import PathControlNet, SplineCurve, fit_spline
from curvematch.synthetic import shape_classes
from curvematch.varifold import VarifoldKernel

from conftest import circle_spline, fd_gradient, random_curve, random_net, rel_error

SMALL = ((4, 12, 30),)


@pytest.fixture(scope="module")
def shapes():
    _, polys, _ = shape_classes(2, seed=0)
    return [fit_spline(p, 40) for p in polys]


def small_problem(rng, rigid=False, lam=2.0):
    src, tgt = random_curve(rng, 12), random_curve(rng, 12)
    return MatchProblem(src, tgt, MetricCoefficients(1.0, 0.5, 0.3),
                        VarifoldKernel("gaussian", 0.6), lam, rigid).with_levels(*SMALL)


def test_rigid_motion_roundtrip(rng):
    m = RigidMotion(0.7, (1.0, -2.0))
    pts = rng.normal(size=(5, 2))
    np.testing.assert_allclose(m.inverse().apply(m.apply(pts)), pts, atol=1e-14)
    assert RigidMotion.from_array(m.as_array()) == m
    A = rotation_matrix(0.3)
    np.testing.assert_allclose(A.T @ A, np.eye(2), atol=1e-15)
    assert np.linalg.det(A) == pytest.approx(1.0)


def test_problem_validation():
    c = circle_spline(12)
    with pytest.raises(ValueError):
        MatchProblem(c, c, lam=0.0)
    with pytest.raises(ValueError):
        MatchConfig(lam=-1.0)
    assert MatchProblem(c, c).kernel.sigma == pytest.approx(0.5, rel=1e-2)


# ---------------------------------------------------------------- objective

def test_identical_curves_objective_zero():
    c = circle_spline(40)
    p = MatchProblem(c, c)
    value, g_net, g_rigid = objective_and_gradient(p, PathControlNet.constant(c, 10),
                                                   RigidMotion())
    assert abs(value) < 1e-12
    assert np.abs(g_net).max() < 1e-10
    assert g_rigid is None


@pytest.mark.parametrize("rigid", [False, True])
def test_objective_gradient_matches_finite_differences(rng, rigid):
    for _ in range(3):
        p = small_problem(rng, rigid)
        net = random_net(rng, 4, 12)
        net = net.with_controls(np.concatenate([p.source.controls[None], net.controls[1:]]))
        motion = RigidMotion(0.2, (0.1, -0.1))
        value, g_net, g_rigid = objective_and_gradient(p, net, motion)
        shape = net.controls[1:].shape

        def f(x):
            n = net.with_controls(np.concatenate([net.controls[:1],
                                                  x[:g_net.size].reshape(shape)]))
            m = RigidMotion.from_array(x[g_net.size:]) if rigid else motion
            return objective_and_gradient(p, n, m)[0]

        x0 = net.controls[1:].ravel()
        g = g_net.ravel()
        if rigid:
            x0 = np.concatenate([x0, motion.as_array()])
            g = np.concatenate([g, g_rigid])
        assert rel_error(fd_gradient(f, x0), g) < 1e-4
        if rigid:
            assert rel_error(fd_gradient(f, x0)[-3:], g_rigid) < 1e-4


def test_doubling_lambda_doubles_fidelity_part(rng):
    p = small_problem(rng)
    net = PathControlNet.constant(p.source, 4)
    e1, f1, o1 = evaluate(p, net)
    p2 = MatchProblem(p.source, p.target, p.coeffs, p.kernel, 2 * p.lam, False, p.settings)
    e2, f2, o2 = evaluate(p2, net)
    assert e1 == e2 and f1 == f2
    assert o2 - e2 == 2 * (o1 - e1)


def test_degenerate_net_raises():
    ctrl = np.zeros((8, 2))
    ctrl[0] = [1.0, 0.0]
    cusp = SplineCurve.from_controls(ctrl)
    p = MatchProblem(cusp, circle_spline(8), kernel=VarifoldKernel(sigma=0.5))
    with pytest.raises(DegenerateCurve):
        objective_and_gradient(p, PathControlNet.constant(cusp, 4))


# ---------------------------------------------------------------- solver

def test_identical_curves_converge_immediately():
    c = circle_spline(40)
    r = solve_match(MatchProblem(c, c))
    assert r.objective < 1e-8
    assert r.energy < 1e-8 and r.fidelity < 1e-8
    assert max(r.iterations) <= 1


def test_translated_circle_rigid():
    src = circle_spline(40)
    tgt = circle_spline(40, center=(3.0, 0.0))
    r = solve_match(MatchProblem(src, tgt, rigid=True))
    assert r.objective < 1e-6
    # the fitted motion acts on the target; its inverse maps source to target
    np.testing.assert_allclose(r.rigid.inverse().b, [3.0, 0.0], atol=1e-3)


def test_radius_two_circle_against_fine_reference():
    src, tgt = circle_spline(40), circle_spline(40, 2.0)
    p = MatchProblem(src, tgt)
    r = solve_match(p)
    ref = solve_match(MatchProblem(circle_spline(80), circle_spline(80, 2.0),
                                   kernel=p.kernel).with_levels((20, 80, 200)))
    assert r.converged and ref.converged
    assert r.energy == pytest.approx(ref.energy, rel=0.02)


def test_result_consistency(shapes):
    p = MatchProblem(shapes[0], shapes[2])
    r = solve_match(p)
    assert r.objective == pytest.approx(r.energy + p.lam * r.fidelity, rel=1e-14)
    for hist in r.objective_history:
        assert np.all(np.diff(hist) <= 0)
    assert r.geodesic_distance ** 2 <= r.energy + 1e-12
    assert r.energy == pytest.approx(path_energy(r.net, p.coeffs).energy, rel=1e-14)
    np.testing.assert_array_equal(r.net.controls[0], shapes[0].controls)
    assert evaluate(p, r.net, r.rigid)[2] == r.objective


def test_lambda_monotonicity(shapes):
    runs = [solve_match(MatchProblem(shapes[1], shapes[3], lam=lam)) for lam in (0.3, 1, 5)]
    assert all(r.converged for r in runs)
    fid = [r.fidelity for r in runs]
    energy = [r.energy for r in runs]
    obj = [r.objective for r in runs]
    assert fid[0] > fid[1] > fid[2]
    assert energy[0] <= energy[1] <= energy[2]
    assert obj[0] <= obj[1] <= obj[2]


def test_rigid_equivariance(shapes):
    src, tgt = shapes[0], shapes[4]
    kernel = VarifoldKernel().resolved([src, tgt])
    A, b = rotation_matrix(0.9), np.array([2.0, -5.0])
    r = solve_match(MatchProblem(src, tgt, kernel=kernel))
    moved = solve_match(MatchProblem(src.transformed(A, b), tgt.transformed(A, b),
                                     kernel=kernel))
    assert moved.objective == pytest.approx(r.objective, rel=1e-6)


def test_multigrid_agrees_with_single_level(shapes):
    p = MatchProblem(shapes[0], shapes[2])
    multi = solve_match(p)
    single = solve_match(p.with_levels(p.resolution))
    assert multi.objective == pytest.approx(single.objective, rel=1e-2)
    assert multi.iterations[-1] < single.iterations[-1]


def test_warm_start_from_previous_solution(shapes):
    p = MatchProblem(shapes[0], shapes[2]).with_levels((10, 40, 100))
    r = solve_match(p)
    again = solve_match(p, init=(r.net, r.rigid))
    assert again.objective <= r.objective * (1 + 1e-10)
    assert again.iterations[0] <= 2


# ---------------------------------------------------------------- snapshots

def test_snapshots(shapes):
    r = solve_match(MatchProblem(shapes[0], shapes[2]).with_levels((10, 40, 100)))
    snaps = geodesic_snapshots(r, [0.0, 0.3, 0.6, 1.0])
    assert len(snaps) == 4
    np.testing.assert_array_equal(snaps[0].controls, shapes[0].controls)
    np.testing.assert_array_equal(snaps[-1].controls, r.net.controls[-1])
    const = PathControlNet.constant(shapes[0], 10)
    for s in geodesic_snapshots(const, [0.25, 0.8]):
        np.testing.assert_allclose(s.controls, shapes[0].controls, atol=1e-14)
