import numpy as np
import pytest

from curvematch.splines import SplineBasisTheta, SplineCurve, fit_spline

TWO_PI = 2 * np.pi


def circle_points(n, radius=1.0, center=(0.0, 0.0)):
    th = TWO_PI * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(th),
                            center[1] + radius * np.sin(th)])


def circle_spline(n_controls=40, radius=1.0, center=(0.0, 0.0)):
    """Least-squares spline through densely sampled, uniformly parametrized circle."""
    return fit_spline(circle_points(16 * n_controls, radius, center), n_controls,
                      resample=False)


def random_curve(rng, n_controls=12, amplitude=0.15):
    """Star-shaped random curve: a circle with random low-frequency radius."""
    th = TWO_PI * np.arange(n_controls) / n_controls
    r = 1.0 + amplitude * rng.standard_normal(n_controls)
    ctrl = np.column_stack([r * np.cos(th), r * np.sin(th)])
    return SplineCurve(SplineBasisTheta(n_controls), ctrl + rng.normal(size=2))


def cardinal_cubic(u, deriv=0):
    """Cubic cardinal B-spline supported on ``[0, 4]`` (explicit pieces)."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pieces = [
        (0, 1, [lambda x: x ** 3 / 6, lambda x: x ** 2 / 2, lambda x: x]),
        (1, 2, [lambda x: (-3 * x ** 3 + 12 * x ** 2 - 12 * x + 4) / 6,
                lambda x: (-9 * x ** 2 + 24 * x - 12) / 6,
                lambda x: (-18 * x + 24) / 6]),
        (2, 3, [lambda x: (3 * x ** 3 - 24 * x ** 2 + 60 * x - 44) / 6,
                lambda x: (9 * x ** 2 - 48 * x + 60) / 6,
                lambda x: (18 * x - 48) / 6]),
        (3, 4, [lambda x: (4 - x) ** 3 / 6, lambda x: -(4 - x) ** 2 / 2,
                lambda x: (4 - x)]),
    ]
    for lo, hi, fs in pieces:
        m = (u >= lo) & (u < hi)
        out[m] = fs[deriv](u[m])
    return out


def naive_periodic_design(n, theta, deriv=0):
    """Periodic cubic basis with function ``j`` centred at ``2*pi*j/n``."""
    h = TWO_PI / n
    theta = np.asarray(theta, dtype=float)
    M = np.zeros((len(theta), n))
    for j in range(n):
        for wrap in (-1, 0, 1):
            u = (theta - j * h - wrap * TWO_PI) / h + 2
            M[:, j] += cardinal_cubic(u, deriv) / h ** deriv
    return M


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fd_gradient(f, x, step=1e-6):
    """Central finite differences of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e.flat[k] = step
        g.flat[k] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def rel_error(a, b):
    return float(np.abs(np.asarray(a) - np.asarray(b)).max() / np.abs(b).max())


def random_net(rng, n_time=5, n_theta=12, scale=0.1):
    from curvematch.splines import PathControlNet, SplineBasisTime
    c = random_curve(rng, n_theta)
    ctrl = c.controls[None] + scale * rng.normal(size=(n_time, n_theta, 2))
    ctrl[0] = c.controls
    return PathControlNet(SplineBasisTime(n_time), c.basis, ctrl)
