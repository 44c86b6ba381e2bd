"""Synthetic outline datasets with known structure.

``shape_classes`` draws ellipses, five-armed stars and rounded rectangles;
``wing_like`` draws elongated outlines varying in thickness and in the depth
of a notch at one end.  All outlines are closed polygons centred near the
origin with diameter around 2.
"""
from __future__ import annotations

import numpy as np

from .splines import TWO_PI

CLASS_NAMES = ("ellipse", "star", "rectangle")


def _perturb(theta, rng, amplitude, modes=(2, 3, 4)):
    r = np.zeros_like(theta)
    for m in modes:
        a, b = rng.normal(scale=amplitude, size=2)
        r += a * np.cos(m * theta) + b * np.sin(m * theta)
    return r


def _rotate(points, angle):
    c, s = np.cos(angle), np.sin(angle)
    return points @ np.array([[c, -s], [s, c]]).T


def ellipse(rng, n_points=200, noise=0.02):
    theta = TWO_PI * np.arange(n_points) / n_points
    a = rng.uniform(1.1, 1.3)
    b = rng.uniform(0.45, 0.6)
    r = 1.0 + _perturb(theta, rng, noise)
    return np.column_stack([a * r * np.cos(theta), b * r * np.sin(theta)])


def star(rng, n_points=200, noise=0.02, arms=5):
    theta = TWO_PI * np.arange(n_points) / n_points
    depth = rng.uniform(0.25, 0.35)
    r = 0.85 * (1.0 + depth * np.cos(arms * theta)) + _perturb(theta, rng, noise)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def rounded_rectangle(rng, n_points=200, noise=0.02, power=6.0):
    theta = TWO_PI * np.arange(n_points) / n_points
    a = rng.uniform(0.9, 1.0)
    b = rng.uniform(0.75, 0.85)
    c, s = np.cos(theta), np.sin(theta)
    # superellipse |x/a|^p + |y/b|^p = 1 in polar form
    r = (np.abs(c / a) ** power + np.abs(s / b) ** power) ** (-1.0 / power)
    r = r * (1.0 + _perturb(theta, rng, noise))
    return np.column_stack([r * c, r * s])


GENERATORS = {"ellipse": ellipse, "star": star, "rectangle": rounded_rectangle}


def shape_classes(n_per_class=12, seed=0, n_points=200, noise=0.02, max_rotation=0.1):
    """Return ``(names, polygons, labels)`` for the three-class dataset."""
    rng = np.random.default_rng(seed)
    names, polys, labels = [], [], []
    for label, cls in enumerate(CLASS_NAMES):
        for i in range(n_per_class):
            pts = GENERATORS[cls](rng, n_points, noise)
            pts = _rotate(pts, rng.uniform(-max_rotation, max_rotation))
            names.append(f"{cls}_{i:02d}")
            polys.append(pts)
            labels.append(label)
    return names, polys, np.array(labels)


def wing(thickness, notch, n_points=200, length=1.5, taper=0.25):
    """Elongated outline; ``notch`` is the depth of the fold at the tip."""
    theta = TWO_PI * np.arange(n_points) / n_points
    x = length * np.cos(theta)
    y = thickness * np.sin(theta) * (1.0 - taper * np.cos(theta))
    x = x - notch * np.exp(-(np.angle(np.exp(1j * theta)) / 0.35) ** 2)
    return np.column_stack([x, y])


def wing_like(n=20, seed=0, n_points=200):
    """Return ``(names, polygons, params)``; ``params[:, 0]`` is thickness and
    ``params[:, 1]`` the notch depth."""
    rng = np.random.default_rng(seed)
    params = np.column_stack([rng.uniform(0.35, 0.55, n), rng.uniform(0.0, 0.3, n)])
    polys = [wing(t, d, n_points) for t, d in params]
    names = [f"wing_{i:03d}" for i in range(n)]
    return names, polys, params
