"""File formats: curve files, run configurations, results and SVG figures.

Curve file (JSON)::

    {"name": "star_03", "points": [[x, y], ...]}

An optional ``"parametrization": "uniform"`` entry marks points that are
already spline samples at equispaced parameters; those are fitted without
arc-length resampling, which makes export and re-import lossless.

Floats are written with ``repr`` in JSON (shortest round-trip form) and with
``%.17g`` in CSV, so outputs are byte-identical across repeated runs.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .matching import MatchConfig
from .optimize import OptimizerSettings
from .sobolev import MetricCoefficients
from .splines import fit_spline
from .varifold import VarifoldKernel

log = logging.getLogger(__name__)

MIN_CURVE_POINTS = 8


class DataError(ValueError):
    """A data or configuration file is malformed; the message names the file."""


# --------------------------------------------------------------------------
# curves


@dataclass
class CurveFile:
    name: str
    points: np.ndarray
    uniform: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"points must be a list of [x, y] pairs, got shape {pts.shape}")
        if len(pts) > 1 and np.array_equal(pts[0], pts[-1]):
            pts = pts[:-1]
        if len(pts) < MIN_CURVE_POINTS:
            raise ValueError(f"need at least {MIN_CURVE_POINTS} points, got {len(pts)}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite coordinates")
        self.points = pts

    def to_dict(self):
        d = {"name": self.name, "points": self.points.tolist()}
        if self.uniform:
            d["parametrization"] = "uniform"
        return d

    @classmethod
    def from_dict(cls, d):
        param = d.get("parametrization", "arclength")
        if param not in ("arclength", "uniform"):
            raise ValueError(f"unknown parametrization {param!r}")
        return cls(str(d["name"]), d["points"], uniform=param == "uniform")

    def fit(self, n_theta):
        return fit_spline(self.points, n_theta, resample=not self.uniform)


def read_curve(path):
    path = Path(path)
    try:
        with open(path) as fh:
            return CurveFile.from_dict(json.load(fh))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1) + "\n")


def write_curve(path, curve_file):
    write_json(path, curve_file.to_dict())


def export_curve(curve, name, n_points=None):
    """Curve file holding equispaced samples of a spline curve."""
    n = n_points or 8 * curve.n_controls
    return CurveFile(name, curve.samples(n), uniform=True)


@dataclass
class Dataset:
    names: list
    curves: list
    files: list = field(default_factory=list)

    def __len__(self):
        return len(self.curves)


def _dataset_files(path):
    path = Path(path)
    if path.is_dir():
        manifest = path / "manifest.json"
        if manifest.exists():
            return _dataset_files(manifest)
        return sorted(p for p in path.glob("*.json") if p.name != "manifest.json")
    try:
        with open(path) as fh:
            entries = json.load(fh)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    if isinstance(entries, dict):
        entries = entries.get("curves", [])
    return [path.parent / e for e in entries]


def load_dataset(path, n_theta):
    """Fit every curve file of a directory or manifest at ``n_theta`` controls.

    A manifest is a JSON list of curve file paths (or ``{"curves": [...]}``),
    relative to the manifest.  A directory is read through its
    ``manifest.json`` when present, otherwise all ``*.json`` files in name
    order.
    """
    files = _dataset_files(path)
    if not files:
        raise DataError(f"{path}: dataset is empty")
    names, curves = [], []
    for f in files:
        cf = read_curve(f)
        try:
            curve = cf.fit(n_theta)
        except ValueError as exc:
            raise DataError(f"{f}: {exc}") from exc
        log.info("%s: %d points, fit residual %.3g", cf.name, len(cf.points), curve.fit_rms)
        names.append(cf.name)
        curves.append(curve)
    return Dataset(names, curves, files)


# --------------------------------------------------------------------------
# configuration


_SECTIONS = ("metric", "kernel", "lambda", "discretization", "optimizer", "multigrid",
             "rigid", "seed", "cluster", "pca")
_OPTIMIZER_KEYS = ("memory", "max_iterations", "g_tol", "f_tol", "c1", "c2",
                   "max_linesearch")


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise DataError(f"{where}: expected an object, got {type(d).__name__}")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise DataError(f"{where}: unknown keys {unknown}")


@dataclass(frozen=True)
class RunConfig:
    """Every numerical parameter of a run.

    ``discretization`` is the working resolution ``(N_t, N_theta, P)`` and
    ``multigrid`` lists the coarser levels solved before it.
    """

    coeffs: MetricCoefficients = MetricCoefficients()
    kernel: VarifoldKernel = VarifoldKernel()
    lam: float = 5.0
    discretization: tuple = (10, 40, 100)
    optimizer: dict = field(default_factory=dict)
    multigrid: tuple = ((5, 20, 50),)
    rigid: bool = False
    seed: int = 0
    cluster_p: int = 12
    cluster_k: int = 3
    pca_components: int = 2

    def __post_init__(self):
        # building the match configuration runs every validation once
        self.match_config()
        if self.cluster_p < 1 or self.cluster_k < 1 or self.pca_components < 1:
            raise ValueError("cluster p, k and pca components must be positive")

    @property
    def n_theta(self):
        return self.discretization[1]

    @property
    def levels(self):
        return tuple(tuple(lv) for lv in self.multigrid) + (tuple(self.discretization),)

    def settings(self):
        return OptimizerSettings(levels=self.levels, **self.optimizer)

    def match_config(self):
        return MatchConfig(self.coeffs, self.kernel, self.lam, self.rigid, self.settings())

    def to_dict(self):
        opt = OptimizerSettings(**self.optimizer).as_dict()
        n_t, n_th, n_p = self.discretization
        return {
            "metric": self.coeffs.as_dict(),
            "kernel": self.kernel.as_dict(),
            "lambda": self.lam,
            "discretization": {"n_time": n_t, "n_theta": n_th, "n_samples": n_p},
            "optimizer": opt,
            "multigrid": [list(lv) for lv in self.multigrid],
            "rigid": self.rigid,
            "seed": self.seed,
            "cluster": {"p": self.cluster_p, "k": self.cluster_k},
            "pca": {"components": self.pca_components},
        }

    @classmethod
    def from_dict(cls, d, where="config"):
        _check_keys(d, _SECTIONS, where)
        kw = {}
        try:
            if "metric" in d:
                _check_keys(d["metric"], ("a0", "a1", "a2"), f"{where}.metric")
                kw["coeffs"] = MetricCoefficients(**{k: float(v) for k, v in d["metric"].items()})
            if "kernel" in d:
                _check_keys(d["kernel"], ("rho", "gamma"), f"{where}.kernel")
                k = d["kernel"]
                rho = k.get("rho", {"name": "gaussian"})
                gamma = k.get("gamma", {"name": "linear"})
                _check_keys(rho, ("name", "sigma"), f"{where}.kernel.rho")
                _check_keys(gamma, ("name",), f"{where}.kernel.gamma")
                kw["kernel"] = VarifoldKernel.from_dict({"rho": rho, "gamma": gamma})
            if "lambda" in d:
                kw["lam"] = float(d["lambda"])
            if "discretization" in d:
                disc = d["discretization"]
                _check_keys(disc, ("n_time", "n_theta", "n_samples"),
                            f"{where}.discretization")
                default = cls.discretization
                kw["discretization"] = (int(disc.get("n_time", default[0])),
                                        int(disc.get("n_theta", default[1])),
                                        int(disc.get("n_samples", default[2])))
            if "optimizer" in d:
                _check_keys(d["optimizer"], _OPTIMIZER_KEYS, f"{where}.optimizer")
                kw["optimizer"] = dict(d["optimizer"])
            if "multigrid" in d:
                kw["multigrid"] = tuple(tuple(int(v) for v in lv) for lv in d["multigrid"])
            if "rigid" in d:
                if not isinstance(d["rigid"], bool):
                    raise ValueError("rigid must be true or false")
                kw["rigid"] = d["rigid"]
            if "seed" in d:
                kw["seed"] = int(d["seed"])
            if "cluster" in d:
                _check_keys(d["cluster"], ("p", "k"), f"{where}.cluster")
                kw["cluster_p"] = int(d["cluster"].get("p", cls.cluster_p))
                kw["cluster_k"] = int(d["cluster"].get("k", cls.cluster_k))
            if "pca" in d:
                _check_keys(d["pca"], ("components",), f"{where}.pca")
                kw["pca_components"] = int(d["pca"].get("components", cls.pca_components))
            return cls(**kw)
        except DataError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise DataError(f"{where}: {exc}") from exc

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, ValueError) as exc:
            raise DataError(f"{path}: {exc}") from exc
        return cls.from_dict(d, where=str(path))


# --------------------------------------------------------------------------
# tables


def fmt(x):
    return "%.17g" % x


def write_matrix_csv(path, names, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", *names])
        for name, row in zip(names, np.asarray(values)):
            w.writerow([name, *map(fmt, row)])


def read_matrix_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        names = rows[0][1:]
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    except (OSError, ValueError, IndexError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    if values.shape != (len(names), len(names)):
        raise DataError(f"{path}: matrix is {values.shape}, header lists {len(names)} names")
    return names, values


def write_table_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


# --------------------------------------------------------------------------
# SVG


_SNAPSHOT_COLOR = "#444444"
_TARGET_COLOR = "#1f4fd8"


def _svg_path(points, color, width, opacity=1.0):
    pts = np.asarray(points)
    d = "M " + " L ".join(f"{x:.4f} {y:.4f}" for x, y in pts) + " Z"
    return (f'<path d="{d}" fill="none" stroke="{color}" stroke-width="{width:.4g}" '
            f'stroke-opacity="{opacity:.3g}"/>')


def svg_curves(curves, colors, opacities=None, size=400, n_points=200):
    """SVG document drawing each curve as one closed ``path`` element."""
    polys = [c.samples(n_points) if hasattr(c, "samples") else np.asarray(c)
             for c in curves]
    allpts = np.vstack(polys)
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    pad = 0.05 * span
    scale = size / (span + 2 * pad)
    opacities = opacities or [1.0] * len(polys)
    elems = []
    for poly, color, op in zip(polys, colors, opacities):
        x = (poly[:, 0] - lo[0] + pad) * scale
        y = (hi[1] + pad - poly[:, 1]) * scale   # flip so that y points up
        elems.append(_svg_path(np.column_stack([x, y]), color, 1.5, op))
    width = math.ceil((hi[0] - lo[0] + 2 * pad) * scale)
    height = math.ceil((hi[1] - lo[1] + 2 * pad) * scale)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n' + "\n".join(elems) + "\n</svg>\n")


def svg_geodesic(snapshots, target):
    """Snapshots in grey (darker later in time) and the target in blue."""
    n = len(snapshots)
    ops = [0.3 + 0.7 * i / max(n - 1, 1) for i in range(n)]
    return svg_curves(list(snapshots) + [target],
                      [_SNAPSHOT_COLOR] * n + [_TARGET_COLOR], ops + [1.0])
