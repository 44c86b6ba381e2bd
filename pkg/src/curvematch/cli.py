"""Command line interface: ``curvematch <command> [options]``.

Commands
--------
match SOURCE TARGET   geodesic between two curve files (JSON + SVG)
matrix DATASET        pairwise distance matrix (CSV + flags, resumable)
cluster MATRIX        spectral clustering of a distance matrix CSV
mean DATASET          Karcher mean of a dataset
pca DATASET           tangent PCA at the Karcher mean
gen-synthetic         write a synthetic dataset with labels

Exit status is 0 on success, 1 on invalid input or a failed computation and
2 when the optimizer stopped without meeting its convergence criterion.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io, stats, synthetic
from .errors import CurveMatchError
from .matching import RigidMotion, evaluate, geodesic_snapshots, solve_match
from .splines import PathControlNet, SplineBasisTheta, SplineCurve, make_bases

log = logging.getLogger("curvematch")

SNAPSHOT_TIMES = (0.0, 0.3, 0.6, 1.0)
EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
JOBS_ENV = "CURVEMATCH_JOBS"


def _controls(curve):
    return np.asarray(curve.controls).tolist()


def _out_dir(out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo(cfg, match_config):
    """Config dict with the kernel width actually used."""
    d = cfg.to_dict()
    d["kernel"] = match_config.kernel.as_dict()
    return d


# --------------------------------------------------------------------------
# match


def cmd_match(source, target, cfg, out):
    out = _out_dir(out)
    src_file, tgt_file = io.read_curve(source), io.read_curve(target)
    c0, c1 = src_file.fit(cfg.n_theta), tgt_file.fit(cfg.n_theta)
    mc = cfg.match_config().resolved([c0, c1])
    result = solve_match(mc.problem(c0, c1))
    snaps = geodesic_snapshots(result, SNAPSHOT_TIMES)
    doc = {
        "config": _echo(cfg, mc),
        "source": {"name": src_file.name, "controls": _controls(c0)},
        "target": {"name": tgt_file.name, "controls": _controls(c1)},
        "net": np.asarray(result.net.controls).tolist(),
        "rigid": {"angle": result.rigid.angle,
                  "translation": list(result.rigid.translation)},
        "energy": result.energy,
        "fidelity": result.fidelity,
        "objective": result.objective,
        "distance": result.geodesic_distance,
        "status": result.status,
        "iterations": result.iterations,
        "snapshots": [{"t": t, "controls": _controls(c)}
                      for t, c in zip(SNAPSHOT_TIMES, snaps)],
    }
    io.write_json(out / "geodesic.json", doc)
    target_drawn = result.rigid.apply(c1.samples(200)) if cfg.rigid else c1
    (out / "geodesic.svg").write_text(io.svg_geodesic(snaps, target_drawn))
    log.info("distance %.6g, objective %.6g (%s)", result.geodesic_distance,
             result.objective, result.status)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def load_geodesic(path):
    """Rebuild ``(problem, net, rigid)`` from a geodesic JSON file."""
    with open(path) as fh:
        doc = json.load(fh)
    cfg = io.RunConfig.from_dict(doc["config"])
    src = SplineCurve(SplineBasisTheta(cfg.n_theta), doc["source"]["controls"])
    tgt = SplineCurve(SplineBasisTheta(cfg.n_theta), doc["target"]["controls"])
    net_ctrl = np.asarray(doc["net"], dtype=float)
    basis_t, basis_theta = make_bases(net_ctrl.shape[0], net_ctrl.shape[1])
    net = PathControlNet(basis_t, basis_theta, net_ctrl)
    rigid = RigidMotion(doc["rigid"]["angle"], tuple(doc["rigid"]["translation"]))
    return cfg.match_config().problem(src, tgt), net, rigid


def reevaluate(path):
    """``(energy, fidelity, objective)`` recomputed from a geodesic file."""
    problem, net, rigid = load_geodesic(path)
    return evaluate(problem, net, rigid)


# --------------------------------------------------------------------------
# matrix


def _read_checkpoint(path, header):
    done = {}
    if not path.exists():
        return done
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        return done
    try:
        first = json.loads(lines[0])
    except ValueError as exc:
        raise io.DataError(f"{path}: {exc}") from exc
    if first != header:
        raise io.DataError(f"{path}: checkpoint belongs to a different dataset or "
                           "configuration; remove it to start over")
    for ln in lines[1:]:
        try:
            e = json.loads(ln)
        except ValueError:
            # a line cut short by an interruption
            log.warning("ignoring truncated checkpoint line")
            continue
        done[(e["i"], e["j"])] = (e["distance"], e["status"])
    return done


def cmd_matrix(dataset, cfg, out, jobs=1):
    out = _out_dir(out)
    data = io.load_dataset(dataset, cfg.n_theta)
    mc = cfg.match_config().resolved(data.curves)
    header = {"config": _echo(cfg, mc), "names": data.names}
    ckpt = out / "checkpoint.jsonl"
    done = _read_checkpoint(ckpt, header)
    if done:
        log.info("resuming: %d entries found in %s", len(done), ckpt)
    else:
        with open(ckpt, "w") as fh:
            fh.write(json.dumps(header) + "\n")

    def on_entry(i, j, d, st):
        with open(ckpt, "a") as fh:
            fh.write(json.dumps({"i": int(i), "j": int(j), "distance": d,
                                 "status": st}) + "\n")

    D = stats.distance_matrix(data.curves, mc, data.names, jobs=jobs, completed=done,
                              on_entry=on_entry)
    io.write_matrix_csv(out / "distances.csv", D.names, D.values)
    io.write_json(out / "flags.json", {
        "config": header["config"], "names": D.names,
        "status": D.status, "converged": D.converged.tolist(),
        "raw": D.raw.tolist(),
        "max_asymmetry": float(D.asymmetry().max()),
    })
    return EXIT_OK if D.converged.all() else EXIT_NOT_CONVERGED


# --------------------------------------------------------------------------
# cluster


def cmd_cluster(matrix, cfg, out, p=None, k=None, seed=None):
    out = _out_dir(out)
    names, values = io.read_matrix_csv(matrix)
    p = cfg.cluster_p if p is None else p
    k = cfg.cluster_k if k is None else k
    seed = cfg.seed if seed is None else seed
    res = stats.spectral_cluster(values, p=p, k=k, seed=seed)
    io.write_table_csv(out / "labels.csv", ["name", "label"],
                       [(n, int(lab)) for n, lab in zip(names, res.labels)])
    io.write_json(out / "clusters.json", {
        "config": {"p": p, "k": k, "seed": seed},
        "names": names,
        "labels": res.labels.tolist(),
        "eigenvalues": res.eigenvalues.tolist(),
        "embedding": res.embedding.tolist(),
    })
    return EXIT_OK


# --------------------------------------------------------------------------
# mean and pca


def _mean(data, cfg):
    mc = cfg.match_config().resolved(data.curves)
    return mc, stats.karcher_mean(data.curves, mc)


def cmd_mean(dataset, cfg, out):
    out = _out_dir(out)
    data = io.load_dataset(dataset, cfg.n_theta)
    mc, res = _mean(data, cfg)
    io.write_json(out / "mean.json", {
        "config": _echo(cfg, mc),
        "names": data.names,
        "mean": _controls(res.mean),
        "distances": res.distances.tolist(),
        "objective": res.objective,
        "iterations": res.iterations,
        "status": res.status,
    })
    io.write_curve(out / "mean_curve.json", io.export_curve(res.mean, "mean"))
    colors = ["#999999"] * len(data) + ["#1f4fd8"]
    (out / "mean.svg").write_text(io.svg_curves(data.curves + [res.mean], colors,
                                                [0.5] * len(data) + [1.0]))
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_pca(dataset, cfg, out):
    out = _out_dir(out)
    data = io.load_dataset(dataset, cfg.n_theta)
    mc, mean = _mean(data, cfg)
    vectors = [stats.log_map(net) for net in mean.nets]
    pca = stats.tangent_pca(mean.mean, vectors, mc.coeffs)
    n_comp = min(cfg.pca_components, len(pca.directions))
    rows = [(name, *map(float, s[:n_comp])) for name, s in zip(data.names, pca.scores)]
    io.write_table_csv(out / "scores.csv",
                       ["name"] + [f"pc{m + 1}" for m in range(n_comp)], rows)
    curves, colors = [mean.mean], ["#000000"]
    palette = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd"]
    amplitudes = {}
    for m in range(n_comp):
        sd = float(np.sqrt(max(pca.eigenvalues[m], 0.0)))
        amps = [-2 * sd, -sd, sd, 2 * sd]
        amplitudes[m] = amps
        curves += stats.principal_geodesic_endpoints(pca, m, amps)
        colors += [palette[m % len(palette)]] * len(amps)
    (out / "pca.svg").write_text(io.svg_curves(curves, colors))
    io.write_json(out / "pca.json", {
        "config": _echo(cfg, mc),
        "names": data.names,
        "mean": _controls(mean.mean),
        "mean_status": mean.status,
        "eigenvalues": pca.eigenvalues.tolist(),
        "gram_eigenvalues": pca.gram_eigenvalues.tolist(),
        "explained": pca.explained.tolist(),
        "directions": [d.coefficients.tolist() for d in pca.directions[:n_comp]],
        "amplitudes": [amplitudes[m] for m in range(n_comp)],
    })
    return EXIT_OK if mean.converged else EXIT_NOT_CONVERGED


# --------------------------------------------------------------------------
# synthetic data


def cmd_gen_synthetic(out, kind="classes", n=12, seed=0, n_points=200):
    out = _out_dir(out)
    if kind == "classes":
        names, polys, labels = synthetic.shape_classes(n, seed=seed, n_points=n_points)
        io.write_table_csv(out / "labels.csv", ["name", "label", "class"],
                           [(nm, int(lab), synthetic.CLASS_NAMES[lab])
                            for nm, lab in zip(names, labels)])
    elif kind == "wings":
        names, polys, params = synthetic.wing_like(n, seed=seed, n_points=n_points)
        io.write_table_csv(out / "params.csv", ["name", "thickness", "notch"],
                           [(nm, float(a), float(b)) for nm, (a, b) in zip(names, params)])
    else:
        raise ValueError(f"unknown synthetic dataset {kind!r}")
    files = []
    for name, poly in zip(names, polys):
        fname = f"{name}.json"
        io.write_curve(out / fname, io.CurveFile(name, poly))
        files.append(fname)
    io.write_json(out / "manifest.json", files)
    return EXIT_OK


# --------------------------------------------------------------------------
# argument handling


def resolve_jobs(flag, environ=None):
    """``--jobs`` if given, else ``CURVEMATCH_JOBS``, else 1."""
    environ = os.environ if environ is None else environ
    if flag is not None:
        jobs = flag
    elif environ.get(JOBS_ENV, "").strip():
        try:
            jobs = int(environ[JOBS_ENV])
        except ValueError:
            raise ValueError(f"{JOBS_ENV} must be an integer, got {environ[JOBS_ENV]!r}")
    else:
        jobs = 1
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    return jobs


def load_config(args):
    cfg = io.RunConfig.load(args.config) if args.config else io.RunConfig()
    overrides = {}
    if args.lam is not None:
        overrides["lam"] = args.lam
    if args.seed is not None:
        overrides["seed"] = args.seed
    return replace(cfg, **overrides) if overrides else cfg


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON file")
    common.add_argument("--lambda", dest="lam", type=float,
                        help="fidelity weight (overrides the configuration)")
    common.add_argument("--out", default=".", help="output directory (default: .)")
    common.add_argument("--jobs", type=int, default=None,
                        help=f"worker processes (default: ${JOBS_ENV} or 1)")
    common.add_argument("--seed", type=int, default=None,
                        help="random seed (overrides the configuration)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(
        prog="curvematch",
        description="Geodesic matching and shape statistics for closed plane curves.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("match", parents=[common], help="geodesic between two curves")
    p.add_argument("source")
    p.add_argument("target")
    p = sub.add_parser("matrix", parents=[common], help="pairwise distance matrix")
    p.add_argument("dataset", help="directory of curve files or a manifest")
    p = sub.add_parser("cluster", parents=[common], help="spectral clustering")
    p.add_argument("matrix", help="distance matrix CSV written by 'matrix'")
    p.add_argument("--p", type=int, default=None, help="neighbours per node")
    p.add_argument("--k", type=int, default=None, help="number of clusters")
    p = sub.add_parser("mean", parents=[common], help="Karcher mean")
    p.add_argument("dataset")
    p = sub.add_parser("pca", parents=[common], help="tangent PCA at the mean")
    p.add_argument("dataset")
    p = sub.add_parser("gen-synthetic", parents=[common], help="write a synthetic dataset")
    p.add_argument("--kind", choices=("classes", "wings"), default="classes")
    p.add_argument("--n", type=int, default=12,
                   help="shapes per class (classes) or in total (wings)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        jobs = resolve_jobs(args.jobs)
        cfg = load_config(args)
        if args.command == "match":
            return cmd_match(args.source, args.target, cfg, args.out)
        if args.command == "matrix":
            return cmd_matrix(args.dataset, cfg, args.out, jobs=jobs)
        if args.command == "cluster":
            return cmd_cluster(args.matrix, cfg, args.out, p=args.p, k=args.k)
        if args.command == "mean":
            return cmd_mean(args.dataset, cfg, args.out)
        if args.command == "pca":
            return cmd_pca(args.dataset, cfg, args.out)
        if args.command == "gen-synthetic":
            return cmd_gen_synthetic(args.out, args.kind, args.n, cfg.seed)
    except (CurveMatchError, ValueError, OSError) as exc:
        print(f"curvematch {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    parser.error(f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
