"""Geodesic matching of unparametrized closed plane curves.

Paths of curves are tensor-product splines; the path energy comes from a
second order Sobolev metric and the endpoint is tied to the target by a
kernel varifold distance.  On top of single matches the package offers
distance matrices, spectral clustering, Karcher means and tangent PCA.
"""
from .errors import (CurveMatchError, DegenerateCurve, DisconnectedGraph,
                     NonFiniteValue, OptimizationFailed, RankDeficient, ZeroEdge)
from .matching import (MatchConfig, MatchProblem, MatchResult, RigidMotion,
                       geodesic_snapshots, objective_and_gradient, solve_match)
from .optimize import OptimizerSettings, lbfgs_minimize
from .sobolev import (MetricCoefficients, metric_inner, path_energy,
                      path_energy_gradient, path_length)
from .splines import (PathControlNet, SplineCurve, eval_curve, fit_spline,
                      make_bases)
from .stats import (distance_matrix, karcher_mean, log_map,
                    principal_geodesic_endpoints, spectral_cluster, tangent_pca)
from .varifold import (PolygonalCurve, VarifoldKernel, sample_polygon,
                       varifold_dist_sq, varifold_grad, varifold_inner)

__version__ = "0.1.0"
