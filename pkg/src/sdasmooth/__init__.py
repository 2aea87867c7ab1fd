"""Multiple-trajectory smoothing with hard data association.

k trajectories on a uniform grid are fitted to unlabeled (t, y) observations
by alternating nearest-trajectory assignment and penalized spline smoothing.
"""
__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .population import (
    GateauxForm,
    QuadratureSpec,
    gateaux_derivative,
    objective_population,
    yn_statistic,
)
from .smoother import SmootherConfig, WeightedPoints, fit_single, polynomial_limit_fit
from .solver import Dataset, SolveReport, assign, iterate, lloyd_step, objective_empirical, solve
from .synth import MixtureModel, NoiseSpec, TimeSpec, default_scenario, make_model, sample
from .trajectory import (
    GridTrajectory,
    SobolevNorms,
    TrajectorySet,
    eval_at,
    h0_norm,
    hs_distance,
    penalty,
    separation_check,
)
