"""Numerical solver for selling at the ultimate maximum under regime switching.

The asset follows a geometric Brownian motion whose drift and volatility are
driven by a finite-state Markov chain.  The library computes the gain and
value surfaces of the optimal-prediction stopping problem, extracts the
per-regime stopping boundaries, verifies the boundary's integral equation,
and evaluates stopping policies by simulation.
"""

from .model import (
    BadGeneratorRow,
    ExerciseRegime,
    ModelError,
    NonPositiveHorizon,
    NonPositiveVolatility,
    NotApplicable,
    RegimeModel,
    classify,
    validate,
)
from .grids import Grid, Surface, default_z_max, truncation_tail_bound
from .markov import ChainPath, TransitionMatrix, sample_chain, stationary_distribution, transition_matrix
from .paths import PathBundle, XPath, iter_path_blocks, lift_to_x, simulate_paths
from .stepping import GridTooCoarse
from .gain import dG_dx, g_monte_carlo, g_pde, h_level, lg
from .value import (
    ValueSurfaces,
    check_F_monotone_t,
    check_normal_reflection,
    check_smooth_fit,
    complementarity_gap,
    containment_violations,
    discrete_generator_image,
    solve_value,
)
from .boundary import Boundary, NonMonotoneSlice, check_boundary_monotone, extract_boundary
from .volterra import VolterraReport, estimate_J, estimate_K, volterra_residual
from .strategy import Policy, RegretEstimate, compare_policies, evaluate_policy

__version__ = "0.1.0"
