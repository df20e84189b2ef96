"""Numerical toolkit for generalized and reflected backward SDEs and their PDE counterparts."""

from .core import (DiffusionSpec, DriverSpec, MeasureData, TimeGrid, WeightSpec, inf_convolution,
                   regularize_driver, sigma_from_a, weight_eval)
from .engine import LatticeEngine, RegressionEngine
from .errors import (BSDELabError, CFLError, ConfigError, ConvergenceError, DecompositionError,
                     EllipticityError, MonotonicityError, RegressionError, SpecMismatchError)
from .forward import (FunctionalPath, MarkovLattice, PathBundle, accumulate_functional, build_lattice,
                      gaussian_density, simulate_paths)
from .gbsde import (BSDESolution, check_apriori, check_comparison, maximal_solution, minimal_solution,
                    solve_gbsde, solve_gbsde_lattice, solve_gbsde_lsmc)
from .rbsde import (ObstacleSpec, RBSDESolution, check_lewy_stampacchia, check_skorokhod, control_density,
                    decompose_obstacle, homographic_sequence, solve_rbsde_homographic, solve_rbsde_penalization,
                    solve_rbsde_reflected)
from .pde import (PDESolution, SpaceTimeGrid, check_pde_lewy_stampacchia, recover_reaction_density,
                  self_convergence, solve_obstacle_homographic, solve_obstacle_projected, solve_parabolic_measure,
                  weighted_l2)
from .bridge import BridgeInputs, BridgeReport, compare_representation, verify_control_measure, \
    verify_measure_correspondence
from .estimators import GBSDESolver, ObstacleSolver, ParabolicSolver, RBSDESolver

__version__ = "0.1.0"
