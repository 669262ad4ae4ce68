"""Total-variation regularized estimation on graphs.

Library + CLI for edge-difference penalized signal estimation (plain and
square-root variants), the projection-based theory constants behind their
error bounds (antiprojection lengths, inverse scaling factor, weights,
compatibility bounds), and seeded Monte Carlo verification of the bounds.
"""

from .compatibility import (KappaBounds, kappa_bound_cycle, kappa_bound_path,
                            kappa_numeric)
from .graphs import (ActiveSet, DirectedGraph, active_set, build_graph,
                     cycle_graph, grid_graph, incidence, is_admissible,
                     path_graph, read_graph, tree_graph, write_graph)
from .projections import (PseudoInverse, TheoryReport, antiproject_nullspace,
                          gamma_bound, project_nullspace, pseudoinverse,
                          theory_report)
from .solvers import (EstimateResult, SolverOptions, kkt_residual, norm_n,
                      solve_analysis, solve_sqrt_analysis)
from .tuning import (admissible_set_requirements, check_assumption1,
                     lambda0_sqrt, lambda_plain, minimal_tuning, oracle_rhs,
                     t_max_sqrt, TheoremInputs)
from .experiments import (ExperimentConfig, SignalSpec, generate_trial,
                          run_experiment, verify_probability_lemmas)

__version__ = "0.1.0"
