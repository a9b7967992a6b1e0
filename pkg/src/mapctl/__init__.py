"""Correlated arrival processes and threshold control of make-to-stock systems."""
from ._kernels import BACKEND
from .errors import *  # noqa: F401,F403
from .ldqbd import (StationaryDistribution, ThresholdPolicy, authorization_matrix,
                    build_level_blocks, evaluate_policy, solve_stationary,
                    threshold_performance)
from .mapcore import (MapStatistics, MarkovianArrivalProcess, PhaseTypeDistribution,
                      jump_chain_probabilities, map_statistics, marginal_ph,
                      ph_as_renewal_map, ph_two_moment_fit, poisson_map, preset,
                      renewalize, rescale_mean, scale_autocorrelation,
                      stationary_phase_vector, two_station_line_map, validate_map,
                      validate_ph)
from .mdp import (PolicyTable, optimize_thresholds, policy_iteration, uniformize,
                  value_iteration, verify_threshold_structure)
from .policies import (BenchmarkResult, compare_policies, make_mtna, make_mtwa, make_stna,
                       make_stwa, theta_sweep)
from .qbd import (CostParameters, PerformanceMeasures, base_stock_performance,
                  build_qbd_blocks, optimal_base_stock, shortfall_cdf, solve_rate_matrix)
from .sim import SimulationConfig, SimulationEstimate, sample_map_path, simulate_system

__version__ = "0.1.0"
