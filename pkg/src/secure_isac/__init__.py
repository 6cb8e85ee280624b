"""Posterior CRB computation and secure ISAC beamforming with artificial noise."""

from .errors import (ANRankOverflowError, ConfigError, DegenerateInputError,
                     EmptyNullSpaceError, GeometryDomainError, InfeasibleError, IsacError,
                     QuadratureError, ScenarioError, SolverError)
from .model import (Beamformer, CovariancePair, Scenario, angle_from_geometry,
                    eavesdropper_channel, mixture_pdf, rayleigh_user_channel, steering_derivative,
                    steering_rx, steering_tx)
from .pcrb import (QuadratureConfig, SensingMatrices, compute_epsilon, compute_sensing_matrices,
                   fim_blocks, pcrb_approx, pcrb_exact, pcrb_upper, xi_threshold)
from .sdp import Constraint, SdpProblem, SdpSolution, check_feasible, solve
from .optimizer import (GammaSearchConfig, OptimizationResult, check_feasibility_p1,
                        extract_beams, optimize_optimal, optimize_suboptimal1,
                        optimize_suboptimal2, rank_one_reduce, secrecy_upper_bound, solve_inner)
from .metrics import beampattern, secrecy_rate, sinr_eve, sinr_user

__version__ = "0.1.0"
