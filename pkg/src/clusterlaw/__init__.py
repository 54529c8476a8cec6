"""Exact and asymptotic cluster statistics for exponential structures with
regularly varying parameter functions, plus a reversible
coagulation-fragmentation simulator."""

__version__ = "0.1.0"

from .sequences import (InvalidParameterFunction, ParameterFunction, SlowlyVarying, conjugate_sv,
                        divisor_sums, eval_a, h_transform, multiset_to_a, dominant_term_ratios)
from .coeff_engine import (CoefficientTable, SizeWindow, brute_force_c, compute_table, d_ratios,
                           kp_covariance, kp_joint, kp_marginal, kp_mean, largest_cluster_cdf,
                           log_coefficients, smallest_cluster_tail)
from .saddle import DivergenceError, SaddlePoint, llt_product, lyapunov_ratio, solve_sigma
from .asymptotics import (RegimeError, ans_pipeline, classify, knopfmacher_c, kp_limit, limit_d,
                          predict, sigma_asymptotic, solve_A)
from .cfp_sim import (CfpModel, PartitionState, detailed_balance_residual, enumerate_states,
                      exact_measure, simulate, trace_statistics, tv_distance)
