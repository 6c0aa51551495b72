"""Finite-size randomness and key-rate certification for device-independent
protocols: Bell-expression certificates, moment-matrix relaxations with an
in-process interior-point solver, and entropy-accumulation rate sweeps."""

from .scenario import BehaviorDistribution, MarginalSet, Scenario, uniform_behavior
from .bell import (BellAtom, BellExpression, BellParseError,
                   evaluate_expression, expression_to_coefficient_vector,
                   parse_expression)
from .ingest import (AggregatedCounts, DataConfig, IngestError,
                     counts_to_behavior, expression_value_with_error,
                     parse_data_config, parse_data_files)
from .quadrature import QuadratureRule, gauss_radau
from .solver import DualSolution, SdpBlock, SdpProblem, SolverSettings, solve
from .relaxations import (CertificateSet, InfeasibleTargets, RelaxationError,
                          bell_extremum, min_entropy, von_neumann_entropy)
from .eat import (EatParameters, EatSweepResult, TradeoffStats, eat_bound,
                  effective_rounds, epsilon_k, epsilon_omega, epsilon_v,
                  net_gain, spot_check_lift, sweep)
from .pipeline import MinTradeoffInfo, calculate_eat_rates, calculate_min_tradeoff
from .persistence import EdqDocument, SchemaError, load_stage, save_stage

__version__ = "0.1.0"
