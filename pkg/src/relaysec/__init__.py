"""AN-aided Alamouti relay beamforming for secrecy-rate maximization in
full-duplex two-way relay networks."""

from .channel import (
    ChannelSet,
    ConfigError,
    DerivedConstants,
    NoNullingDimensionsError,
    RelaySolution,
    derive_constants,
    generate_channels,
    mmse_receivers,
    nullspace_basis,
    to_physical,
)
from .eh import (
    EhConfig,
    InfeasibleEHError,
    eh_margin,
    inexact_mm_solve_eh,
    make_eh_config,
    project_feasible_eh,
    rank_reduce_eh,
)
from .purify import (
    ConstraintBundle,
    RankExceededError,
    decompose_rank_two,
    rank_reduce,
    stationarity_residual,
)
from .rates import (
    EveModel,
    FunctionalValues,
    eve_noise_cov,
    eve_sum_rate,
    functionals,
    harvested_power,
    legitimate_rate,
    lifted_gradient,
    lifted_objective,
    relay_power,
    sinr_legitimate,
    sum_secrecy_rate,
)
from .signal_sim import (
    FrameConfig,
    SimulatedStreams,
    alamouti_encode,
    empirical_eve_stats,
    empirical_harvested_power,
    empirical_relay_power,
    empirical_sinr,
    simulate_frames,
)
from .solver import (
    IteratePoint,
    LineSearchError,
    SolveTrace,
    SolverOptions,
    armijo_step,
    default_init,
    gradient_mapping,
    inexact_mm_solve,
    project_feasible,
    surrogate_gradient,
    surrogate_value,
)

__version__ = "0.1.0"
