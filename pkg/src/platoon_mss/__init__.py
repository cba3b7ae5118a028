"""Stochastic stability toolkit for vehicle platoons over lossy links."""

from .errors import (
    EvaluationError,
    GuardError,
    InvalidModelError,
    InvalidParameterError,
    PlatoonMssError,
    RealizationError,
    SchemaError,
    UnstableSystemError,
    UnsupportedModelError,
    WellPosednessError,
)
from .lti import (
    AssumptionReport,
    RationalTF,
    StateSpace,
    complementary_sensitivity,
    headway_tf,
    hinf_norm,
    spectral_radius,
    ss_eval,
    ss_minimal,
    ss_realize,
    validate_vehicle_assumptions,
    zero_multiplicity_at_one,
)
from .strategies import (
    STRATEGY_NAMES,
    CompensationStrategy,
    VehicleRealization,
    VehicleSpec,
    build_vehicle_realization,
    strategy_signal_equations,
)
from .platoon import (
    ChannelModel,
    ChannelMoments,
    PlatoonRealization,
    assemble_platoon,
    channel_moments,
    sample_channel,
    subsystem_tf,
)
from .moments import (
    MomentTrajectory,
    StationaryMoments,
    covariance_recursion,
    delta_matrix,
    mean_recursion,
    stationary_mean,
    stationary_covariance,
    stationary_moments,
)
from .mss import (
    MssReport,
    PerVehicleCondition,
    homogeneous_conditions,
    mss_verdict,
    per_vehicle_conditions,
    string_behavior_report,
    sweep,
)
from .montecarlo import (
    EnsembleStats,
    LeaderProfile,
    SimulationRun,
    ensemble_stats,
    enumerate_exact,
    leader_trajectory,
    simulate_run,
)

__version__ = "0.1.0"
