"""Ellipsoidal bounds on what a hidden sensor attacker can do to an observer loop."""

from .calibration import (
    AttackMoments,
    DetectorCalibration,
    NoiseBound,
    QuantileMethod,
    chi2_threshold,
    markov_epsilon,
    noise_norm_quantile,
    reg_lower_incomplete_gamma,
)
from .errors import (
    ConfigError,
    ContainmentViolation,
    DegeneracyError,
    HiddenReachError,
    InfeasibleError,
    InstabilityError,
    NumericalError,
    ValidationError,
)
from .model import ObserverDesign, SteadyState, SystemModel, solve_discrete_lyapunov, spectral_radius, sqrt_sym, steady_state
from .reach import (
    Case,
    EllipsoidBound,
    HiddenBudget,
    SynthesisResult,
    build_bound_lmi,
    build_hinf_lmi,
    case1_budget,
    case2_budget,
    hinf_gain_estimate,
    min_volume_bound,
    synthesize_observer,
)
from .sim import (
    AttackTrace,
    SimConfig,
    Strategy,
    clipped_containment_test,
    empirical_alarm_rate,
    greedy_hidden_step,
    run_hidden_attack,
    simulate_attack_free,
)

__version__ = "0.1.0"
