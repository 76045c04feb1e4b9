"""Linear-quadratic optimal control of 1D hyperbolic equations.

Solves transport / continuity / wave constrained LQ problems through a
condensed optimality system (symmetric difference quotients in space,
implicit midpoint in time), certifies domain-uniform stabilizability of
control-interval layouts, and measures spatial exponential decay of
localized perturbations.
"""

__version__ = "0.1.0"

from .geometry import (
    ExpWeight,
    Grid1D,
    GridFunction,
    IntervalUnion,
    TimeGrid,
    exp_weight_on_grid,
    format_domain,
    indicator_on_grid,
    measure_intersection,
    parse_domain,
    periodize_eval,
    restrict_domain,
)
from .domain_check import (
    RateCertificate,
    Verdict,
    certify_rates,
    check_condition_ii,
    check_condition_iii,
    guaranteed_decay,
    make_equidistant,
)
from .characteristics import (
    FlowResult,
    NumericError,
    VelocityField,
    flow_backward,
    flow_forward,
    path_integral,
)

from .semigroup import (
    FeedbackProfile,
    WaveState,
    continuity_damped,
    continuity_stabilizing_gain,
    estimate_operator_norm,
    sample_periodic,
    transport_damped,
    transport_free,
    transport_variable,
    wave_dalembert,
    wave_damped,
    wave_energy,
)
from .ocp import (
    OCPConfig,
    OCPSolution,
    PerturbationSpec,
    assemble_kkt,
    build_advection_matrix,
    bump_initial,
    discrete_objective,
    rollout_midpoint,
    solve_error_system,
    solve_ocp,
    solve_perturbed,
)
from .analysis import (
    DecayFit,
    LocalizationCertificate,
    NormReport,
    fit_decay_rate,
    localization_certificate,
    spacetime_pairing,
    time_sliced_l2,
    weighted_spacetime_norms,
)

__all__ = [
    "__version__",
    "ExpWeight",
    "Grid1D",
    "GridFunction",
    "IntervalUnion",
    "TimeGrid",
    "exp_weight_on_grid",
    "format_domain",
    "indicator_on_grid",
    "measure_intersection",
    "parse_domain",
    "periodize_eval",
    "restrict_domain",
    "RateCertificate",
    "Verdict",
    "certify_rates",
    "check_condition_ii",
    "check_condition_iii",
    "guaranteed_decay",
    "make_equidistant",
    "FlowResult",
    "NumericError",
    "VelocityField",
    "flow_backward",
    "flow_forward",
    "path_integral",
    "FeedbackProfile",
    "WaveState",
    "continuity_damped",
    "continuity_stabilizing_gain",
    "estimate_operator_norm",
    "sample_periodic",
    "transport_damped",
    "transport_free",
    "transport_variable",
    "wave_dalembert",
    "wave_damped",
    "wave_energy",
    "OCPConfig",
    "OCPSolution",
    "PerturbationSpec",
    "assemble_kkt",
    "build_advection_matrix",
    "bump_initial",
    "discrete_objective",
    "rollout_midpoint",
    "solve_error_system",
    "solve_ocp",
    "solve_perturbed",
    "DecayFit",
    "LocalizationCertificate",
    "NormReport",
    "fit_decay_rate",
    "localization_certificate",
    "spacetime_pairing",
    "time_sliced_l2",
    "weighted_spacetime_norms",
]
