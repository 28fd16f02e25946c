"""Large-system analysis of randomly spread CDMA under posterior-mean
detection, with a finite-size Monte Carlo validator of the decoupled
single-user channel picture."""

from .constellation import (
    Constellation,
    DetectorSpec,
    SnrProfile,
    SIGMA_INFINITE,
    SIGMA_ZERO,
    custom_discrete,
    db_to_linear,
    equal_power_profile,
    linear_to_db,
    make_standard,
    separable_axes,
    two_group_profile,
)
from .scalar_channel import (
    DecisionRangeError,
    QuadratureError,
    QuadratureRule,
    ScalarParams,
    cross_entropy,
    decision,
    decision_inverse,
    imm_derivative_check,
    mmse,
    mmse_vec,
    moment_fn_p,
    moment_fn_q,
    mse,
    mutual_info,
    mutual_info_vec,
    variance,
)
from .replica_solver import (
    Branch,
    FixedPointSolution,
    SolverError,
    SystemSpec,
    coexistence_threshold,
    decorrelator_eta,
    free_energy,
    general_linear_eta,
    lmmse_eta,
    matched_filter_eta,
    residuals,
    solve,
    solve_coupled,
    solve_io,
    tau_solution_exists,
)
from .spectral import (
    SpectralResult,
    c_joint,
    c_sep,
    joint_via_integral,
    successive_decoding_se,
)
from .mc_sim import (
    McConfig,
    TrialRecord,
    decoupling_report,
    detect_io,
    detect_linear,
    generate_system,
    make_config,
    recover_hidden,
    run_trials,
)

__version__ = "0.1.0"
