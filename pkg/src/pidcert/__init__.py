"""PID gain synthesis and numerical stability certificates.

Provably stabilizing gain regions for second-order globally Lipschitz
plants, closed-loop simulation with blow-up detection, and numerical
reproductions of the two negative results: superlinear growth forces
finite escape time, and third-order plants defeat every PID gain choice.
"""

from .closed_loop import (
    Converged,
    Diverged,
    FiniteEscape,
    MaxTimeReached,
    ReducedThirdOrderLoop,
    SecondOrderLoop,
    SuperlinearLoop,
    ThirdOrderLoop,
    Trajectory,
    equilibrium_state,
    initial_state_from_physical,
    second_order_field,
    superlinear_field,
    third_order_field,
)
from .certificates import (
    ConeCL,
    DivergencePlan,
    LyapunovCertificate,
    ModalTransform,
    SpectralReport,
    build_modal_transform,
    comparison_lower_bound,
    cone_contains,
    cone_facet_flux,
    divergence_plan,
    error_divergence_constant,
    escape_error_lower_bound,
    escape_time_bound,
    exponential_rate_fit,
    lyapunov_certificate,
    lyapunov_derivative_along,
    lyapunov_series,
    lyapunov_value,
    modal_coordinates,
    modal_initial_state,
    multiple_root_candidates,
    physical_to_proof,
    pick_cone_parameter,
    reduced_divergence_plan,
    select_feedthrough,
    select_feedthrough_reduced,
    spectral_report,
    third_order_char_poly,
    third_order_initial_state,
    two_mode_error,
    vdot_margin,
)
from .errors import (
    BadParams,
    BeyondBound,
    ComplexInitialState,
    DegenerateTriple,
    InsufficientData,
    NonFiniteDerivative,
    NotOnFacet,
    ParameterOutOfRange,
    PidcertError,
    SearchExhausted,
    ShiftUndefined,
    UnknownPlant,
    ZeroIntegralGain,
)
from .gain_design import (
    EigenTriple,
    LipschitzBound,
    PidGains,
    RegionReport,
    corollary_gains,
    eigen_assignment,
    gains_to_lambda,
    h,
    in_omega_k,
    in_omega_lambda,
    lambda_to_gains,
    omega_k_assignment,
    phi,
    sample_omega_lambda,
    vieta_jacobian_det,
)
from .integrator import IntegratorConfig, integrate, integrate_batch, rk4_step
from .plants import (
    PlantFunction,
    ThirdOrderPlantFunction,
    catalog_lookup,
    estimate_lipschitz,
    feedthrough_plant,
    sample_plant,
    shift_nonlinearity,
)

__version__ = "0.1.0"
