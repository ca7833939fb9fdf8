"""Simulation and certificate lab for nonlinear PI control of scalar
sector-bounded plants with fast first-order actuator lag."""

from .analysis import (
    CertificateParams,
    CertificateReport,
    certify,
    check_condition_i,
    ell_threshold,
    lambda_matrix_min_eig,
    s_value,
)
from .controller import (
    ControllerKind,
    ControllerSpec,
    ControllerState,
    controller_output,
    controller_rhs,
    z_dot_identity_check,
)
from .errors import (
    ConfigError,
    DomainError,
    GainOverflowError,
    InvalidSectorError,
    NonFiniteInputError,
    NpilabError,
    UndefinedThresholdError,
)
from .gains import (
    BetaFamily,
    BetaSpec,
    GainKind,
    GainSpec,
    GrowthCheck,
    NussbaumClass,
    NussbaumVerdict,
    check_beta_growth,
    default_growth_grid,
    eval_kappa,
    nussbaum_index,
)
from .plant import (
    PlantSpec,
    SectorCheck,
    SectorFamily,
    SectorFn,
    Topology,
    alpha_of,
    eval_f,
    plant_rhs,
    verify_sector_bounds,
)
from .simcore import (
    RK4Method,
    RKF45Method,
    SimConfig,
    Termination,
    TerminationKind,
    Trajectory,
    Verdict,
    VerdictClass,
    classify,
    closed_loop_rhs,
    integrate,
    step_rk4,
)

__version__ = "0.1.0"

__all__ = [
    "BetaFamily",
    "BetaSpec",
    "CertificateParams",
    "CertificateReport",
    "ConfigError",
    "ControllerKind",
    "ControllerSpec",
    "ControllerState",
    "DomainError",
    "GainKind",
    "GainOverflowError",
    "GainSpec",
    "GrowthCheck",
    "InvalidSectorError",
    "NonFiniteInputError",
    "NpilabError",
    "NussbaumClass",
    "NussbaumVerdict",
    "PlantSpec",
    "RK4Method",
    "RKF45Method",
    "SectorCheck",
    "SectorFamily",
    "SectorFn",
    "SimConfig",
    "Termination",
    "TerminationKind",
    "Topology",
    "Trajectory",
    "UndefinedThresholdError",
    "Verdict",
    "VerdictClass",
    "alpha_of",
    "certify",
    "check_beta_growth",
    "check_condition_i",
    "classify",
    "closed_loop_rhs",
    "controller_output",
    "controller_rhs",
    "default_growth_grid",
    "ell_threshold",
    "eval_f",
    "eval_kappa",
    "integrate",
    "lambda_matrix_min_eig",
    "nussbaum_index",
    "plant_rhs",
    "s_value",
    "step_rk4",
    "verify_sector_bounds",
    "z_dot_identity_check",
]
