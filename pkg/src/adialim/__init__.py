"""Numerical verification of adiabatic limits for Klein-Gordon modes with a time-dependent mass."""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    AdialimError,
    BelowNoiseFloor,
    ConfigError,
    DegenerateDispersionError,
    DomainError,
    IntegrationError,
    InvariantViolation,
    StepLimitExceeded,
    ToleranceNotAchievable,
)
from .profiles import Case, MassProfile, Space, dispersion, frame, spectral_projector, weight_matrix  # noqa: E402
from .propagators import (  # noqa: E402
    DEFAULT_CONFIG,
    IntegratorConfig,
    evolve_adiabatic,
    evolve_batch,
    evolve_exact,
    frozen_propagator,
    magnus_propagator,
    wkb_propagator,
)
from .smearing import ModeGrid, TestFunction, build_grid, bump, smear, weak_limit_error  # noqa: E402
from .states import (  # noqa: E402
    CovarianceFamily,
    adiabatic_limit_closed_form,
    hadamard_family,
    kms_defect,
    kms_family,
    vacuum_family,
)
from .harness import Experiment, ExperimentReport, SweepSpec, fit_rate, run  # noqa: E402

__all__ = [
    "__version__",
    "AdialimError",
    "BelowNoiseFloor",
    "ConfigError",
    "DegenerateDispersionError",
    "DomainError",
    "IntegrationError",
    "InvariantViolation",
    "StepLimitExceeded",
    "ToleranceNotAchievable",
    "Case",
    "MassProfile",
    "Space",
    "dispersion",
    "frame",
    "spectral_projector",
    "weight_matrix",
    "DEFAULT_CONFIG",
    "IntegratorConfig",
    "evolve_adiabatic",
    "evolve_batch",
    "evolve_exact",
    "frozen_propagator",
    "magnus_propagator",
    "wkb_propagator",
    "ModeGrid",
    "TestFunction",
    "build_grid",
    "bump",
    "smear",
    "weak_limit_error",
    "CovarianceFamily",
    "adiabatic_limit_closed_form",
    "hadamard_family",
    "kms_defect",
    "kms_family",
    "vacuum_family",
    "Experiment",
    "ExperimentReport",
    "SweepSpec",
    "fit_rate",
    "run",
]
