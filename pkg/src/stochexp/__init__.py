"""Stochastic exponentials of jump-diffusions: simulation and martingale checks."""

__version__ = "0.1.0"

from .catalog import BESSEL_EZ, CatalogEntry, catalog_get, catalog_list, catalog_names
from .conditions import (
    Domain,
    benes_verdict,
    condition_one,
    explosion_probe,
    growth_ratio,
    kazamaki_estimate,
    novikov_estimate,
    operator_frakL_markov,
    operator_frakL_pathdep,
    operator_L_markov,
    operator_L_pathdep,
)
from .diagnostics import (
    estimate_ez,
    localization_ladder,
    martingale_verdict,
    ui_diagnostic,
)
from .errors import (
    CallbackFailure,
    JumpBelowFloor,
    NonFiniteState,
    OutOfRange,
    StochExpError,
    TiltUnbounded,
    UnknownModel,
)
from .estimates import MCEstimate
from .exponential import (
    exponential_closed_form,
    exponential_from_sde,
    martingale_increments,
    supermartingale_scan,
)
from .measure_change import girsanov_consistency, quadratic_variation_check, tilt_model
from .model import (
    CoefficientSet,
    Delay,
    LevyMeasure,
    Markov,
    ModelSpec,
    PathDependent,
    PathHistoryView,
    Volterra,
    history_view,
    validate_model,
)
from .simulate import (
    StoppingRule,
    TimeGrid,
    integrate_path,
    run_ensemble,
    simulate_driver,
    simulate_ensemble,
)

__all__ = [
    "BESSEL_EZ", "CallbackFailure", "CatalogEntry", "CoefficientSet", "Delay", "Domain",
    "JumpBelowFloor", "LevyMeasure", "MCEstimate", "Markov", "ModelSpec", "NonFiniteState",
    "OutOfRange", "PathDependent", "PathHistoryView", "StochExpError", "StoppingRule",
    "TiltUnbounded", "TimeGrid", "UnknownModel", "Volterra", "benes_verdict",
    "catalog_get", "catalog_list", "catalog_names", "condition_one", "estimate_ez",
    "explosion_probe", "exponential_closed_form", "exponential_from_sde",
    "girsanov_consistency", "growth_ratio", "history_view", "integrate_path",
    "kazamaki_estimate", "localization_ladder", "martingale_increments",
    "martingale_verdict", "novikov_estimate", "operator_L_markov", "operator_L_pathdep",
    "operator_frakL_markov", "operator_frakL_pathdep", "quadratic_variation_check",
    "run_ensemble", "simulate_driver", "simulate_ensemble", "supermartingale_scan",
    "tilt_model", "ui_diagnostic", "validate_model",
]
