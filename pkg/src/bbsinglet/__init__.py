"""Bang-bang pulse design for transferring proton polarization into 13C-13C singlet order."""

from .config import ConfigError, RunConfig, load_config, parse_config
from .engine import BBSequence, CommutationError, ControlProblem, build_problem, precompute_propagators, sequence_unitary
from .ga import GAConfig, optimize
from .operators import HermitianOperator, NumericalError, UnitaryPropagator, expm_hermitian, majorization_bound
from .relaxation import RelaxationParams, fit_monoexponential, hbac_simulate, sensitivity_gain
from .spins import SpeciesChannel, SpinSite, SpinSystem, build_singlet_projector, build_thermal_state

__version__ = "0.1.0"

__all__ = [
    "BBSequence", "CommutationError", "ConfigError", "ControlProblem", "GAConfig", "HermitianOperator",
    "NumericalError", "RelaxationParams", "RunConfig", "SpeciesChannel", "SpinSite", "SpinSystem",
    "UnitaryPropagator", "build_problem", "build_singlet_projector", "build_thermal_state", "expm_hermitian",
    "fit_monoexponential", "hbac_simulate", "load_config", "majorization_bound", "optimize", "parse_config",
    "precompute_propagators", "sensitivity_gain", "sequence_unitary",
]
