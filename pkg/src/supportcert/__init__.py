"""Support stability certificates for l1 recovery under lp data fidelity."""

__version__ = "0.1.0"

from .certificate import (Certificate, ProblemInstance, certificate_norm,
                          is_identifiable, min_norm_certificate, saturation_support,
                          support, support_excess_size)
from .errors import (InfeasibleError, MuDegenerateError, NoiseRegimeViolatedError,
                     NotIdentifiableError, NotInjectiveError, SingularMatrixError,
                     SupportCertError, TauOutOfRangeError, TooLargeError,
                     UnboundedError)
from .solver import SolverConfig
from .stability import (StabilityAnalysis, analyze, injectivity_check, multipliers,
                        noise_constants, noiseless_solution, predicted_noisy_solution,
                        verify_theorem)

__all__ = [
    "Certificate", "InfeasibleError", "MuDegenerateError", "NoiseRegimeViolatedError",
    "NotIdentifiableError", "NotInjectiveError", "ProblemInstance", "SingularMatrixError",
    "SolverConfig", "StabilityAnalysis", "SupportCertError", "TauOutOfRangeError",
    "TooLargeError", "UnboundedError", "__version__", "analyze", "certificate_norm",
    "injectivity_check", "is_identifiable", "min_norm_certificate", "multipliers",
    "noise_constants", "noiseless_solution", "predicted_noisy_solution",
    "saturation_support", "support", "support_excess_size", "verify_theorem",
]
