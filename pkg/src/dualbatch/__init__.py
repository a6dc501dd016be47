"""Safe mini-batch stochastic dual coordinate ascent for regularized
linear models, with data-dependent step-size weights certified by an
expected separable overapproximation, and executable evaluators for the
solver's convergence guarantees."""

from .data import (Dataset, load_libsvm, make_dataset, matvec, normalize_rows,
                   parse_libsvm, primal_image, rmatvec, save_libsvm,
                   synthetic_dataset, write_libsvm)
from .errors import (ConfigError, DualbatchError, FeasibilityError, LoadError,
                     PowerIterationError, SupportTooLargeError)
from .eso import (EsoReport, EsoWeights, beta, eso_weights, omega, sigma_sq,
                  verify_eso)
from .kernels import active_backend_name, get_backend
from .losses import (LossModel, conjugate_value, coordinate_update,
                     loss_model, loss_value, subgradient)
from .sampling import (DistributedSampling, NiceSampling, SerialSampling,
                       iteration_rng, load_partition, make_sampling)
from .solver import (SolveConfig, SolveResult, SolverState, TraceRecord,
                     cocoa_step, dual_value, duality_gap, h_value, init_state,
                     msdca_step, primal_value, solve, update_vector)
from .theory import (BoundInputs, Lemma2Report, cocoa_vs_msdca_report,
                     complexity_estimate, lemma2_check, lemma2_default_s,
                     sigma_prime_estimate, sigma_tilde_sq, theorem1_bounds,
                     theorem2_bounds)

__version__ = "0.1.0"

__all__ = [
    "BoundInputs", "ConfigError", "Dataset", "DistributedSampling",
    "DualbatchError", "EsoReport", "EsoWeights", "FeasibilityError",
    "Lemma2Report", "LoadError", "LossModel", "NiceSampling",
    "PowerIterationError", "SerialSampling", "SolveConfig", "SolveResult",
    "SolverState", "SupportTooLargeError", "TraceRecord",
    "active_backend_name", "beta", "cocoa_step", "cocoa_vs_msdca_report",
    "complexity_estimate", "conjugate_value", "coordinate_update",
    "dual_value", "duality_gap", "eso_weights", "get_backend", "h_value",
    "init_state", "iteration_rng", "lemma2_check", "lemma2_default_s",
    "load_libsvm", "load_partition", "loss_model", "loss_value",
    "make_dataset", "make_sampling", "matvec", "msdca_step",
    "normalize_rows", "omega", "parse_libsvm", "primal_image",
    "primal_value", "rmatvec", "save_libsvm", "sigma_prime_estimate",
    "sigma_sq", "sigma_tilde_sq", "solve", "subgradient",
    "synthetic_dataset", "theorem1_bounds", "theorem2_bounds",
    "update_vector", "verify_eso", "write_libsvm",
]
