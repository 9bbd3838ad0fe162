"""Numerical laboratory for filter stability on finite-state chains.

The package simulates finite-state continuous-time Markov chains
observed through additive white noise, runs the associated conditional
law (filter) and companion objects (linear propagators, initial-state
smoother, augmented joint filter), and measures how quickly or whether
the filter forgets a wrong initial law. Closed-form bounds, Monte Carlo
exponent estimates, identifiability checks for multi-class chains, and
an exact noiseless counterexample with a reproducible cycle table are
all exposed both as a Python API and through a config-driven CLI.
"""

from .counterexample import (CyclicFilterTrajectory, CyclicModel,
                             DegenerateInitError, InstabilityReport,
                             InvariantSupport, build_cyclic_model,
                             cycle_table_rows, exact_jump_filter,
                             expected_gap, instability_demo,
                             invariant_support, reference_cycle)
from .filtering import (AugmentedRun, DegenerateMassError, FilterTrajectory,
                        SmootherMatrix, SmootherRun, StateSpaceTooLargeError,
                        StepKernel, ZakaiPropagator, augmented_filter,
                        batch_time_average, filter_step_batch,
                        pair_log_distances, run_filter, run_smoother,
                        smoother_step, wonham_step, zakai_propagator)
from .markov import (ChainPath, ClassDecomposition, GeneratorError,
                     GeneratorMatrix, NegativeOffDiagonalError,
                     NotBlockDecomposableError, NotIrreducibleError,
                     RowSumNonZeroError, as_distribution, decompose_classes,
                     invariant_measure, sample_path, transition_matrix,
                     validate_generator)
from .metrics import (L1_OVER_HILBERT, birkhoff_psi, birkhoff_tau,
                      hilbert_metric, l1_distance)
from .observation import (JumpObservation, ObservationModel, ObservationPath,
                          noiseless_indicator_observation,
                          synthesize_observations)
from .seeding import check_seed, trial_rng
from .stability import (ClassificationResult, ContractionEstimate,
                        HorizonTooShortError, IdentifiabilityReport,
                        LyapunovEstimate, NotAbsolutelyContinuousError,
                        PairIdentifiability, RateReport, bound_geo,
                        bound_mu_row, build_rate_report, check_identifiability,
                        class_centroids, classify_class, contraction_rate,
                        d_moment, lyapunov_estimate, lyapunov_sigma_sweep,
                        prefactors, simulate_increments)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # markov
    "GeneratorMatrix", "ChainPath", "ClassDecomposition", "GeneratorError",
    "NegativeOffDiagonalError", "RowSumNonZeroError",
    "NotBlockDecomposableError", "NotIrreducibleError", "as_distribution",
    "validate_generator", "decompose_classes", "invariant_measure",
    "transition_matrix", "sample_path",
    # observation
    "ObservationModel", "ObservationPath", "JumpObservation",
    "synthesize_observations", "noiseless_indicator_observation",
    # metrics
    "L1_OVER_HILBERT", "l1_distance", "hilbert_metric", "birkhoff_psi",
    "birkhoff_tau",
    # filtering
    "StepKernel", "FilterTrajectory", "ZakaiPropagator", "SmootherMatrix",
    "SmootherRun", "AugmentedRun", "DegenerateMassError",
    "StateSpaceTooLargeError", "wonham_step", "filter_step_batch",
    "run_filter", "pair_log_distances", "batch_time_average",
    "zakai_propagator", "smoother_step", "run_smoother", "augmented_filter",
    # stability
    "LyapunovEstimate", "ContractionEstimate", "RateReport",
    "PairIdentifiability", "IdentifiabilityReport", "ClassificationResult",
    "NotAbsolutelyContinuousError", "HorizonTooShortError", "bound_mu_row",
    "bound_geo", "prefactors", "simulate_increments", "lyapunov_estimate",
    "lyapunov_sigma_sweep", "contraction_rate", "build_rate_report",
    "check_identifiability", "d_moment", "class_centroids", "classify_class",
    # counterexample
    "CyclicModel", "CyclicFilterTrajectory", "InvariantSupport",
    "InstabilityReport", "DegenerateInitError", "build_cyclic_model",
    "exact_jump_filter", "reference_cycle", "cycle_table_rows",
    "invariant_support", "expected_gap", "instability_demo",
    # seeding
    "check_seed", "trial_rng",
]
