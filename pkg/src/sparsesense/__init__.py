"""Adaptive sparse sensing with the RZA-NLMF filter, plus OMP/BPDN baselines."""

from sparsesense.adaptive import (
    EstimatorState,
    IterationTrace,
    RzaNlmfConfig,
    iteration_error,
    run_ass,
    rza_nlmf_step,
    select_row,
    variable_step_size,
    zero_attractor,
)
from sparsesense.baselines import (
    BpdnConfig,
    RecoveryResult,
    bpdn_shrinkage,
    oracle_exhaustive,
    omp,
)
from sparsesense.errors import (
    DegenerateSampleError,
    DivergenceError,
    InstanceTooLargeError,
    InvalidSparsityError,
    RankError,
    ShapeError,
    SingularParametersError,
)
from sparsesense.metrics import (
    CrlbInputs,
    crlb_ass,
    crlb_nss,
    mse,
    snr_to_noise_variance,
)
from sparsesense.model import (
    MasterSeed,
    SensingEnsemble,
    SparseSignal,
    generate_sensing_matrix,
    generate_sparse_signal,
    rip_constant_bruteforce,
    synthesize_measurements,
)

__version__ = "0.1.0"
