"""Exact densities, asymptotic expansions and deviation experiments for blocks
of Haar-distributed orthogonal and Stiefel matrices."""

__version__ = "0.1.0"

from .asymptotics import (
    BoundReport,
    ExpansionBreakdown,
    audit_local_limit,
    gamma_quotient_residual,
    local_limit_bound,
    logdet_expansion,
    remainder_bound,
)
from .core import (
    BlockDims,
    DimensionError,
    DomainError,
    HaarBlocksError,
    OutOfSupportError,
    Seed,
    SpectralSummary,
    SpectrumError,
    derive_replica_seed,
    frobenius_sq,
    gram_eigenvalues,
    gram_spectrum,
    make_rng,
)
from .density import (
    LogDensityValue,
    QuadratureError,
    TailQuery,
    log_block_density,
    log_density_ratio,
    log_gaussian_density,
    log_multigamma,
    log_scaled_density,
    marginal_tail,
)
from .experiments import (
    ExperimentReport,
    ReportRow,
    Schedule,
    TestFunction,
    run_as_trace,
    run_concentration,
    run_empirical_decay,
    run_logmgf,
    run_mdp_block,
    run_mdp_entry,
)
from .rates import (
    GaussianSpec,
    Histogram,
    build_histogram,
    kl_gaussian,
    kl_histogram,
    levy_distance,
    mdp_rate,
    orthogonal_ldp_rate,
    stiefel_ldp_rate,
)
from .sampling import (
    EmpiricalSample,
    StiefelFrame,
    empirical_sample,
    sample_blocks,
    sample_gaussian_block,
    sample_haar_orthogonal,
    sample_stiefel,
    scaled_block,
)
