"""Orthogonally equivariant covariance estimation under block-wise dispersed spectra.

Estimators have the form ``G diag(c_1 l_1, ..., c_p l_p) G'`` for a Wishart
matrix ``S = G diag(l) G'``.  The package computes the coefficient vectors
(unbiased, SDS, KG and the two minimum-asymptotic-risk rules MA1/MA2), exact
and simulated ordered-eigenvalue moments, analytic and Monte Carlo risks,
limit-law diagnostics and a plug-in Mahalanobis classifier.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BlockCovError,
    DegenerateSpectrumWarning,
    DimensionMismatchError,
    InsufficientDofError,
    NegativeCoefficientError,
    NotPositiveDefiniteError,
    ParityUnsupportedError,
    ParseError,
    SingularScatterError,
    SingularSystemError,
)
from .linalg import (  # noqa: E402
    BlockPartition,
    EigenSpec,
    SpectralDecomp,
    block_view,
    build_sigma,
    random_orthogonal,
    relative_rotation,
    spectral_decompose,
)
from .sampling import RandomStream, sample_chi2, sample_gaussian_matrix, sample_wishart, split_stream  # noqa: E402
from .moments import (  # noqa: E402
    MomentTable,
    OrderedMoments,
    exact_ordered_moments,
    f2_exact,
    f3_exact,
    moment_table,
    ordered_moments,
)
from .estimators import (  # noqa: E402
    CoefficientVector,
    EstimatorKind,
    all_coefficients,
    apply_estimator,
    coefficients,
    coeffs_kg,
    coeffs_ma1,
    coeffs_ma2,
    coeffs_sds,
    coeffs_u,
    custom,
    ma_system,
)
from .risk import (  # noqa: E402
    LossKind,
    RiskDecomposition,
    RiskReport,
    asymptotic_risk_identity_blocks,
    asymptotic_risk_limitdist_mc,
    elog_chi2,
    limit_risk_single_pass,
    loss,
    risk_mc_finite,
    risk_mc_finite_many,
    risk_table_block,
    rrr,
)
from .convergence import (  # noqa: E402
    ConvergenceReport,
    TransformedStats,
    chi2_quantile,
    convergence_sweep,
    multiblock_limit_check,
    normal_quantile,
    offdiag_exceedance,
    transformed_stats,
)
from .discriminant import (  # noqa: E402
    CVReport,
    EstimatorConfig,
    GroupModel,
    KSampleSet,
    LabeledDataset,
    LeaveOneOut,
    classify,
    cross_validate,
    fit_group,
    load_csv,
    load_iris,
)
