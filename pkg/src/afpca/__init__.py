"""Adaptive penalized spline smoothing and functional PCA.

Submodules
----------
basis     cubic B-splines, the roughness penalty and the diagonalizing basis
smooth    adaptive scatterplot smoothing
fpca      adaptive functional principal component analysis
simulate  synthetic data generator and benchmark study
io        long-format CSV reading and writing
cli       command-line entry point (``afpca``)
"""

from .basis import (
    KnotVector,
    TransformedBasis,
    eval_basis,
    make_knots,
    penalty_fn_values,
    penalty_matrix,
    wand_transform,
)
from .data import FunctionalDataset
from .exceptions import (
    AfpcaError,
    DataError,
    DataValidationError,
    NumericalError,
    NumericalFailureError,
    OutOfDomainError,
    RankDeficiencyError,
)
from .fpca import (
    FpcaConfig,
    FpcaModel,
    Reconstruction,
    blup_scores,
    fit_afpca,
    orthogonalize,
    reconstruct,
    truncate_pve,
    update_coefficients,
    update_sigma2_fpca,
    update_tuning,
)
from .io import ingest_csv, write_csv
from .simulate import (
    MetricsReport,
    StudyConfig,
    TruthSpec,
    generate_dataset,
    ise,
    run_study,
    true_functions,
)
from .smooth import (
    SmoothConfig,
    SmoothFit,
    fit_adaptive_smooth,
    update_beta,
    update_lambda,
    update_sigma2,
)

__version__ = "0.1.0"
