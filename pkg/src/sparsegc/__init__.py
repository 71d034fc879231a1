"""Node- and edge-sparse logistic classification of weighted graphs."""
__version__ = "0.1.0"

from .loss import InterceptError, LogisticLoss, logistic_gradient, logistic_loss, newton_intercept
from .prox import (
    BACKEND,
    AdmmNotConverged,
    available_backends,
    group_soft_threshold,
    penalty_value,
    prox_admm,
    prox_union_closed_form,
    soft_threshold,
)
from .solver import (
    FitDiagnostics,
    SolverError,
    accuracy,
    fit,
    kkt_residual,
    objective,
    predict,
    predict_labels,
    predict_scores,
)
from .types import (
    CoefficientModel,
    DataError,
    EdgeIndex,
    GraphSample,
    PenaltyParams,
    SampleSet,
    SolverConfig,
    devectorize_upper,
    vectorize_upper,
)
from .model_selection import (
    CvResult,
    NestedCvResult,
    StabilityReport,
    TuningGrid,
    cross_validate,
    nested_cross_validate,
    one_se_rule,
    stability_selection,
)
from .simulation import (
    GroundTruth,
    SelectionRoc,
    SimDesign,
    generate_population,
    selection_auc,
    selection_rates,
)
from .io import RankTransform, rank_standardize, read_model, read_samples, write_model, write_samples

