"""Annotation error detection toolkit.

Generates synthetic audited annotation logs, engineers behavioral features,
trains gradient-boosted error classifiers, explains them with exact tree SHAP,
and simulates model-ranked audit schedules.
"""

from .audit import (
    AuditCurves,
    AuditRanking,
    EfficiencyGain,
    compute_curves,
    early_lift,
    efficiency_gain,
    rank_for_audit,
)
from .evaluation import (
    AucMatrix,
    EvalReport,
    SearchResult,
    SearchSpace,
    TrainedModel,
    auc,
    classification_report,
    cross_application_matrix,
    evaluate_model,
    fit_final,
    predict_scores,
    random_search,
)
from .events import (
    AnnotationEvent,
    Application,
    DatasetSplit,
    ErrorVerdict,
    RelevanceLabel,
    derive_verdict,
    read_log,
    split_log,
    write_log,
)
from .explain import (
    ImportanceVector,
    ShapMatrix,
    importance,
    importance_correlation,
    shap_values,
)
from .features import (
    FeatureMatrix,
    FeatureSchema,
    build_feature_matrix,
    edit_distance,
    embedding_distance,
    rolling_error_rate,
    rolling_rate_by_category,
    tenure_and_volume,
)
from .gbdt import (
    Ensemble,
    Hyperparams,
    Tree,
    leaf_weight,
    logistic_grad_hess,
    predict_margin,
    predict_proba,
    split_gain,
    train,
)
from .preprocess import PreprocessorState, fit, transform
from .synth import (
    AnnotatorProfile,
    Coefficients,
    GenConfig,
    TaskTemplate,
    error_probability,
    generate_log,
    generate_population,
    oracle_auc,
)

__version__ = "0.1.0"
