"""ATE estimation under covariate shift: OR, Hajek, IPWRA, AIPW and the Joint Robust Estimator."""

from .data import Dataset, Schema, ValidationReport, load_dataset, validate_dataset, write_dataset
from .estimators import (
    ATEEstimate,
    OutcomeModelPair,
    ate_risk,
    estimate_aipw,
    estimate_hajek,
    estimate_ipwra,
    estimate_or,
    fit_outcome_models_or,
)
from .jre import (
    JreConfig,
    RobustLossTerms,
    build_loss_terms,
    compute_bias_term,
    estimate_jre,
    fit_jre,
    robust_loss,
)
from .propensity import (
    PropensityEnsemble,
    PropensityFit,
    bootstrap_propensity_ensemble,
    clip_scores,
    fit_propensity,
)
from .regression import (
    IrlsConfig,
    LinearCoefficients,
    LogisticCoefficients,
    fit_logistic,
    fit_weighted_least_squares,
    predict_linear,
    sigmoid,
)
from .simulation import (
    DgpConfig,
    SimulatedDataset,
    SimulationReport,
    generate_dataset,
    run_monte_carlo,
    run_replication,
    summarize_report,
)

__version__ = "0.1.0"
