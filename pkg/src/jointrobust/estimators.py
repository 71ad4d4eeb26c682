"""Outcome regression, Hajek IPW, IPWRA and AIPW estimators of the ATE.

All estimators share one outcome feature map (intercept plus raw covariates by
default) and consume propensity scores exactly as given; clipping belongs to
the caller.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .data import Dataset
from .regression import (
    LinearCoefficients,
    add_intercept,
    fit_weighted_least_squares,
    predict_linear,
)

Features = Literal["linear", "intercept", "quadratic"]
FEATURE_SETS = ("linear", "intercept", "quadratic")
Arm = Literal["treated", "control"]


def feature_matrix(covariates, features: Features = "linear") -> np.ndarray:
    """Outcome-model regressors without the intercept column.

    ``intercept`` gives zero columns (constant models), ``quadratic`` appends
    squared covariates and is meant for diagnostics only.
    """
    x = np.asarray(covariates, dtype=float)
    if features == "linear":
        return x
    if features == "intercept":
        return np.empty((x.shape[0], 0))
    if features == "quadratic":
        return np.column_stack([x, x**2])
    raise ValueError(f"unknown feature set {features!r}")


@dataclass(frozen=True)
class OutcomeModelPair:
    treated: LinearCoefficients
    control: LinearCoefficients
    features: Features = "linear"

    def predict(self, covariates) -> tuple[np.ndarray, np.ndarray]:
        f = feature_matrix(covariates, self.features)
        return predict_linear(self.treated, f), predict_linear(self.control, f)

    def shifted(self, c: float) -> "OutcomeModelPair":
        return OutcomeModelPair(self.treated.shifted(c), self.control.shifted(c), self.features)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.treated.as_vector(), self.control.as_vector()])

    @classmethod
    def from_vector(cls, theta, features: Features = "linear") -> "OutcomeModelPair":
        theta = np.asarray(theta, dtype=float)
        p = theta.size // 2
        return cls(
            LinearCoefficients.from_vector(theta[:p]),
            LinearCoefficients.from_vector(theta[p:]),
            features,
        )

    def to_dict(self) -> dict:
        return {
            "features": self.features,
            "treated": self.treated.to_dict(),
            "control": self.control.to_dict(),
        }


def _json_safe(value):
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return _json_safe(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


@dataclass(frozen=True)
class ATEEstimate:
    """A point estimate of the ATE plus per-arm bias diagnostics.

    ``bias_treated`` and ``bias_control`` are the importance-weighted mean
    residuals ``(1/N) sum (Y - mu(X)) * w`` of the fitted models, with ``w`` the
    inverse propensity of the arm. ``None`` when no scores were involved.
    """

    estimator: str
    tau_hat: float
    bias_treated: float | None = None
    bias_control: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.tau_hat):
            raise ValueError(f"{self.estimator}: non-finite tau_hat")

    def to_dict(self) -> dict:
        return _json_safe(
            {
                "estimator": self.estimator,
                "tau_hat": self.tau_hat,
                "bias_treated": self.bias_treated,
                "bias_control": self.bias_control,
                "diagnostics": self.diagnostics,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def check_scores(scores, n: int) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (n,):
        raise ValueError(f"expected {n} propensity scores, got shape {scores.shape}")
    if not np.all((scores > 0) & (scores < 1)):
        raise ValueError("propensity scores must lie strictly inside (0, 1)")
    return scores


def arm_weights(data: Dataset, scores, arm: Arm) -> np.ndarray:
    """Inverse-propensity weights of one arm on all N rows (zero off the arm)."""
    scores = np.asarray(scores, dtype=float)
    if arm == "treated":
        return np.where(data.treated, 1.0 / scores, 0.0)
    if arm == "control":
        return np.where(data.control, 1.0 / (1.0 - scores), 0.0)
    raise ValueError(f"unknown arm {arm!r}")


def weighted_residual_mean(data: Dataset, arm: Arm, scores, predictions) -> float:
    """``(1/N) * sum over the arm of (Y_i - prediction_i) / p_i``.

    ``p_i`` is the score for the treated arm and one minus the score for the
    control arm. The normalization is the full sample size N, not the arm size.
    """
    w = arm_weights(data, scores, arm)
    return float(np.sum(w * (data.outcome - predictions)) / data.n)


def _weight_summary(data: Dataset, scores) -> dict:
    w1 = 1.0 / scores[data.treated]
    w0 = 1.0 / (1.0 - scores[data.control])
    return {
        "n": data.n,
        "n_treated": int(w1.size),
        "n_control": int(w0.size),
        "score_min": float(scores.min()),
        "score_max": float(scores.max()),
        "max_weight_treated": float(w1.max()),
        "max_weight_control": float(w0.max()),
    }


def _arm_masks(data: Dataset):
    t, c = data.treated, data.control
    if not t.any() or not c.any():
        raise ValueError("both treatment arms must be non-empty")
    return t, c


def _fit_pair(data: Dataset, features: Features, w_treated=None, w_control=None):
    t, c = _arm_masks(data)
    design = add_intercept(feature_matrix(data.covariates, features))
    y = data.outcome
    treated = fit_weighted_least_squares(
        design[t], y[t], None if w_treated is None else w_treated[t]
    )
    control = fit_weighted_least_squares(
        design[c], y[c], None if w_control is None else w_control[c]
    )
    return OutcomeModelPair(treated, control, features)


def _bias_fields(data: Dataset, scores, models: OutcomeModelPair, mu1=None, mu0=None):
    if mu1 is None:
        mu1, mu0 = models.predict(data.covariates)
    return (
        weighted_residual_mean(data, "treated", scores, mu1),
        weighted_residual_mean(data, "control", scores, mu0),
    )


def fit_outcome_models_or(data: Dataset, features: Features = "linear") -> OutcomeModelPair:
    """Unweighted least squares within each arm."""
    return _fit_pair(data, features)


def estimate_or(data: Dataset, features: Features = "linear", scores=None) -> ATEEstimate:
    """Outcome regression: per-arm OLS, predictions averaged over all rows.

    Passing ``scores`` only adds the weighted-residual bias diagnostics.
    """
    models = fit_outcome_models_or(data, features)
    mu1, mu0 = models.predict(data.covariates)
    bias1 = bias0 = None
    diag = {"features": features, "models": models.to_dict()}
    if scores is not None:
        scores = check_scores(scores, data.n)
        bias1, bias0 = _bias_fields(data, scores, models, mu1, mu0)
    return ATEEstimate("or", float(np.mean(mu1 - mu0)), bias1, bias0, diag)


def estimate_hajek(data: Dataset, scores) -> ATEEstimate:
    """Self-normalized inverse-propensity weighted difference in arm means."""
    scores = check_scores(scores, data.n)
    t, c = _arm_masks(data)
    y = data.outcome
    w1 = 1.0 / scores[t]
    w0 = 1.0 / (1.0 - scores[c])
    m1 = float(np.sum(w1 * y[t]) / np.sum(w1))
    m0 = float(np.sum(w0 * y[c]) / np.sum(w0))
    models = OutcomeModelPair(
        LinearCoefficients(m1, []), LinearCoefficients(m0, []), "intercept"
    )
    bias1, bias0 = _bias_fields(data, scores, models, np.full(data.n, m1), np.full(data.n, m0))
    diag = _weight_summary(data, scores)
    diag.update(mean_treated=m1, mean_control=m0)
    return ATEEstimate("hajek", m1 - m0, bias1, bias0, diag)


def estimate_ipwra(
    data: Dataset, scores, features: Features = "linear"
) -> tuple[ATEEstimate, OutcomeModelPair]:
    """Inverse-propensity weighted regression adjustment.

    The treated model is fit by least squares weighted with ``1/e`` on treated
    rows, the control model with ``1/(1-e)`` on control rows. Because each
    model has a free intercept, its weighted residuals sum to zero, so both
    reported bias terms vanish up to roundoff at these scores.
    """
    scores = check_scores(scores, data.n)
    w1 = 1.0 / scores
    w0 = 1.0 / (1.0 - scores)
    models = _fit_pair(data, features, w1, w0)
    mu1, mu0 = models.predict(data.covariates)
    bias1, bias0 = _bias_fields(data, scores, models, mu1, mu0)
    diag = _weight_summary(data, scores)
    diag.update(features=features, models=models.to_dict())
    return ATEEstimate("ipwra", float(np.mean(mu1 - mu0)), bias1, bias0, diag), models


def estimate_aipw(
    data: Dataset, scores, models: OutcomeModelPair, normalized: bool = True
) -> ATEEstimate:
    """Augmented IPW: mean model difference plus inverse-weighted residual corrections.

    With ``normalized=False`` each arm's correction is ``mean(Z (Y - mu1) / e)``
    over all N rows; models that predict zero then reduce the estimate to the
    Horvitz-Thompson difference. With ``normalized=True`` (default) the weighted
    residual sum is divided by the arm's total weight instead of N, which makes
    each arm, and so the estimate, invariant to an additive shift of its model.
    Both forms coincide with IPWRA when given IPWRA models and the same scores.
    """
    scores = check_scores(scores, data.n)
    mu1, mu0 = models.predict(data.covariates)
    w1 = arm_weights(data, scores, "treated")
    w0 = arm_weights(data, scores, "control")
    y = data.outcome
    if normalized:
        corr1 = np.sum(w1 * (y - mu1)) / np.sum(w1)
        corr0 = np.sum(w0 * (y - mu0)) / np.sum(w0)
    else:
        corr1 = np.sum(w1 * (y - mu1)) / data.n
        corr0 = np.sum(w0 * (y - mu0)) / data.n
    mean1 = float(np.mean(mu1) + corr1)
    mean0 = float(np.mean(mu0) + corr0)
    bias1, bias0 = _bias_fields(data, scores, models, mu1, mu0)
    diag = _weight_summary(data, scores)
    diag.update(
        normalized=normalized,
        features=models.features,
        correction_treated=float(corr1),
        correction_control=float(corr0),
    )
    return ATEEstimate("aipw", mean1 - mean0, bias1, bias0, diag)


def ate_risk(mu1, mu0, y1, y0) -> float:
    """Empirical ATE risk ``mean(((mu1 - Y(1)) - (mu0 - Y(0)))^2)``.

    Needs both potential outcomes, so it is only computable on simulated data.
    """
    mu1, mu0, y1, y0 = (np.asarray(a, dtype=float) for a in (mu1, mu0, y1, y0))
    return float(np.mean(((mu1 - y1) - (mu0 - y0)) ** 2))
