"""Joint Robust Estimator.

Both outcome models are fit together so that their importance-weighted biases
cancel across an ensemble of plausible propensity worlds. For linear outcome
models each world's bias is affine in the coefficients,

    B1_b(theta1) = c1_b - a1_b @ theta1,    B0_b(theta0) = c0_b - a0_b @ theta0,

so the robust loss ``mean_b (B1_b - B0_b)^2`` is a least-squares problem in the
stacked vector ``theta = (theta1, theta0)``. Minimizing it alone is
underdetermined (any pair with equal biases is optimal), so the solver adds a
ridge penalty ``lam * ||theta - theta_anchor||^2`` pulling toward the IPWRA fit
at the ensemble-mean scores. Large ``lam`` returns IPWRA; small ``lam`` trades
individual unbiasedness for bias cancellation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import IndeterminacyError
from .estimators import (
    ATEEstimate,
    Arm,
    Features,
    OutcomeModelPair,
    estimate_ipwra,
    feature_matrix,
    weighted_residual_mean,
)
from .propensity import DEFAULT_EPSILON, PropensityEnsemble
from .regression import LinearCoefficients, add_intercept, predict_linear, solve_spd

# eigenvalue ratio below which the unpenalized normal matrix counts as singular
_SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class JreConfig:
    """``anchor_strength`` is the absolute penalty ``lam``; ``None`` means
    ``relative_strength`` times the mean diagonal of the robust normal matrix."""

    anchor_strength: float | None = None
    relative_strength: float = 1e-6
    epsilon: float = DEFAULT_EPSILON
    b_count: int = 1000
    seed: int = 0
    features: Features = "linear"

    def __post_init__(self):
        if self.anchor_strength is not None and self.anchor_strength < 0:
            raise ValueError("anchor_strength must be non-negative")
        if self.relative_strength < 0:
            raise ValueError("relative_strength must be non-negative")
        if self.b_count < 1:
            raise ValueError("b_count must be at least 1")


@dataclass(frozen=True, eq=False)
class RobustLossTerms:
    a_treated: np.ndarray
    a_control: np.ndarray
    c_treated: np.ndarray
    c_control: np.ndarray

    @property
    def b_count(self) -> int:
        return self.c_treated.shape[0]

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """``(H, g)`` with per-world bias difference ``g - H @ theta``."""
        return (
            np.hstack([self.a_treated, -self.a_control]),
            self.c_treated - self.c_control,
        )

    def normal_system(self) -> tuple[np.ndarray, np.ndarray]:
        """Normal matrix and right-hand side of the unpenalized robust loss."""
        h, g = self.stacked()
        b = self.b_count
        return h.T @ h / b, h.T @ g / b


def _as_theta(coeffs) -> np.ndarray:
    if isinstance(coeffs, LinearCoefficients):
        return coeffs.as_vector()
    return np.asarray(coeffs, dtype=float)


def build_loss_terms(
    data: Dataset, score_matrix, features: Features = "linear"
) -> RobustLossTerms:
    """Decompose every world's treated and control bias into affine terms."""
    e = np.atleast_2d(np.asarray(score_matrix, dtype=float))
    if e.shape[1] != data.n:
        raise ValueError(f"ensemble has {e.shape[1]} units, dataset has {data.n}")
    design = add_intercept(feature_matrix(data.covariates, features))
    t = data.treated.astype(float)
    w1 = t / e
    w0 = (1.0 - t) / (1.0 - e)
    n = data.n
    y = data.outcome
    return RobustLossTerms(w1 @ design / n, w0 @ design / n, w1 @ y / n, w0 @ y / n)


def compute_bias_term(
    data: Dataset,
    arm: Arm,
    world_scores,
    coeffs: LinearCoefficients,
    features: Features = "linear",
) -> float:
    """Importance-weighted bias of one arm's model in one propensity world."""
    pred = predict_linear(coeffs, feature_matrix(data.covariates, features))
    return weighted_residual_mean(data, arm, world_scores, pred)


def world_biases(terms: RobustLossTerms, theta_treated, theta_control):
    """Per-world ``(B1_b, B0_b)`` vectors."""
    t1, t0 = _as_theta(theta_treated), _as_theta(theta_control)
    return terms.c_treated - terms.a_treated @ t1, terms.c_control - terms.a_control @ t0


def robust_loss(terms: RobustLossTerms, theta_treated, theta_control) -> float:
    b1, b0 = world_biases(terms, theta_treated, theta_control)
    return float(np.mean((b1 - b0) ** 2))


def robust_objective(terms: RobustLossTerms, theta, anchor, lam: float) -> float:
    theta, anchor = _as_theta(theta), _as_theta(anchor)
    p = theta.size // 2
    return robust_loss(terms, theta[:p], theta[p:]) + lam * float(
        np.sum((theta - anchor) ** 2)
    )


def robust_objective_gradient(terms: RobustLossTerms, theta, anchor, lam: float) -> np.ndarray:
    """Analytic gradient of :func:`robust_objective` in the stacked coefficients."""
    theta, anchor = _as_theta(theta), _as_theta(anchor)
    m, v = terms.normal_system()
    return 2.0 * (m @ theta - v) + 2.0 * lam * (theta - anchor)


def resolve_strength(terms: RobustLossTerms, config: JreConfig) -> float:
    if config.anchor_strength is not None:
        return float(config.anchor_strength)
    m, _ = terms.normal_system()
    return float(config.relative_strength * np.mean(np.diag(m)))


def solve_robust(terms: RobustLossTerms, anchor, lam: float) -> np.ndarray:
    """Closed-form minimizer of the anchored robust objective."""
    anchor = _as_theta(anchor)
    m, v = terms.normal_system()
    if lam == 0.0:
        eig = np.linalg.eigvalsh(m)
        if eig.max() <= 0 or eig.min() <= _SINGULAR_RTOL * eig.max():
            raise IndeterminacyError(
                f"robust loss over {terms.b_count} world(s) does not pin down "
                f"{m.shape[0]} coefficients; use a positive anchor strength (--lambda)"
            )
        return np.linalg.solve(m, v)
    return solve_spd(m + lam * np.eye(m.shape[0]), v + lam * anchor)


def fit_jre(
    data: Dataset,
    ensemble: PropensityEnsemble,
    anchor: OutcomeModelPair,
    config: JreConfig = JreConfig(),
) -> OutcomeModelPair:
    """Jointly refit both outcome models against the ensemble's robust loss."""
    terms = build_loss_terms(data, ensemble.score_matrix, anchor.features)
    lam = resolve_strength(terms, config)
    theta = solve_robust(terms, anchor.as_vector(), lam)
    return OutcomeModelPair.from_vector(theta, anchor.features)


def estimate_jre(
    data: Dataset, ensemble: PropensityEnsemble, config: JreConfig = JreConfig()
) -> ATEEstimate:
    """Anchor at IPWRA on the ensemble-mean scores, solve, and average the model gap."""
    if ensemble.n != data.n:
        raise ValueError(f"ensemble has {ensemble.n} units, dataset has {data.n}")
    anchor_est, anchor = estimate_ipwra(data, ensemble.mean_scores(), config.features)
    terms = build_loss_terms(data, ensemble.score_matrix, config.features)
    lam = resolve_strength(terms, config)
    theta_anchor = anchor.as_vector()
    theta = solve_robust(terms, theta_anchor, lam)
    models = OutcomeModelPair.from_vector(theta, config.features)

    p = theta.size // 2
    loss_anchor = robust_loss(terms, theta_anchor[:p], theta_anchor[p:])
    loss_solution = robust_loss(terms, theta[:p], theta[p:])
    b1, b0 = world_biases(terms, theta[:p], theta[p:])
    mu1, mu0 = models.predict(data.covariates)
    diag = {
        "lambda": lam,
        "b_count": ensemble.b_count,
        "epsilon": ensemble.clip,
        "features": config.features,
        "loss_anchor": loss_anchor,
        "loss_solution": loss_solution,
        "monotone": bool(loss_solution <= loss_anchor * (1 + 1e-9) + 1e-300),
        "anchor_tau_hat": anchor_est.tau_hat,
        "worlds_converged": int(np.count_nonzero(ensemble.converged)),
        "models": models.to_dict(),
    }
    return ATEEstimate(
        "jre", float(np.mean(mu1 - mu0)), float(np.mean(b1)), float(np.mean(b0)), diag
    )
