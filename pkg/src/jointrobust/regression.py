"""Weighted least squares and IRLS logistic regression.

Callers always pass a design matrix whose first column is all ones; nothing
in this module adds an intercept on its own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ClassError, RankError

# Cholesky pivots smaller than this (relative to the largest) count as singular.
_PIVOT_RTOL = 1e-7
_JITTER = 1e-8


@dataclass(frozen=True)
class LinearCoefficients:
    intercept: float
    slopes: np.ndarray

    def __post_init__(self):
        slopes = np.array(self.slopes, dtype=float).reshape(-1)
        slopes.setflags(write=False)
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "slopes", slopes)

    @classmethod
    def from_vector(cls, beta) -> "LinearCoefficients":
        beta = np.asarray(beta, dtype=float)
        return cls(beta[0], beta[1:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate(([self.intercept], self.slopes))

    def shifted(self, c: float) -> "LinearCoefficients":
        """Same model with ``c`` added to every prediction."""
        return LinearCoefficients(self.intercept + c, self.slopes)

    def to_dict(self) -> dict:
        return {"intercept": self.intercept, "slopes": self.slopes.tolist()}


@dataclass(frozen=True)
class LogisticCoefficients(LinearCoefficients):
    converged: bool = True
    iterations: int = 0
    gradient_norm: float = 0.0

    def to_dict(self) -> dict:
        out = super().to_dict()
        out.update(
            converged=self.converged,
            iterations=self.iterations,
            gradient_norm=self.gradient_norm,
        )
        return out


@dataclass(frozen=True)
class IrlsConfig:
    max_iterations: int = 100
    gradient_tolerance: float = 1e-8
    ridge: float = 1e-6

    def __post_init__(self):
        if self.gradient_tolerance <= 0:
            raise ValueError("gradient_tolerance must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


def add_intercept(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return np.column_stack([np.ones(x.shape[0]), x])


def _cholesky_or_none(a: np.ndarray):
    try:
        factor = linalg.cho_factor(a, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return None
    pivots = np.abs(np.diag(factor[0]))
    if not np.all(np.isfinite(pivots)) or pivots.min() <= _PIVOT_RTOL * pivots.max():
        return None
    return factor


def solve_spd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive (semi)definite ``a``.

    Retries once with a diagonal jitter of ``1e-8 * mean(diag(a))`` before
    giving up with :class:`RankError`.
    """
    factor = _cholesky_or_none(a)
    if factor is None:
        scale = float(np.mean(np.diag(a)))
        jittered = a + _JITTER * (scale if scale > 0 else 1.0) * np.eye(a.shape[0])
        factor = _cholesky_or_none(jittered)
        if factor is None:
            raise RankError("normal matrix is singular even after ridge jitter")
    return linalg.cho_solve(factor, b, check_finite=False)


def fit_weighted_least_squares(design, response, weights=None) -> LinearCoefficients:
    """Minimize ``sum_i w_i (y_i - design_i @ beta)^2`` through the normal equations."""
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    if design.ndim != 2 or design.shape[0] != response.shape[0]:
        raise ValueError("design must be N x p and match the response length")
    if weights is None:
        weights = np.ones(design.shape[0])
    weights = np.asarray(weights, dtype=float)
    if weights.shape != response.shape:
        raise ValueError("weights must match the response length")
    if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
        raise ValueError("weights must be finite and strictly positive")
    wd = design * weights[:, None]
    beta = solve_spd(design.T @ wd, wd.T @ response)
    return LinearCoefficients.from_vector(beta)


def predict_linear(coeffs: LinearCoefficients, covariates) -> np.ndarray:
    x = np.asarray(covariates, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != coeffs.slopes.shape[0]:
        raise ValueError(
            f"covariates have {x.shape[1]} columns, model has {coeffs.slopes.shape[0]} slopes"
        )
    return coeffs.intercept + x @ coeffs.slopes


def sigmoid(u):
    """Logistic function, evaluated without overflow for large ``|u|``."""
    u = np.asarray(u, dtype=float)
    e = np.exp(-np.abs(u))
    out = np.where(u >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


class _LinkState:
    """Linear predictor ``eta`` with ``exp(-|eta|)`` cached for reuse."""

    __slots__ = ("eta", "e")

    def __init__(self, eta):
        self.eta = eta
        self.e = np.exp(-np.abs(eta))

    def prob(self):
        return np.where(self.eta >= 0, 1.0 / (1.0 + self.e), self.e / (1.0 + self.e))

    def objective(self, beta, labels, counts, ridge, n):
        # log(1 + exp(eta)) = max(eta, 0) + log1p(exp(-|eta|))
        nll = np.maximum(self.eta, 0.0) + np.log1p(self.e) - labels * self.eta
        return (counts * nll).sum(axis=1) / n + 0.5 * ridge * np.einsum("bp,bp->b", beta, beta)


def irls_batch(design, labels, counts, config: IrlsConfig = IrlsConfig()):
    """Fit one ridge-penalized logistic regression per row of ``counts``.

    ``counts[b, i]`` is the multiplicity of row ``i`` in problem ``b`` (a
    bootstrap resample is the same as the original rows weighted by how often
    each was drawn). Each problem minimizes the count-weighted mean negative
    log-likelihood plus ``ridge / 2 * ||beta||^2`` by damped Newton steps from
    zero. Problems stop independently once their gradient max-norm is within
    tolerance, so a problem's result does not depend on its neighbours.

    Returns ``(beta, converged, iterations, gradient_norm)`` with leading
    dimension ``B``.
    """
    design = np.asarray(design, dtype=float)
    labels = np.asarray(labels, dtype=float)
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    n, p = design.shape
    n_problems = counts.shape[0]
    ridge = config.ridge
    outer = (design[:, :, None] * design[:, None, :]).reshape(n, p * p)
    eye = np.eye(p)

    beta = np.zeros((n_problems, p))
    converged = np.zeros(n_problems, dtype=bool)
    iterations = np.zeros(n_problems, dtype=np.int64)
    gnorm = np.full(n_problems, np.inf)
    active = np.arange(n_problems)
    state = _LinkState(np.zeros((n_problems, n)))
    f = state.objective(beta, labels, counts, ridge, n)

    for it in range(config.max_iterations + 1):
        b_act = beta[active]
        c_act = counts[active]
        prob = state.prob()
        grad = (c_act * (prob - labels)) @ design / n + ridge * b_act
        g = np.abs(grad).max(axis=1)
        gnorm[active] = g
        done = g <= config.gradient_tolerance
        converged[active[done]] = True
        if it == config.max_iterations or done.all():
            break
        keep = ~done
        active, b_act, c_act, f = active[keep], b_act[keep], c_act[keep], f[keep]
        grad, prob, eta = grad[keep], prob[keep], state.eta[keep]
        iterations[active] += 1

        hess = ((c_act * prob * (1.0 - prob)) @ outer / n).reshape(-1, p, p) + ridge * eye
        step = np.linalg.solve(hess, grad[:, :, None])[:, :, 0]
        decrease = np.einsum("bp,bp->b", grad, step)
        d_eta = step @ design.T
        t = np.ones(active.size)
        trial_beta = b_act - step
        state = _LinkState(eta - d_eta)
        f_new = state.objective(trial_beta, labels, c_act, ridge, n)
        pending = np.arange(active.size)
        for _ in range(40):
            bad = f_new[pending] > f[pending] - 1e-4 * t[pending] * decrease[pending]
            # at the optimum roundoff can block any decrease; accept the step
            bad &= decrease[pending] > 1e-14 * np.maximum(1.0, np.abs(f[pending]))
            pending = pending[bad]
            if pending.size == 0:
                break
            t[pending] *= 0.5
            trial_beta[pending] = b_act[pending] - t[pending, None] * step[pending]
            sub = _LinkState(eta[pending] - t[pending, None] * d_eta[pending])
            state.eta[pending], state.e[pending] = sub.eta, sub.e
            f_new[pending] = sub.objective(
                trial_beta[pending], labels, c_act[pending], ridge, n
            )
        beta[active] = trial_beta
        f = f_new
    return beta, converged, iterations, gnorm


def fit_logistic(design, labels, config: IrlsConfig = IrlsConfig()) -> LogisticCoefficients:
    """Ridge-penalized logistic regression by IRLS.

    Non-convergence is reported through ``converged`` rather than raised.
    """
    design = np.asarray(design, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if design.ndim != 2 or design.shape[0] != labels.shape[0]:
        raise ValueError("design must be N x p and match the label length")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0/1")
    if labels.min() == labels.max():
        raise ClassError("logistic fit needs both label classes")
    beta, conv, iters, gnorm = irls_batch(design, labels, np.ones((1, labels.size)), config)
    return LogisticCoefficients(
        beta[0, 0],
        beta[0, 1:],
        converged=bool(conv[0]),
        iterations=int(iters[0]),
        gradient_norm=float(gnorm[0]),
    )


def predict_logistic(coeffs: LinearCoefficients, covariates) -> np.ndarray:
    return sigmoid(predict_linear(coeffs, covariates))
