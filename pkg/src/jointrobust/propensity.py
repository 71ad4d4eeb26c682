"""Propensity score estimation: a point logistic fit and a bootstrap ensemble."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import DegenerateResampleError, ParseError
from .regression import (
    IrlsConfig,
    LogisticCoefficients,
    add_intercept,
    fit_logistic,
    irls_batch,
    predict_logistic,
    sigmoid,
)
from .seeding import derive_seed

DEFAULT_EPSILON = 0.01
MAX_REDRAWS = 100


@dataclass(frozen=True, eq=False)
class PropensityFit:
    coefficients: LogisticCoefficients
    scores: np.ndarray
    converged: bool


@dataclass(frozen=True, eq=False)
class PropensityEnsemble:
    """Propensity scores of ``B`` bootstrap worlds evaluated on the original rows.

    ``score_matrix[b, i]`` is world ``b``'s score for unit ``i``; ``seeds[b]``
    is the 64-bit seed that produced the accepted resample of world ``b``.
    """

    score_matrix: np.ndarray
    seeds: np.ndarray
    clip: float
    converged: np.ndarray = field(default=None)

    def __post_init__(self):
        m = np.array(self.score_matrix, dtype=float, ndmin=2)
        m.setflags(write=False)
        object.__setattr__(self, "score_matrix", m)
        if self.converged is None:
            object.__setattr__(self, "converged", np.ones(m.shape[0], dtype=bool))

    @property
    def b_count(self) -> int:
        return self.score_matrix.shape[0]

    @property
    def n(self) -> int:
        return self.score_matrix.shape[1]

    def mean_scores(self) -> np.ndarray:
        return self.score_matrix.mean(axis=0)

    @classmethod
    def from_scores(cls, scores, b_count: int = 1, clip: float = 0.0) -> "PropensityEnsemble":
        """Ensemble whose worlds all equal ``scores`` (a degenerate, no-uncertainty belief)."""
        row = np.asarray(scores, dtype=float)
        return cls(np.tile(row, (b_count, 1)), np.zeros(b_count, dtype=np.uint64), clip)


def clip_scores(scores, epsilon: float) -> np.ndarray:
    """Project scores into ``[epsilon, 1 - epsilon]``; ``epsilon = 0`` is the identity."""
    if not 0.0 <= epsilon < 0.5:
        raise ValueError("epsilon must lie in [0, 0.5)")
    scores = np.asarray(scores, dtype=float)
    if epsilon == 0.0:
        return scores.copy()
    return np.minimum(np.maximum(scores, epsilon), 1.0 - epsilon)


def fit_propensity(data: Dataset, config: IrlsConfig = IrlsConfig()) -> PropensityFit:
    coeffs = fit_logistic(add_intercept(data.covariates), data.treatment, config)
    scores = predict_logistic(coeffs, data.covariates)
    return PropensityFit(coeffs, scores, coeffs.converged)


def _draw_counts(n: int, treated: np.ndarray, seed: int, world: int):
    for attempt in range(MAX_REDRAWS + 1):
        world_seed = derive_seed(seed, world) if attempt == 0 else derive_seed(seed, world, attempt)
        idx = np.random.default_rng(world_seed).integers(0, n, size=n)
        counts = np.bincount(idx, minlength=n)
        drawn_treated = counts[treated].sum()
        if 0 < drawn_treated < n:
            return counts, world_seed
    raise DegenerateResampleError(
        f"world {world}: {MAX_REDRAWS} redraws all produced a single treatment class"
    )


def bootstrap_propensity_ensemble(
    data: Dataset,
    b_count: int,
    seed: int,
    config: IrlsConfig = IrlsConfig(),
    epsilon: float = DEFAULT_EPSILON,
    resample: bool = True,
    chunk_size: int = 250,
) -> PropensityEnsemble:
    """Nonparametric bootstrap of the logistic propensity model.

    Each world draws ``N`` rows with replacement from a seed mixed from
    ``(seed, world)``, refits the logistic model on that resample and predicts
    on the original rows. Fitting on the resample is done as a fit on the
    original rows weighted by draw counts, which is the same objective.
    ``resample=False`` uses every row once (a test hook: each world then equals
    :func:`fit_propensity`).
    """
    if b_count < 1:
        raise ValueError("b_count must be at least 1")
    n = data.n
    treated = data.treated
    counts = np.empty((b_count, n))
    seeds = np.zeros(b_count, dtype=np.uint64)
    for b in range(b_count):
        if resample:
            counts[b], seeds[b] = _draw_counts(n, treated, seed, b)
        else:
            counts[b] = 1.0
            seeds[b] = derive_seed(seed, b)

    design = add_intercept(data.covariates)
    labels = data.treatment.astype(float)
    scores = np.empty((b_count, n))
    converged = np.empty(b_count, dtype=bool)
    for start in range(0, b_count, chunk_size):
        stop = min(start + chunk_size, b_count)
        beta, conv, _, _ = irls_batch(design, labels, counts[start:stop], config)
        scores[start:stop] = sigmoid(beta @ design.T)
        converged[start:stop] = conv
    return PropensityEnsemble(clip_scores(scores, epsilon), seeds, epsilon, converged)


def write_ensemble(ensemble: PropensityEnsemble, path: str | Path) -> None:
    """Dump the score matrix as CSV, one world per row prefixed by its index."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["world"] + [f"u{i + 1}" for i in range(ensemble.n)])
        for b, row in enumerate(ensemble.score_matrix):
            w.writerow([b] + [repr(float(v)) for v in row])


def read_ensemble(path: str | Path, clip: float = 0.0) -> PropensityEnsemble:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = []
        for i, cells in enumerate(reader):
            if int(cells[0]) != i:
                raise ParseError(f"row {i + 1}: world index {cells[0]} out of order", row=i + 1)
            rows.append([float(v) for v in cells[1:]])
    return PropensityEnsemble(np.array(rows), np.zeros(len(rows), dtype=np.uint64), clip)
