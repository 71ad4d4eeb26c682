"""Data-generating process and Monte Carlo benchmark harness."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .data import Dataset
from .errors import JointRobustError
from .estimators import (
    Features,
    estimate_aipw,
    estimate_hajek,
    estimate_ipwra,
    estimate_or,
    fit_outcome_models_or,
)
from .jre import JreConfig, estimate_jre
from .propensity import bootstrap_propensity_ensemble, clip_scores, fit_propensity
from .regression import IrlsConfig, sigmoid
from .seeding import derive_seed

TRUE_TAU = 2.0
ESTIMATORS = ("or", "hajek", "ipwra", "aipw", "jre")
DISPLAY = {"or": "OR", "hajek": "Hajek", "ipwra": "IPWRA", "aipw": "AIPW", "jre": "JRE"}
# (baseline, challenger) pairs reported as percentage MSE reductions
REDUCTION_PAIRS = (("ipwra", "jre"), ("aipw", "jre"))

# salt for the ensemble seed so it never collides with the dataset stream
_ENSEMBLE_SALT = 0x4A5245


@dataclass(frozen=True)
class DgpConfig:
    n: int
    t: float = 0.0
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got {self.t}")
        if self.n < 10:
            raise ValueError(f"n must be at least 10, got {self.n}")
        if not self.noise_sd > 0:
            raise ValueError("noise_sd must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True, eq=False)
class SimulatedDataset:
    observed: Dataset
    y1: np.ndarray
    y0: np.ndarray
    true_scores: np.ndarray
    true_tau: float = TRUE_TAU


def generate_dataset(config: DgpConfig) -> SimulatedDataset:
    """Five standard-normal covariates, logistic assignment on X1 - X2, and an
    outcome surface that blends from linear (t=0) to quadratic with a
    heterogeneous effect (t=1). One noise draw per unit is shared by both
    surfaces; the population ATE is 2 for every t."""
    rng = np.random.default_rng(config.seed)
    n, t = config.n, config.t
    x = rng.standard_normal((n, 5))
    x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
    e = sigmoid(0.5 * x1 - 0.5 * x2)
    z = (rng.random(n) < e).astype(np.int64)
    eps = config.noise_sd * rng.standard_normal(n)
    y0_linear = x1 + x2 + eps
    y0_quad = x1 + x2 + 0.5 * (x1**2 + x2**2) + eps
    y0 = (1.0 - t) * y0_linear + t * y0_quad
    y1 = y0 + 2.0 + t * (0.5 * x3 + 0.2 * x1 * x2)
    y = z * y1 + (1 - z) * y0
    return SimulatedDataset(Dataset(x, z, y), y1, y0, e)


def run_replication(
    config: DgpConfig,
    b_count: int,
    jre: JreConfig = JreConfig(),
    estimators: Iterable[str] = ESTIMATORS,
    features: Features = "linear",
    irls: IrlsConfig = IrlsConfig(),
    oracle_scores: bool = False,
) -> dict[str, float]:
    """One dataset, every requested estimator on the same rows and scores.

    AIPW uses the outcome-regression models and the point propensity scores.
    A failed estimator is recorded as NaN instead of aborting the replication.
    ``oracle_scores`` swaps the fitted point scores for the true ones.
    """
    wanted = list(dict.fromkeys(estimators))
    unknown = set(wanted) - set(ESTIMATORS)
    if unknown:
        raise ValueError(f"unknown estimator(s): {sorted(unknown)}")
    sim = generate_dataset(config)
    data = sim.observed
    out: dict[str, float] = {}
    try:
        raw = sim.true_scores if oracle_scores else fit_propensity(data, irls).scores
        scores = clip_scores(raw, jre.epsilon)
    except (JointRobustError, ValueError, ArithmeticError):
        return {name: math.nan for name in wanted}

    def attempt(name, fn):
        try:
            out[name] = float(fn())
        except (JointRobustError, ValueError, ArithmeticError, np.linalg.LinAlgError):
            out[name] = math.nan

    for name in wanted:
        if name == "or":
            attempt(name, lambda: estimate_or(data, features).tau_hat)
        elif name == "hajek":
            attempt(name, lambda: estimate_hajek(data, scores).tau_hat)
        elif name == "ipwra":
            attempt(name, lambda: estimate_ipwra(data, scores, features)[0].tau_hat)
        elif name == "aipw":
            attempt(
                name,
                lambda: estimate_aipw(data, scores, fit_outcome_models_or(data, features)).tau_hat,
            )
        elif name == "jre":

            def run_jre():
                ens = bootstrap_propensity_ensemble(
                    data,
                    b_count,
                    derive_seed(config.seed, _ENSEMBLE_SALT),
                    irls,
                    jre.epsilon,
                )
                cfg = replace(jre, b_count=b_count, features=features)
                return estimate_jre(data, ens, cfg).tau_hat

            attempt(name, run_jre)
    return out


@dataclass(frozen=True)
class EstimatorStats:
    mse: float
    bias_sq: float
    variance: float
    failures: int
    mean: float
    mc_se: float

    @classmethod
    def from_estimates(cls, values, truth: float = TRUE_TAU) -> "EstimatorStats":
        v = np.asarray(values, dtype=float)
        ok = v[np.isfinite(v)]
        failures = int(v.size - ok.size)
        if ok.size == 0:
            return cls(math.nan, math.nan, math.nan, failures, math.nan, math.nan)
        err = ok - truth
        mean = float(ok.mean())
        mse = float(np.mean(err**2))
        mc_se = float(np.std(err**2, ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else math.nan
        return cls(
            mse=mse,
            bias_sq=float((mean - truth) ** 2),
            variance=float(np.mean((ok - mean) ** 2)),
            failures=failures,
            mean=mean,
            mc_se=mc_se,
        )


@dataclass(frozen=True)
class CellResult:
    n: int
    t: float
    stats: dict[str, EstimatorStats]
    estimates: dict[str, list[float]] = field(default_factory=dict, compare=False)


def reduction_percent(baseline_mse: float, new_mse: float) -> float:
    """Percentage MSE decrease of ``new`` relative to ``baseline``."""
    return (baseline_mse - new_mse) / baseline_mse * 100.0


@dataclass
class SimulationReport:
    cells: list[CellResult]
    provenance: dict = field(default_factory=dict)

    def cell(self, n: int, t: float) -> CellResult:
        for c in self.cells:
            if c.n == n and c.t == t:
                return c
        raise KeyError((n, t))

    def reductions(self) -> list[dict]:
        out = []
        for c in sorted(self.cells, key=lambda c: (c.n, c.t)):
            for base, new in REDUCTION_PAIRS:
                if base in c.stats and new in c.stats:
                    out.append(
                        {
                            "n": c.n,
                            "t": c.t,
                            "baseline": base,
                            "estimator": new,
                            "reduction_pct": reduction_percent(
                                c.stats[base].mse, c.stats[new].mse
                            ),
                        }
                    )
        return out


def _replicate(args):
    config, b_count, jre, estimators, features, oracle = args
    return run_replication(config, b_count, jre, estimators, features, oracle_scores=oracle)


def run_monte_carlo(
    n_values: Sequence[int],
    t_values: Sequence[float],
    reps: int,
    b_count: int,
    jre: JreConfig = JreConfig(),
    base_seed: int = 0,
    estimators: Iterable[str] = ESTIMATORS,
    noise_sd: float = 1.0,
    features: Features = "linear",
    workers: int = 1,
    fixed_seed: bool = False,
    oracle_scores: bool = False,
) -> SimulationReport:
    """Run ``reps`` replications for every ``(n, t)`` cell.

    Replication ``r`` of cell ``(n, t_k)`` is seeded from
    ``(base_seed, n, k, r)``, so any cell can be rerun on its own and results
    do not depend on ``workers``. ``fixed_seed`` reuses replication 0's seed for
    every replication (a test hook that zeroes the variance).
    """
    if reps < 2:
        raise ValueError("reps must be at least 2")
    estimators = tuple(dict.fromkeys(estimators))
    jobs, keys = [], []
    for n in n_values:
        for k, t in enumerate(t_values):
            for r in range(reps):
                seed = derive_seed(base_seed, n, k, 0 if fixed_seed else r)
                jobs.append((DgpConfig(n, t, noise_sd, seed), b_count, jre, estimators, features,
                             oracle_scores))
                keys.append((n, t))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, jobs, chunksize=max(1, len(jobs) // (8 * workers))))
    else:
        results = [_replicate(j) for j in jobs]

    grouped: dict[tuple, list[dict]] = {}
    for key, res in zip(keys, results):
        grouped.setdefault(key, []).append(res)
    cells = []
    for (n, t), rows in grouped.items():
        est = {name: [row[name] for row in rows] for name in estimators}
        stats = {name: EstimatorStats.from_estimates(vals) for name, vals in est.items()}
        cells.append(CellResult(n, t, stats, est))
    provenance = {
        "base_seed": base_seed,
        "n_values": list(n_values),
        "t_values": list(t_values),
        "reps": reps,
        "b_count": b_count,
        "lambda": jre.anchor_strength,
        "relative_lambda": jre.relative_strength,
        "epsilon": jre.epsilon,
        "noise_sd": noise_sd,
        "features": features,
        "estimators": list(estimators),
        "aipw_outcome_models": "or",
        "paired_datasets": True,
        "fixed_seed": fixed_seed,
        "oracle_scores": oracle_scores,
        "true_tau": TRUE_TAU,
    }
    return SimulationReport(cells, provenance)


CSV_COLUMNS = ("n", "t", "estimator", "mse", "bias_sq", "variance", "failures")


def _ordered(report: SimulationReport):
    for c in sorted(report.cells, key=lambda c: (c.n, c.t)):
        names = [e for e in ESTIMATORS if e in c.stats]
        yield c, names


def _fmt(v: float, digits: int = 4) -> str:
    return "nan" if not math.isfinite(v) else f"{v:.{digits}f}"


def summarize_report(report: SimulationReport, fmt: str = "markdown") -> str:
    """Render ``report`` as ``csv``, ``json`` or ``markdown``, sorted by ``(n, t)``."""
    if not report.cells:
        raise ValueError("empty report")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for c, names in _ordered(report):
            for name in names:
                s = c.stats[name]
                w.writerow([c.n, repr(c.t), name, repr(s.mse), repr(s.bias_sq),
                            repr(s.variance), s.failures])
        return buf.getvalue()
    if fmt == "json":
        cells = [
            {"n": c.n, "t": c.t, "estimators": {name: asdict(c.stats[name]) for name in names}}
            for c, names in _ordered(report)
        ]
        payload = {
            "cells": cells,
            "reductions": report.reductions(),
            "provenance": report.provenance,
        }
        return json.dumps(_nan_to_none(payload), indent=2, sort_keys=True) + "\n"
    if fmt == "markdown":
        return _markdown(report)
    raise ValueError(f"unknown format {fmt!r}")


def _nan_to_none(obj):
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _markdown(report: SimulationReport) -> str:
    present = [e for e in ESTIMATORS if any(e in c.stats for c in report.cells)]
    table1 = "ipwra" in present and "jre" in present
    lead = ["ipwra", "jre"] if table1 else []
    rest = [e for e in present if e not in lead]
    header = ["N", "t"] + [f"{DISPLAY[e]} MSE" for e in lead]
    if table1:
        header.append("Reduction (%)")
    header += [f"{DISPLAY[e]} MSE" for e in rest]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for c, _ in _ordered(report):
        row = [str(c.n), f"{c.t:g}"]
        get = lambda e: c.stats[e].mse if e in c.stats else math.nan  # noqa: E731
        row += [_fmt(get(e)) for e in lead]
        if table1:
            row.append(_fmt(reduction_percent(get("ipwra"), get("jre")), 2))
        row += [_fmt(get(e)) for e in rest]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def read_report_csv(text: str) -> list[dict]:
    """Parse :func:`summarize_report` CSV output back into typed rows."""
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        rows.append(
            {
                "n": int(r["n"]),
                "t": float(r["t"]),
                "estimator": r["estimator"],
                "mse": float(r["mse"]),
                "bias_sq": float(r["bias_sq"]),
                "variance": float(r["variance"]),
                "failures": int(r["failures"]),
            }
        )
    return rows
