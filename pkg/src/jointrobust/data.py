"""Observed-data containers, CSV ingestion and assumption checks."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParseError, SchemaError, SizeError

EMPTY_ARM_TREATED = "empty-arm(treated)"
EMPTY_ARM_CONTROL = "empty-arm(control)"
NON_FINITE = "non-finite"
CONSTANT_COLUMN = "constant-column"


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed triples ``(X, Z, Y)`` with rows in their original order.

    Arrays are copied and made read-only on construction. Only structural
    invariants are enforced here; semantic problems such as an empty arm are
    reported by :func:`validate_dataset`.
    """

    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray

    def __post_init__(self):
        x = _frozen(self.covariates, float)
        if x.ndim == 1:
            x = _frozen(x.reshape(-1, 1), float)
        if x.ndim != 2:
            raise SizeError("covariates must be a 2-D matrix")
        z = np.asarray(self.treatment)
        if z.ndim != 1:
            raise SizeError("treatment must be a vector")
        if z.size and not np.all((z == 0) | (z == 1)):
            raise ParseError("treatment must contain only 0/1 values")
        y = _frozen(self.outcome, float)
        n = x.shape[0]
        if z.shape[0] != n or y.shape != (n,):
            raise SizeError(
                f"row counts differ: X has {n}, Z has {z.shape[0]}, Y has {y.shape[0]}"
            )
        if n < 2:
            raise SizeError(f"need at least 2 rows, got {n}")
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "treatment", _frozen(z, np.int64))
        object.__setattr__(self, "outcome", y)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    @property
    def treated(self) -> np.ndarray:
        """Boolean mask of treated rows."""
        return self.treatment == 1

    @property
    def control(self) -> np.ndarray:
        return self.treatment == 0


@dataclass(frozen=True)
class ValidationReport:
    n_treated: int
    n_control: int
    issues: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues


@dataclass(frozen=True)
class Schema:
    """Column names to read. ``covariates=None`` takes every other column in file order."""

    covariates: tuple[str, ...] | None = None
    treatment: str = "z"
    outcome: str = "y"

    def header_for(self, d: int) -> list[str]:
        names = list(self.covariates) if self.covariates else [f"x{j + 1}" for j in range(d)]
        if len(names) != d:
            raise SchemaError(f"schema names {len(names)} covariates, data has {d}")
        return names + [self.treatment, self.outcome]


DEFAULT_SCHEMA = Schema()


def _parse_float(token: str, row: int, column: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(
            f"row {row}: column {column!r} has non-numeric value {token!r}", row=row
        ) from None


def load_dataset(path: str | Path, schema: Schema = DEFAULT_SCHEMA) -> Dataset:
    """Read a headered CSV into a :class:`Dataset`, preserving row order.

    Row indices in error messages count data rows from 1 (the header is row 0).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SizeError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(cell.strip() for cell in r)]

    missing = [c for c in (schema.treatment, schema.outcome) if c not in header]
    if schema.covariates is not None:
        missing += [c for c in schema.covariates if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
    cov_names = (
        list(schema.covariates)
        if schema.covariates is not None
        else [h for h in header if h not in (schema.treatment, schema.outcome)]
    )
    if not cov_names:
        raise SchemaError(f"{path}: no covariate columns")
    cov_idx = [header.index(c) for c in cov_names]
    z_idx = header.index(schema.treatment)
    y_idx = header.index(schema.outcome)

    if len(rows) < 2:
        raise SizeError(f"{path}: need at least 2 data rows, got {len(rows)}")

    x = np.empty((len(rows), len(cov_idx)))
    z = np.empty(len(rows), dtype=np.int64)
    y = np.empty(len(rows))
    for i, cells in enumerate(rows):
        row = i + 1
        if len(cells) != len(header):
            raise ParseError(
                f"row {row}: expected {len(header)} fields, got {len(cells)}", row=row
            )
        for j, k in enumerate(cov_idx):
            x[i, j] = _parse_float(cells[k].strip(), row, header[k])
        zval = _parse_float(cells[z_idx].strip(), row, schema.treatment)
        if zval not in (0.0, 1.0):
            raise ParseError(
                f"row {row}: treatment must be 0 or 1, got {cells[z_idx].strip()!r}",
                row=row,
            )
        z[i] = int(zval)
        y[i] = _parse_float(cells[y_idx].strip(), row, schema.outcome)
    return Dataset(x, z, y)


def write_dataset(
    data: Dataset, path: str | Path, schema: Schema = DEFAULT_SCHEMA
) -> None:
    """Write ``data`` as CSV; floats use ``repr`` so a reload is exact."""
    header = schema.header_for(data.d)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for xi, zi, yi in zip(data.covariates, data.treatment, data.outcome):
            w.writerow([repr(float(v)) for v in xi] + [int(zi), repr(float(yi))])


def write_columns(path: str | Path, columns: dict[str, Sequence[float]]) -> None:
    """Write named equal-length float columns as CSV (used for truth sidecars)."""
    names = list(columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*(columns[k] for k in names)):
            w.writerow([repr(float(v)) for v in row])


def validate_dataset(data: Dataset) -> ValidationReport:
    """Report violated diagnostics without raising or mutating ``data``."""
    n_treated = int(np.count_nonzero(data.treatment == 1))
    n_control = data.n - n_treated
    issues = []
    if n_treated == 0:
        issues.append(EMPTY_ARM_TREATED)
    if n_control == 0:
        issues.append(EMPTY_ARM_CONTROL)
    if not (np.all(np.isfinite(data.covariates)) and np.all(np.isfinite(data.outcome))):
        issues.append(NON_FINITE)
    x = data.covariates
    with np.errstate(invalid="ignore"):
        constant = np.all(x == x[0], axis=0)
    if np.any(constant):
        issues.append(CONSTANT_COLUMN)
    return ValidationReport(n_treated, n_control, tuple(issues))


def assert_estimable(data: Dataset) -> None:
    """Raise if the dataset cannot support any estimator (empty arm or non-finite)."""
    report = validate_dataset(data)
    fatal = [i for i in report.issues if i != CONSTANT_COLUMN]
    if fatal:
        raise SizeError("dataset not estimable: " + ", ".join(fatal))


__all__ = [
    "Dataset",
    "ValidationReport",
    "Schema",
    "DEFAULT_SCHEMA",
    "load_dataset",
    "write_dataset",
    "write_columns",
    "validate_dataset",
    "assert_estimable",
]
