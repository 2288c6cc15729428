"""Observational data: ingestion, validation and conservative imputation.

A dataset holds one row per subject with baseline covariates ``W``, a binary
treatment ``A``, a follow-up indicator ``C`` (1 = endpoint observed), the
primary binary outcome ``Y`` and an optional secondary outcome ``Z``. Outcomes
are only defined for rows with ``C = 1``; they are stored as ``NaN`` otherwise.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

MISSING_TOKENS = frozenset({"", "NA"})


class DatasetError(ValueError):
    """Base class for problems with input data."""


class SchemaError(DatasetError):
    """A column named by the mapping is absent from the file."""


class ValidationError(DatasetError):
    """A cell holds a value outside its admissible range."""

    def __init__(self, message: str, row: Optional[int] = None):
        super().__init__(message)
        self.row = row


class DegenerateDataError(DatasetError):
    """The data cannot support the analysis (e.g. no treated rows)."""


@dataclass(frozen=True)
class ColumnMapping:
    treatment: str = "A"
    censoring: str = "C"
    outcome: str = "Y"
    covariates: tuple[str, ...] = ()
    secondary: Optional[str] = None

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnMapping":
        return cls(
            treatment=d.get("treatment", "A"),
            censoring=d.get("censoring", "C"),
            outcome=d.get("outcome", "Y"),
            covariates=tuple(d.get("covariates", ())),
            secondary=d.get("secondary"),
        )

    def to_dict(self) -> dict:
        return {
            "treatment": self.treatment,
            "censoring": self.censoring,
            "outcome": self.outcome,
            "covariates": list(self.covariates),
            "secondary": self.secondary,
        }


@dataclass(frozen=True)
class Observation:
    w: tuple[float, ...]
    a: int
    c: int
    y: Optional[int] = None
    z: Optional[int] = None


def _readonly(x: np.ndarray) -> np.ndarray:
    x = np.array(x, copy=True)
    x.setflags(write=False)
    return x


@dataclass(frozen=True)
class ObservationalDataset:
    """Immutable column store for rows ``O = (W, A, C, Y, Z)``.

    Parameters
    ----------
    w : ndarray, shape (n, p)
    a, c : ndarray of {0, 1}, shape (n,)
    y, z : ndarray of float, shape (n,)
        Outcome values; ``NaN`` wherever ``c == 0`` (and for ``z`` where absent).
    covariate_names : tuple of str, length p
    """

    w: np.ndarray
    a: np.ndarray
    c: np.ndarray
    y: np.ndarray
    z: np.ndarray
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        n = len(np.asarray(self.a))
        if w.ndim == 1 and w.size == 0:
            w = w.reshape(n, 0)
        if w.ndim != 2 or w.shape[0] != n:
            raise ValidationError(f"covariate matrix must have shape (n, p); got {w.shape}")
        a = np.asarray(self.a, dtype=np.int8)
        c = np.asarray(self.c, dtype=np.int8)
        y = np.asarray(self.y, dtype=float)
        z = np.full(n, np.nan) if self.z is None else np.asarray(self.z, dtype=float)
        names = tuple(self.covariate_names) or tuple(f"w{j + 1}" for j in range(w.shape[1]))
        if len(names) != w.shape[1]:
            raise ValidationError("covariate_names length does not match covariate dimension")
        for arr, label in ((y, "outcome"), (z, "secondary outcome")):
            if arr.shape != (n,):
                raise ValidationError(f"{label} vector has wrong length")
        _check_binary(a, "treatment")
        _check_binary(c, "censoring")
        obs = c == 1
        bad = np.flatnonzero(obs & np.isnan(y))
        if bad.size:
            raise ValidationError(f"row {bad[0]}: outcome missing for an uncensored row", row=int(bad[0]))
        bad = np.flatnonzero(~obs & ~np.isnan(y))
        if bad.size:
            raise ValidationError(f"row {bad[0]}: outcome present for a censored row", row=int(bad[0]))
        bad = np.flatnonzero(~obs & ~np.isnan(z))
        if bad.size:
            raise ValidationError(f"row {bad[0]}: secondary outcome present for a censored row", row=int(bad[0]))
        for arr, label in ((y, "outcome"), (z, "secondary outcome")):
            bad = np.flatnonzero(~np.isnan(arr) & (arr != 0) & (arr != 1))
            if bad.size:
                raise ValidationError(f"row {bad[0]}: {label} must be 0 or 1", row=int(bad[0]))
        if not np.all(np.isfinite(w)):
            r = int(np.flatnonzero(~np.all(np.isfinite(w), axis=1))[0])
            raise ValidationError(f"row {r}: covariates must be finite", row=r)
        if n == 0:
            raise DegenerateDataError("dataset has no rows")
        if not np.any(a == 1) or not np.any(a == 0):
            raise DegenerateDataError("dataset needs at least one treated and one control row")
        object.__setattr__(self, "w", _readonly(w))
        object.__setattr__(self, "a", _readonly(a))
        object.__setattr__(self, "c", _readonly(c))
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "z", _readonly(z))
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def p(self) -> int:
        return self.w.shape[1]

    @property
    def rows(self) -> Iterator[Observation]:
        for i in range(self.n):
            y = None if np.isnan(self.y[i]) else int(self.y[i])
            z = None if np.isnan(self.z[i]) else int(self.z[i])
            yield Observation(tuple(self.w[i].tolist()), int(self.a[i]), int(self.c[i]), y, z)

    @classmethod
    def from_rows(cls, rows: Sequence[Observation], covariate_names: Sequence[str] = ()) -> "ObservationalDataset":
        rows = list(rows)
        p = len(rows[0].w) if rows else len(covariate_names)
        if any(len(r.w) != p for r in rows):
            raise ValidationError("rows have differing covariate dimension")
        nan = float("nan")
        return cls(
            w=np.array([r.w for r in rows], dtype=float).reshape(len(rows), p),
            a=[r.a for r in rows],
            c=[r.c for r in rows],
            y=[nan if r.y is None or r.c == 0 else r.y for r in rows],
            z=[nan if r.z is None or r.c == 0 else r.z for r in rows],
            covariate_names=tuple(covariate_names),
        )

    def summary(self) -> dict:
        """Counts per (A, C, Y) cell, laid out like a 2x3 outcome table."""
        out = {"n": self.n}
        for label, arm in (("treated", 1), ("control", 0)):
            in_arm = self.a == arm
            obs = in_arm & (self.c == 1)
            out[label] = {
                "outcome_1": int(np.sum(obs & (self.y == 1))),
                "outcome_0": int(np.sum(obs & (self.y == 0))),
                "censored": int(np.sum(in_arm & (self.c == 0))),
                "total": int(np.sum(in_arm)),
            }
        return out


def _check_binary(x: np.ndarray, label: str) -> None:
    bad = np.flatnonzero((x != 0) & (x != 1))
    if bad.size:
        raise ValidationError(f"row {bad[0]}: {label} must be 0 or 1", row=int(bad[0]))


@dataclass(frozen=True)
class ImputedDataset:
    """A dataset together with the conservatively imputed outcome ``y_star``."""

    base: ObservationalDataset
    y_star: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.base.n


def impute_conservative(data: ObservationalDataset) -> ImputedDataset:
    """Set every censored outcome to 0 (treatment failure).

    Only treated rows matter downstream; control rows with ``c = 0`` are also
    coded 0 but never enter an estimating equation.
    """
    y_star = np.where(data.c == 1, np.nan_to_num(data.y, nan=0.0), 0.0)
    return ImputedDataset(base=data, y_star=_readonly(y_star))


def empirical_treated_proportion(data: ObservationalDataset) -> float:
    return float(np.count_nonzero(data.a == 1)) / data.n


# -- CSV ---------------------------------------------------------------------


def _parse_binary(token: str, label: str, row: int) -> int:
    t = token.strip()
    if t in ("0", "1"):
        return int(t)
    raise ValidationError(f"row {row}: {label} value {token!r} is not binary", row=row)


def load_csv(path, schema: Optional[ColumnMapping] = None) -> ObservationalDataset:
    """Read a CSV with a header row into a validated dataset.

    Censored rows (censoring column = 0) have their outcome cells ignored.
    For uncensored rows the outcome must be ``0`` or ``1``; an empty cell or
    ``NA`` is only accepted when the row is censored.

    Raises
    ------
    SchemaError
        A mapped column is missing from the header.
    ValidationError
        A cell is not admissible; ``.row`` holds the 0-based data row.
    DegenerateDataError
        Empty file, or no treated / no control rows.
    """
    schema = schema or ColumnMapping()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DegenerateDataError(f"{path}: empty file") from None
        records = [r for r in reader if r]

    required = [schema.treatment, schema.censoring, schema.outcome, *schema.covariates]
    if schema.secondary:
        required.append(schema.secondary)
    missing = [col for col in required if col not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
    idx = {name: header.index(name) for name in required}

    n = len(records)
    if n == 0:
        raise DegenerateDataError(f"{path}: no data rows")
    p = len(schema.covariates)
    w = np.empty((n, p))
    a = np.empty(n, dtype=np.int8)
    c = np.empty(n, dtype=np.int8)
    y = np.full(n, np.nan)
    z = np.full(n, np.nan)
    for i, rec in enumerate(records):
        if len(rec) != len(header):
            raise ValidationError(f"row {i}: expected {len(header)} fields, got {len(rec)}", row=i)
        a[i] = _parse_binary(rec[idx[schema.treatment]], "treatment", i)
        c[i] = _parse_binary(rec[idx[schema.censoring]], "censoring", i)
        for j, name in enumerate(schema.covariates):
            tok = rec[idx[name]].strip()
            try:
                w[i, j] = float(tok)
            except ValueError:
                raise ValidationError(f"row {i}: covariate {name} value {tok!r} is not a number", row=i) from None
            if not math.isfinite(w[i, j]):
                raise ValidationError(f"row {i}: covariate {name} is not finite", row=i)
        if c[i] == 1:
            tok = rec[idx[schema.outcome]]
            if tok.strip() in MISSING_TOKENS:
                raise ValidationError(f"row {i}: outcome missing for an uncensored row", row=i)
            y[i] = _parse_binary(tok, "outcome", i)
            if schema.secondary:
                tok = rec[idx[schema.secondary]]
                if tok.strip() not in MISSING_TOKENS:
                    z[i] = _parse_binary(tok, "secondary outcome", i)
    return ObservationalDataset(w=w, a=a, c=c, y=y, z=z, covariate_names=schema.covariates)


def _fmt_outcome(v: float) -> str:
    return "" if np.isnan(v) else str(int(v))


def write_csv(data: ObservationalDataset, path, schema: Optional[ColumnMapping] = None) -> ColumnMapping:
    """Write ``data`` in the format read by :func:`load_csv`.

    Floats are written with ``repr`` so a reload is bit-exact. Returns the
    column mapping that reads the file back.
    """
    if schema is None:
        schema = ColumnMapping(
            covariates=data.covariate_names,
            secondary="Z" if np.any(~np.isnan(data.z)) else None,
        )
    header = [*schema.covariates, schema.treatment, schema.censoring, schema.outcome]
    if schema.secondary:
        header.append(schema.secondary)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(data.n):
            rec = [repr(float(v)) for v in data.w[i]]
            rec += [str(int(data.a[i])), str(int(data.c[i])), _fmt_outcome(data.y[i])]
            if schema.secondary:
                rec.append(_fmt_outcome(data.z[i]))
            writer.writerow(rec)
    return schema


# -- bundled case study -------------------------------------------------------

#: Outcome counts per arm: (outcome = 1, outcome = 0, lost to follow-up).
CASE_STUDY_COUNTS = {"treated": (16, 3, 36), "control": (1, 27, 321)}


def case_study_from_counts(counts: dict = CASE_STUDY_COUNTS) -> ObservationalDataset:
    """Expand the 2x3 count table into rows with no covariates."""
    a, c, y = [], [], []
    for arm, key in ((1, "treated"), (0, "control")):
        n_pos, n_neg, n_cens = counts[key]
        a += [arm] * (n_pos + n_neg + n_cens)
        c += [1] * (n_pos + n_neg) + [0] * n_cens
        y += [1.0] * n_pos + [0.0] * n_neg + [np.nan] * n_cens
    return ObservationalDataset(w=np.empty((len(a), 0)), a=a, c=c, y=y, z=None)


def case_study_path() -> Path:
    return Path(str(resources.files("npsens") / "data" / "case_study.csv"))


def case_study_config_path() -> Path:
    return Path(str(resources.files("npsens") / "data" / "case_study_config.json"))


def load_case_study() -> ObservationalDataset:
    return load_csv(case_study_path(), ColumnMapping())


def summary_json(data: ObservationalDataset) -> str:
    return json.dumps(data.summary(), indent=2, sort_keys=True)
