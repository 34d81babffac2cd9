"""Cohort tables: column schema, CSV ingestion, inclusion rules, summaries.

A dataset is a numeric matrix plus a parallel missingness mask. Categorical
cells are stored as indices into the column's declared level list, which
keeps the matrix numeric while making CSV round-trips exact. Row order is
preserved through every operation; `row_ids` tracks original row positions
through subsetting so downstream audits can reason about provenance.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, SchemaError

KINDS = ("continuous", "categorical", "binary")
ROLES = ("covariate", "time", "event", "id", "center")


@dataclass
class ColumnSpec:
    """One column: name, value kind, pipeline role, declared levels."""

    name: str
    kind: str
    role: str = "covariate"
    levels: list = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in ROLES:
            raise SchemaError(f"column {self.name!r}: unknown role {self.role!r}")
        if self.kind == "categorical":
            if not self.levels:
                raise SchemaError(f"column {self.name!r}: categorical column needs levels")
            if any(not lv for lv in self.levels):
                raise SchemaError(f"column {self.name!r}: levels must be non-empty strings")
            if len(set(self.levels)) != len(self.levels):
                raise SchemaError(f"column {self.name!r}: duplicate levels")
        elif self.levels:
            raise SchemaError(f"column {self.name!r}: only categorical columns take levels")


def validate_schema(columns):
    """Check cross-column schema rules; returns the columns unchanged."""
    names = [c.name for c in columns]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate column names in schema")
    times = [c for c in columns if c.role == "time"]
    events = [c for c in columns if c.role == "event"]
    if len(times) != 1 or len(events) != 1:
        raise SchemaError("schema needs exactly one time column and one event column")
    if times[0].kind != "continuous":
        raise SchemaError("time column must be continuous")
    if events[0].kind != "binary":
        raise SchemaError("event column must be binary")
    return columns


@dataclass
class SurvivalDataset:
    """Numeric cohort matrix with schema and missingness mask."""

    columns: list
    values: np.ndarray
    missing_mask: np.ndarray
    row_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        validate_schema(self.columns)
        self.values = np.asarray(self.values, dtype=float)
        self.missing_mask = np.asarray(self.missing_mask, dtype=bool)
        if self.values.ndim != 2 or self.values.shape != self.missing_mask.shape:
            raise DataError("values and missing_mask must be equal-shape 2-D arrays")
        if self.values.shape[1] != len(self.columns):
            raise DataError("values width does not match schema")
        if self.row_ids is None:
            self.row_ids = np.arange(self.values.shape[0])
        self.row_ids = np.asarray(self.row_ids, dtype=np.int64)

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def column_names(self):
        return [c.name for c in self.columns]

    def col_index(self, name):
        try:
            return self.column_names.index(name)
        except ValueError:
            raise SchemaError(f"no column named {name!r}") from None

    def column(self, name):
        return self.columns[self.col_index(name)]

    def _role_index(self, role):
        for i, c in enumerate(self.columns):
            if c.role == role:
                return i
        return None

    @property
    def time(self):
        return self.values[:, self._role_index("time")]

    @property
    def event(self):
        return self.values[:, self._role_index("event")]

    @property
    def covariate_names(self):
        return [c.name for c in self.columns if c.role == "covariate"]

    def covariate_matrix(self):
        """Covariate-role columns as (values, mask, names)."""
        idx = [i for i, c in enumerate(self.columns) if c.role == "covariate"]
        return self.values[:, idx], self.missing_mask[:, idx], [self.columns[i].name for i in idx]

    def patient_ids(self):
        """Display ids: the id-role column when present, else row position."""
        i = self._role_index("id")
        if i is None:
            return [str(r) for r in self.row_ids]
        return [_format_cell(self.values[r, i], self.columns[i]) for r in range(self.n_rows)]


def subset_rows(ds, idx):
    """Rows by integer index, preserving order and provenance."""
    idx = np.asarray(idx, dtype=np.int64)
    return SurvivalDataset(
        columns=list(ds.columns),
        values=ds.values[idx].copy(),
        missing_mask=ds.missing_mask[idx].copy(),
        row_ids=ds.row_ids[idx].copy(),
    )


def drop_columns(ds, names):
    dropset = set(names)
    missing = dropset - set(ds.column_names)
    if missing:
        raise SchemaError(f"cannot drop unknown columns: {sorted(missing)}")
    keep = [i for i, c in enumerate(ds.columns) if c.name not in dropset]
    return SurvivalDataset(
        columns=[ds.columns[i] for i in keep],
        values=ds.values[:, keep].copy(),
        missing_mask=ds.missing_mask[:, keep].copy(),
        row_ids=ds.row_ids.copy(),
    )


def replace_column_values(ds, name, values, mask=None):
    """Functional single-column update; mask defaults to all-observed."""
    j = ds.col_index(name)
    out_values = ds.values.copy()
    out_mask = ds.missing_mask.copy()
    out_values[:, j] = values
    out_mask[:, j] = False if mask is None else mask
    return SurvivalDataset(list(ds.columns), out_values, out_mask, ds.row_ids.copy())


# -- schema JSON -------------------------------------------------------------

def save_schema(columns, path):
    """Schema as a JSON object mapping column name -> {kind, role, levels}."""
    doc = {}
    for c in validate_schema(columns):
        entry = {"kind": c.kind, "role": c.role}
        if c.levels:
            entry["levels"] = list(c.levels)
        doc[c.name] = entry
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_schema(path):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"schema file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("schema JSON must be an object mapping name -> spec")
    columns = []
    for name, entry in doc.items():
        if not isinstance(entry, dict) or "kind" not in entry:
            raise SchemaError(f"column {name!r}: spec must be an object with a kind")
        columns.append(
            ColumnSpec(
                name=name,
                kind=entry["kind"],
                role=entry.get("role", "covariate"),
                levels=entry.get("levels"),
            )
        )
    return validate_schema(columns)


# -- CSV ---------------------------------------------------------------------

DEFAULT_MISSING = ("", "NA")


def _parse_cell(raw, col, row_num):
    if col.kind == "continuous":
        try:
            val = float(raw)
        except ValueError:
            raise DataError(f"expected a number, got {raw!r}", row=row_num, column=col.name) from None
        if not np.isfinite(val):
            raise DataError(f"non-finite value {raw!r}", row=row_num, column=col.name)
        if col.role == "time" and val < 0:
            raise DataError("negative follow-up time", row=row_num, column=col.name)
        return val
    if col.kind == "binary":
        try:
            val = float(raw)
        except ValueError:
            raise DataError(f"expected 0 or 1, got {raw!r}", row=row_num, column=col.name) from None
        if val not in (0.0, 1.0):
            raise DataError(f"expected 0 or 1, got {raw!r}", row=row_num, column=col.name)
        return val
    try:
        return float(col.levels.index(raw))
    except ValueError:
        raise DataError(
            f"value {raw!r} not among declared levels {col.levels}", row=row_num, column=col.name
        ) from None


def _format_cell(val, col):
    if col.kind == "categorical":
        return col.levels[int(round(val))]
    if col.kind == "binary":
        return str(int(round(val)))
    if float(val).is_integer() and abs(val) < 1e15:
        return str(int(val))
    return repr(float(val))


def load_csv(path, columns, missing_values=DEFAULT_MISSING):
    """Load an RFC-4180 CSV against a schema.

    The header must contain exactly the schema's column names in any order.
    Cells matching a missing sentinel set the mask; all other cells must
    parse per their column kind. Errors carry the 1-based data row number.
    """
    validate_schema(columns)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, no header row") from None
        if len(set(header)) != len(header):
            raise SchemaError(f"{path}: duplicate column in header")
        want = set(c.name for c in columns)
        got = set(header)
        if want != got:
            extra = sorted(got - want)
            lacking = sorted(want - got)
            parts = []
            if extra:
                parts.append(f"unknown columns {extra}")
            if lacking:
                parts.append(f"missing columns {lacking}")
            raise SchemaError(f"{path}: header does not match schema: " + "; ".join(parts))
        pos = [header.index(c.name) for c in columns]

        rows = []
        mask_rows = []
        sentinels = set(missing_values)
        for row_num, record in enumerate(reader, start=1):
            if len(record) != len(header):
                raise DataError(
                    f"expected {len(header)} fields, got {len(record)}", row=row_num
                )
            vals = np.empty(len(columns))
            miss = np.zeros(len(columns), dtype=bool)
            for j, col in enumerate(columns):
                raw = record[pos[j]]
                if raw in sentinels:
                    vals[j] = np.nan
                    miss[j] = True
                else:
                    vals[j] = _parse_cell(raw, col, row_num)
            rows.append(vals)
            mask_rows.append(miss)

    values = np.array(rows) if rows else np.empty((0, len(columns)))
    mask = np.array(mask_rows) if mask_rows else np.empty((0, len(columns)), dtype=bool)
    return SurvivalDataset(list(columns), values, mask)


def save_csv(ds, path, missing_value=""):
    """Write a dataset back to CSV; load(save(ds)) is an identity."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ds.column_names)
        for r in range(ds.n_rows):
            record = []
            for j, col in enumerate(ds.columns):
                if ds.missing_mask[r, j]:
                    record.append(missing_value)
                else:
                    record.append(_format_cell(ds.values[r, j], col))
            writer.writerow(record)


# -- inclusion ---------------------------------------------------------------

@dataclass
class InclusionRules:
    """Row filters applied before any modeling.

    drop_missing_outcomes: remove rows with a missing time or event cell.
    exclude_levels: {column: [levels]} removes rows taking any listed level.
    exclude_early_events: removes rows with an event at or before the given
    time (generic guard against immediate postoperative deaths and similar;
    no default threshold).
    """

    drop_missing_outcomes: bool = True
    exclude_levels: dict = field(default_factory=dict)
    exclude_early_events: float = None


def apply_inclusion(ds, rules):
    """Apply inclusion rules in declared order; returns (dataset, audit).

    The audit lists (rule, n_dropped) in application order plus the total
    row counts, so reports can state exactly why rows left the cohort.
    """
    keep = np.ones(ds.n_rows, dtype=bool)
    audit = {"n_before": int(ds.n_rows), "steps": []}

    if rules.drop_missing_outcomes:
        t_idx = ds.col_index([c.name for c in ds.columns if c.role == "time"][0])
        e_idx = ds.col_index([c.name for c in ds.columns if c.role == "event"][0])
        bad = ds.missing_mask[:, t_idx] | ds.missing_mask[:, e_idx]
        dropped = int((bad & keep).sum())
        keep &= ~bad
        audit["steps"].append({"rule": "drop_missing_outcomes", "n_dropped": dropped})

    for name, levels in rules.exclude_levels.items():
        col = ds.column(name)
        if col.kind != "categorical":
            raise SchemaError(f"exclude_levels applies to categorical columns, not {name!r}")
        unknown = [lv for lv in levels if lv not in col.levels]
        if unknown:
            raise SchemaError(f"exclude_levels: {name!r} has no levels {unknown}")
        j = ds.col_index(name)
        codes = set(float(col.levels.index(lv)) for lv in levels)
        hit = np.isin(ds.values[:, j], sorted(codes)) & ~ds.missing_mask[:, j]
        dropped = int((hit & keep).sum())
        keep &= ~hit
        audit["steps"].append(
            {"rule": f"exclude_levels:{name}", "levels": list(levels), "n_dropped": dropped}
        )

    if rules.exclude_early_events is not None:
        hit = (ds.event == 1.0) & (ds.time <= rules.exclude_early_events)
        hit &= ~np.isnan(ds.time)
        dropped = int((hit & keep).sum())
        keep &= ~hit
        audit["steps"].append(
            {
                "rule": "exclude_early_events",
                "threshold": float(rules.exclude_early_events),
                "n_dropped": dropped,
            }
        )

    out = subset_rows(ds, np.flatnonzero(keep))
    audit["n_after"] = int(out.n_rows)
    return out, audit


# -- summary -----------------------------------------------------------------

@dataclass
class CohortSummary:
    n_rows: int
    n_events: int
    event_fraction: float
    n_covariates: int
    followup_quartiles: tuple
    followup_max: float
    followup_mean: float
    missing_pct: dict


def summarize(ds):
    """Cohort description: size, events, follow-up spread, missingness."""
    if ds.n_rows == 0:
        raise DataError("cannot summarize an empty cohort")
    t = ds.time
    e = ds.event
    if np.isnan(t).any() or np.isnan(e).any():
        raise DataError("summary requires complete outcomes; apply inclusion rules first")
    q25, q50, q75 = np.quantile(t, [0.25, 0.5, 0.75])
    missing = {}
    for j, col in enumerate(ds.columns):
        if col.role == "covariate":
            missing[col.name] = float(ds.missing_mask[:, j].mean() * 100.0)
    return CohortSummary(
        n_rows=int(ds.n_rows),
        n_events=int(e.sum()),
        event_fraction=float(e.mean()),
        n_covariates=len(ds.covariate_names),
        followup_quartiles=(float(q25), float(q50), float(q75)),
        followup_max=float(t.max()),
        followup_mean=float(t.mean()),
        missing_pct=missing,
    )
