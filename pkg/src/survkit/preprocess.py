"""Covariate preparation: dummy coding, z-score scaling, correlation pruning.

Dummy coding is schema-driven (reference level = first declared level unless
overridden), so the encoding itself carries no information from the data and
can safely happen before any train/validation split. Scaling and pruning are
fit on data and must be fit on training rows only; both return small fitted
objects that can be persisted and applied elsewhere.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, SchemaError
from .tabular import ColumnSpec, SurvivalDataset, drop_columns


@dataclass
class EncodingMap:
    """Record of a dummy coding: per column, the reference and output names."""

    entries: dict  # name -> {"reference", "levels", "outputs"}

    def output_names(self, column):
        return list(self.entries[column]["outputs"])

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.entries, fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls(entries=json.load(fh))


def dummy_encode(ds, refs=None):
    """Expand categorical covariates to k-1 indicator columns.

    Each categorical covariate with levels [r, a, b, ...] becomes columns
    "name=a", "name=b", ... at its original schema position; the reference
    level r maps to all zeros. A missing cell is missing in every indicator.
    Non-covariate categoricals (e.g. a center column) pass through.

    Returns (encoded dataset, EncodingMap).
    """
    refs = refs or {}
    unknown = set(refs) - set(ds.column_names)
    if unknown:
        raise SchemaError(f"refs name unknown columns: {sorted(unknown)}")

    new_cols = []
    new_vals = []
    new_mask = []
    entries = {}
    for j, col in enumerate(ds.columns):
        if col.role != "covariate" or col.kind != "categorical":
            new_cols.append(col)
            new_vals.append(ds.values[:, j])
            new_mask.append(ds.missing_mask[:, j])
            continue
        ref = refs.get(col.name, col.levels[0])
        if ref not in col.levels:
            raise SchemaError(f"reference {ref!r} is not a level of {col.name!r}")
        others = [lv for lv in col.levels if lv != ref]
        outputs = [f"{col.name}={lv}" for lv in others]
        entries[col.name] = {"reference": ref, "levels": others, "outputs": outputs}
        if not others:
            warnings.warn(f"column {col.name!r} has a single level; encoded to no columns")
            continue
        codes = ds.values[:, j]
        miss = ds.missing_mask[:, j]
        for lv, out_name in zip(others, outputs):
            code = float(col.levels.index(lv))
            vals = np.where(miss, np.nan, (codes == code).astype(float))
            new_cols.append(ColumnSpec(out_name, "binary", "covariate"))
            new_vals.append(vals)
            new_mask.append(miss.copy())

    out = SurvivalDataset(
        columns=new_cols,
        values=np.column_stack(new_vals) if new_vals else np.empty((ds.n_rows, 0)),
        missing_mask=np.column_stack(new_mask) if new_mask else np.empty((ds.n_rows, 0), dtype=bool),
        row_ids=ds.row_ids.copy(),
    )
    return out, EncodingMap(entries=entries)


def decode_levels(encoded_ds, emap, original_columns):
    """Invert a dummy coding back to level strings.

    Rows with all-zero indicators decode to the reference level; a missing
    indicator decodes to a missing cell. Columns that encoded to nothing
    (single level) decode to that level everywhere.
    """
    out_vals = []
    out_mask = []
    out_cols = []
    for col in original_columns:
        if col.role == "covariate" and col.kind == "categorical":
            entry = emap.entries[col.name]
            ref_code = float(col.levels.index(entry["reference"]))
            n = encoded_ds.n_rows
            vals = np.full(n, ref_code)
            miss = np.zeros(n, dtype=bool)
            for lv, out_name in zip(entry["levels"], entry["outputs"]):
                j = encoded_ds.col_index(out_name)
                hit = encoded_ds.values[:, j] == 1.0
                vals[hit] = float(col.levels.index(lv))
                miss |= encoded_ds.missing_mask[:, j]
            vals[miss] = np.nan
            out_cols.append(col)
            out_vals.append(vals)
            out_mask.append(miss)
        else:
            j = encoded_ds.col_index(col.name)
            out_cols.append(col)
            out_vals.append(encoded_ds.values[:, j])
            out_mask.append(encoded_ds.missing_mask[:, j])
    return SurvivalDataset(
        columns=out_cols,
        values=np.column_stack(out_vals),
        missing_mask=np.column_stack(out_mask),
        row_ids=encoded_ds.row_ids.copy(),
    )


@dataclass
class ScalerStats:
    """Per-column mean and sample standard deviation (ddof=1)."""

    stats: dict  # name -> (mean, std)

    def to_json(self, path):
        doc = {name: {"mean": m, "std": s} for name, (m, s) in self.stats.items()}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(stats={name: (d["mean"], d["std"]) for name, d in doc.items()})


def fit_scaler(ds, columns=None):
    """Mean/std over non-missing cells of the listed continuous columns.

    Defaults to every continuous covariate column. A column with fewer than
    two distinct observed values cannot be standardized and errors.
    """
    if columns is None:
        columns = [c.name for c in ds.columns if c.role == "covariate" and c.kind == "continuous"]
    stats = {}
    for name in columns:
        col = ds.column(name)
        if col.kind != "continuous":
            raise SchemaError(f"scaler applies to continuous columns, not {name!r} ({col.kind})")
        j = ds.col_index(name)
        obs = ds.values[~ds.missing_mask[:, j], j]
        if len(np.unique(obs)) < 2:
            raise DataError(f"column {name!r} has fewer than 2 distinct observed values")
        stats[name] = (float(obs.mean()), float(obs.std(ddof=1)))
    return ScalerStats(stats=stats)


def apply_scaler(ds, scaler):
    """Standardize listed columns on observed cells; mask is unchanged."""
    values = ds.values.copy()
    for name, (mean, std) in scaler.stats.items():
        j = ds.col_index(name)
        obs = ~ds.missing_mask[:, j]
        values[obs, j] = (values[obs, j] - mean) / std
    return SurvivalDataset(list(ds.columns), values, ds.missing_mask.copy(), ds.row_ids.copy())


def prune_correlated(ds, threshold, priority=None):
    """Greedily drop one column of every covariate pair with |r| > threshold.

    Pearson correlation is computed on pairwise-complete observations; pairs
    with fewer than 3 overlapping rows, or a constant column on the overlap,
    are skipped and reported. The most correlated pair goes first; within a
    pair the column with the higher `priority` value (default: missing rate
    in `ds`) is dropped, ties broken toward the later schema position.

    Returns (pruned dataset, report).
    """
    cand = [c.name for c in ds.columns if c.role == "covariate"]
    for name in cand:
        if ds.column(name).kind == "categorical":
            raise SchemaError(f"dummy-encode categorical covariates before pruning ({name!r})")
    if priority is None:
        priority = {
            name: float(ds.missing_mask[:, ds.col_index(name)].mean()) for name in cand
        }

    idx = {name: ds.col_index(name) for name in cand}
    skipped = []
    pairs = []  # (abs_r, i, j, name_i, name_j, r)
    for a in range(len(cand)):
        for b in range(a + 1, len(cand)):
            na, nb = cand[a], cand[b]
            ja, jb = idx[na], idx[nb]
            both = ~ds.missing_mask[:, ja] & ~ds.missing_mask[:, jb]
            if both.sum() < 3:
                skipped.append({"pair": [na, nb], "reason": "overlap<3", "n_overlap": int(both.sum())})
                continue
            xa = ds.values[both, ja]
            xb = ds.values[both, jb]
            sa, sb = xa.std(), xb.std()
            if sa == 0.0 or sb == 0.0:
                skipped.append({"pair": [na, nb], "reason": "constant-on-overlap"})
                continue
            r = float(np.corrcoef(xa, xb)[0, 1])
            if abs(r) > threshold:
                pairs.append((abs(r), a, b, na, nb, r))

    removed = []
    alive = set(cand)
    # highest |r| first; schema positions break exact |r| ties deterministically
    pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
    for _, a, b, na, nb, r in pairs:
        if na not in alive or nb not in alive:
            continue
        pa, pb = priority.get(na, 0.0), priority.get(nb, 0.0)
        if pa > pb:
            drop = na
        elif pb > pa:
            drop = nb
        else:
            drop = nb  # equal priority: later schema position goes
        keep = nb if drop == na else na
        alive.discard(drop)
        removed.append({"removed": drop, "partner": keep, "r": r})

    report = {"threshold": float(threshold), "removed": removed, "skipped_pairs": skipped}
    if removed:
        return drop_columns(ds, [r["removed"] for r in removed]), report
    return ds, report
