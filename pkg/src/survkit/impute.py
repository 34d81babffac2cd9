"""Missing-data handling: Nelson-Aalen transform, chained equations, pooling.

The chained-equation imputer regresses each incomplete covariate on all
other covariates plus the outcome, where the outcome enters as the event
indicator and the Nelson-Aalen cumulative hazard at the follow-up time.
Each target column uses a normal-model Bayesian draw (coefficients and
noise drawn from their posterior), so repeated chains give proper
between-imputation variability for Rubin pooling. Indicator columns are
imputed on the continuous scale and deliberately not rounded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sstats

from .curves import CumHazardFn
from .errors import DataError, SchemaError
from .tabular import SurvivalDataset

RIDGE = 1e-6


def nelson_aalen(times, events):
    """Nelson-Aalen cumulative hazard estimate H(t) = sum d_i / n_i.

    Knots are the distinct event times; ties add d/n in one increment.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=float)
    if t.ndim != 1 or t.shape != e.shape or len(t) == 0:
        raise DataError("times and events must be equal-length non-empty 1-D arrays")
    if np.isnan(t).any() or np.isnan(e).any():
        raise DataError("outcomes must be complete for the Nelson-Aalen estimate")

    order = np.argsort(t, kind="stable")
    ts, es = t[order], e[order]
    n = len(ts)
    starts = np.flatnonzero(np.r_[True, ts[1:] != ts[:-1]])
    d = np.add.reduceat(es, starts)
    at_risk = n - starts
    has_event = d > 0
    knots = ts[starts][has_event]
    increments = d[has_event] / at_risk[has_event]
    return CumHazardFn(knots=knots, values=np.cumsum(increments))


def _check_numeric_covariates(ds):
    for c in ds.columns:
        if c.role == "covariate" and c.kind == "categorical":
            raise SchemaError(
                f"imputation expects dummy-coded covariates; {c.name!r} is categorical"
            )


def _target_columns(ds):
    """Covariate columns with missing cells, ordered by ascending missing
    rate with schema order breaking ties."""
    rates = []
    for j, c in enumerate(ds.columns):
        if c.role != "covariate":
            continue
        rate = ds.missing_mask[:, j].mean()
        if rate > 0:
            if rate == 1.0:
                raise DataError(f"column {c.name!r} has no observed values to learn from")
            rates.append((float(rate), j, c.name))
    rates.sort(key=lambda r: (r[0], r[1]))
    return [(name, j) for _, j, name in rates]


def _predictor_matrix(values, cov_idx, target_j, hazard, event):
    """Design matrix for one target: intercept, other covariates, outcomes."""
    others = [j for j in cov_idx if j != target_j]
    return np.column_stack(
        [np.ones(len(event))] + [values[:, j] for j in others] + [event, hazard]
    )


def _bayes_draw(x_obs, y_obs, rng):
    """Posterior draw of (coefficients, sigma) for a normal linear model."""
    q = x_obs.shape[1]
    n_obs = len(y_obs)
    s = x_obs.T @ x_obs + RIDGE * np.eye(q)
    v = np.linalg.inv(s)
    beta_hat = v @ (x_obs.T @ y_obs)
    resid = y_obs - x_obs @ beta_hat
    df = max(n_obs - q, 1)
    chi2 = rng.chisquare(df)
    sigma = float(np.sqrt(resid @ resid / max(chi2, 1e-12)))
    try:
        chol = np.linalg.cholesky(v)
    except np.linalg.LinAlgError:
        # jittered normal equations keep v near-PSD; fall back to sqrt eigs
        w, u = np.linalg.eigh(v)
        chol = u @ np.diag(np.sqrt(np.clip(w, 0, None)))
    beta_dot = beta_hat + sigma * (chol @ rng.standard_normal(q))
    return beta_hat, beta_dot, sigma


def _run_chain(ds, iterations, rng, collect_final_models=False):
    """One chained-equations pass; returns completed values (+ final models)."""
    cov_idx = [j for j, c in enumerate(ds.columns) if c.role == "covariate"]
    targets = _target_columns(ds)
    hazard_fn = nelson_aalen(ds.time, ds.event)
    hazard = hazard_fn(ds.time)
    event = ds.event.copy()

    values = ds.values.copy()
    means = {}
    for name, j in targets:
        obs = ~ds.missing_mask[:, j]
        means[name] = float(values[obs, j].mean())
        values[~obs, j] = means[name]

    final_models = {}
    for sweep in range(iterations):
        last = sweep == iterations - 1
        for name, j in targets:
            obs = ~ds.missing_mask[:, j]
            x_all = _predictor_matrix(values, cov_idx, j, hazard, event)
            beta_hat, beta_dot, sigma = _bayes_draw(x_all[obs], values[obs, j], rng)
            mis = ~obs
            values[mis, j] = x_all[mis] @ beta_dot + sigma * rng.standard_normal(int(mis.sum()))
            if collect_final_models and last:
                final_models[name] = beta_hat
    return values, means, final_models, hazard_fn


@dataclass
class ImputationSet:
    """m completed datasets plus the provenance needed to reproduce them."""

    datasets: list
    original_mask: np.ndarray
    m: int
    iterations: int
    seed: int
    visit_order: list

    def provenance(self):
        return {
            "m": self.m,
            "iterations": self.iterations,
            "seed": self.seed,
            "chain_seeds": [self.seed + 100 + i for i in range(self.m)],
            "visit_order": list(self.visit_order),
            "n_missing_cells": int(self.original_mask.sum()),
        }


def mice_impute(ds, m, iterations, seed):
    """Chained-equation imputation producing m completed datasets.

    Chain i draws from a generator seeded with seed + 100 + i, so chains are
    independent and each is reproducible in isolation. A dataset without
    missing cells yields m identical copies.
    """
    _check_numeric_covariates(ds)
    if m < 1:
        raise DataError("m must be >= 1")
    if iterations < 1:
        raise DataError("iterations must be >= 1")
    if np.isnan(ds.time).any() or np.isnan(ds.event).any():
        raise DataError("outcomes must be complete before imputation")

    visit = [name for name, _ in _target_columns(ds)]
    completed = []
    for i in range(m):
        rng = np.random.default_rng(seed + 100 + i)
        values, _, _, _ = _run_chain(ds, iterations, rng)
        mask = ds.missing_mask.copy()
        for name in visit:
            mask[:, ds.col_index(name)] = False
        completed.append(SurvivalDataset(list(ds.columns), values, mask, ds.row_ids.copy()))
    return ImputationSet(
        datasets=completed,
        original_mask=ds.missing_mask.copy(),
        m=m,
        iterations=iterations,
        seed=seed,
        visit_order=visit,
    )


@dataclass
class MiceModel:
    """A fitted imputer that can complete new rows without refitting.

    Holds the training column means (initial fill), the training
    Nelson-Aalen transform, the visit order, and the posterior-mean
    coefficients of each target column's final sweep. Applying the model is
    deterministic: missing cells get their conditional mean under the
    stored models.
    """

    visit_order: list
    means: dict
    models: dict  # name -> coefficient vector (intercept, others, event, hazard)
    hazard_fn: CumHazardFn
    iterations: int
    seed: int
    column_names: list
    completed_train: SurvivalDataset = field(repr=False, default=None)


def fit_mice(ds, iterations, seed):
    """Run one chain on training rows and freeze its final-sweep models."""
    _check_numeric_covariates(ds)
    if np.isnan(ds.time).any() or np.isnan(ds.event).any():
        raise DataError("outcomes must be complete before imputation")
    visit = [name for name, _ in _target_columns(ds)]
    rng = np.random.default_rng(seed + 100)
    values, means, models, hazard_fn = _run_chain(ds, iterations, rng, collect_final_models=True)
    mask = ds.missing_mask.copy()
    for name in visit:
        mask[:, ds.col_index(name)] = False
    completed = SurvivalDataset(list(ds.columns), values, mask, ds.row_ids.copy())
    return MiceModel(
        visit_order=visit,
        means=means,
        models=models,
        hazard_fn=hazard_fn,
        iterations=iterations,
        seed=seed,
        column_names=ds.column_names,
        completed_train=completed,
    )


def apply_mice(model, ds):
    """Complete a new dataset with a fitted imputer (no refitting, no noise).

    Columns that were complete at fit time but are missing here fall back to
    their training mean when available, else error.
    """
    _check_numeric_covariates(ds)
    if ds.column_names != model.column_names:
        raise SchemaError("dataset columns do not match the fitted imputer")
    cov_idx = [j for j, c in enumerate(ds.columns) if c.role == "covariate"]
    hazard = model.hazard_fn(ds.time)
    event = ds.event.copy()

    values = ds.values.copy()
    mask = ds.missing_mask.copy()
    modeled = []
    for name in model.visit_order:
        j = ds.col_index(name)
        if mask[:, j].any():
            values[mask[:, j], j] = model.means[name]
            modeled.append((name, j))
    # anything else missing has no fitted model: train mean if the column was
    # observed at fit time is unavailable, so this is a schema-level problem
    for j, c in enumerate(ds.columns):
        if c.role == "covariate" and mask[:, j].any() and c.name not in model.means:
            raise DataError(
                f"column {c.name!r} has missing cells but was complete at fit time"
            )

    for _ in range(model.iterations):
        for name, j in modeled:
            x_all = _predictor_matrix(values, cov_idx, j, hazard, event)
            mis = mask[:, j]
            values[mis, j] = x_all[mis] @ model.models[name]

    out_mask = mask.copy()
    for name, j in modeled:
        out_mask[:, j] = False
    return SurvivalDataset(list(ds.columns), values, out_mask, ds.row_ids.copy())


@dataclass
class PooledEstimate:
    """Rubin-pooled scalar estimate across m imputations."""

    point: float
    within: float
    between: float
    total: float
    se: float
    df: float
    ci_low: float
    ci_high: float
    p_value: float


def pool_rubin(estimates, variances):
    """Pool m (estimate, variance) pairs with Rubin's rules.

    Total variance T = W + (1 + 1/m) B; degrees of freedom use Rubin's
    formula (m-1)(1 + W / ((1+1/m)B))^2, degenerating to normal-based
    intervals when the between-imputation variance is exactly zero.
    """
    q = np.asarray(estimates, dtype=float)
    u = np.asarray(variances, dtype=float)
    if q.ndim != 1 or q.shape != u.shape:
        raise DataError("estimates and variances must be equal-length 1-D arrays")
    m = len(q)
    if m < 2:
        raise DataError("pooling needs m >= 2 imputations")
    if np.any(u < 0):
        raise DataError("variances must be non-negative")

    qbar = float(q.mean())
    w = float(u.mean())
    b = float(q.var(ddof=1))
    t_var = w + (1.0 + 1.0 / m) * b
    se = float(np.sqrt(t_var))

    if b > 0:
        df = (m - 1) * (1.0 + w / ((1.0 + 1.0 / m) * b)) ** 2
        quantile = float(sstats.t.ppf(0.975, df))
        sf = lambda z: float(sstats.t.sf(z, df))
    else:
        df = float("inf")
        quantile = float(sstats.norm.ppf(0.975))
        sf = lambda z: float(sstats.norm.sf(z))

    if se == 0.0:
        p = 1.0 if qbar == 0.0 else 0.0
        return PooledEstimate(qbar, w, b, t_var, se, df, qbar, qbar, p)

    z = abs(qbar) / se
    return PooledEstimate(
        point=qbar,
        within=w,
        between=b,
        total=t_var,
        se=se,
        df=df,
        ci_low=qbar - quantile * se,
        ci_high=qbar + quantile * se,
        p_value=2.0 * sf(z),
    )


def save_imputation_set(iset, out_dir, stem="completed"):
    """Write the m completed datasets and a provenance record to a directory."""
    from pathlib import Path

    from .tabular import save_csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, ds in enumerate(iset.datasets, start=1):
        p = out / f"{stem}_{i:02d}.csv"
        save_csv(ds, p)
        paths.append(p.name)
    doc = iset.provenance()
    doc["files"] = paths
    with open(out / "imputation.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
