"""Orchestration tests: splits, fold pipelines, grids, factors, reports.

The leakage tests here are the hard guarantee behind the whole harness:
anything fit inside a fold (imputer, scaler, pruning) must be a function
of that fold's fitting rows only.
"""

import csv

import numpy as np
import pytest

from survkit.errors import ConfigError, DataError
from survkit.harness import (
    FAMILY_REGISTRY,
    ExperimentConfig,
    PrepConfig,
    SplitPlan,
    cv_evaluate,
    expand_grid,
    factors_to_csv,
    fit_fold_pipeline,
    grid_search,
    identify_factors,
    run_experiment,
    split,
)
from survkit.synth import CovariateSpec, GeneratorSpec, MissingRule, generate
from survkit.tabular import ColumnSpec, SurvivalDataset, replace_column_values, subset_rows


def cohort(n=240, missing=True, seed=0, extra_null=True):
    """Small numeric cohort with real signal and optional MAR missingness."""
    covs = [
        CovariateSpec("x1", "continuous", (0.0, 1.0)),
        CovariateSpec("x2", "continuous", (0.0, 1.0)),
    ]
    if extra_null:
        covs.append(CovariateSpec("x3", "continuous", (0.0, 1.0)))
    rules = []
    if missing:
        rules.append(MissingRule(column="x2", target_rate=0.2, drivers=["x1"], weights=[1.5]))
    spec = GeneratorSpec(
        n=n,
        covariates=covs,
        beta={"x1": 0.8, "x2": -0.5},
        shape=1.0,
        scale=12.0,
        censoring_fraction=0.3,
        missing_rules=rules,
    )
    return generate(spec, seed=seed)


def prune_dataset():
    """Manual dataset where b duplicates a and c carries the missing cells."""
    rng = np.random.default_rng(5)
    n = 60
    a = rng.normal(size=n)
    b = 2.0 * a + 1.0
    c = rng.normal(size=n)
    t = rng.exponential(10.0, size=n) + 0.1
    e = (rng.random(n) < 0.6).astype(float)
    cols = [
        ColumnSpec("time", "continuous", role="time"),
        ColumnSpec("event", "binary", role="event"),
        ColumnSpec("a", "continuous"),
        ColumnSpec("b", "continuous"),
        ColumnSpec("c", "continuous"),
    ]
    values = np.column_stack([t, e, a, b, c])
    mask = np.zeros_like(values, dtype=bool)
    mask[:6, 3] = True
    values[:6, 3] = np.nan
    mask[:4, 4] = True
    values[:4, 4] = np.nan
    return SurvivalDataset(cols, values, mask)


# -- splitting ------------------------------------------------------------------


def test_split_partitions_rows():
    ds, _ = cohort(missing=False)
    res = split(ds, SplitPlan(test_fraction=0.25), seed=3)
    assert len(set(res.test_idx) & set(res.train_idx)) == 0
    assert len(res.test_idx) + len(res.train_idx) == ds.n_rows
    assert list(res.test_idx) == sorted(res.test_idx)

    again = split(ds, SplitPlan(test_fraction=0.25), seed=3)
    np.testing.assert_array_equal(res.test_idx, again.test_idx)
    for (fa, va), (fb, vb) in zip(res.folds, again.folds):
        np.testing.assert_array_equal(fa, fb)
        np.testing.assert_array_equal(va, vb)

    other = split(ds, SplitPlan(test_fraction=0.25), seed=4)
    assert not np.array_equal(res.test_idx, other.test_idx)


def test_split_stratifies_events_exactly():
    ds, _ = cohort(missing=False)
    e = ds.event
    n_events = int(e.sum())
    n_cens = ds.n_rows - n_events
    res = split(ds, SplitPlan(test_fraction=0.25), seed=1)
    assert int(e[res.test_idx].sum()) == round(0.25 * n_events)
    assert int((1.0 - e[res.test_idx]).sum()) == round(0.25 * n_cens)


def test_kfold_folds_partition_training_rows():
    ds, _ = cohort(missing=False)
    res = split(ds, SplitPlan(test_fraction=0.2, inner={"kind": "kfold", "k": 4}), seed=9)
    assert len(res.folds) == 4
    train = set(res.train_idx)
    all_val = []
    event_counts = []
    for fit_idx, val_idx in res.folds:
        assert len(set(fit_idx) & set(val_idx)) == 0
        assert set(fit_idx) | set(val_idx) == train
        all_val.extend(val_idx)
        event_counts.append(int(ds.event[val_idx].sum()))
    assert sorted(all_val) == sorted(train)
    assert max(event_counts) - min(event_counts) <= 1


def test_holdout_inner_split():
    ds, _ = cohort(missing=False)
    plan = SplitPlan(test_fraction=0.2, inner={"kind": "holdout", "fraction": 0.25})
    res = split(ds, plan, seed=2)
    assert len(res.folds) == 1
    fit_idx, val_idx = res.folds[0]
    assert set(fit_idx) | set(val_idx) == set(res.train_idx)
    e_train = ds.event[res.train_idx]
    n_ev = int(e_train.sum())
    assert int(ds.event[val_idx].sum()) == round(0.25 * n_ev)


def test_split_validation_errors():
    ds, _ = cohort(missing=False)
    with pytest.raises(ConfigError, match="test_fraction"):
        split(ds, SplitPlan(test_fraction=1.0), seed=0)
    with pytest.raises(ConfigError, match="k must be"):
        split(ds, SplitPlan(inner={"kind": "kfold", "k": 1}), seed=0)
    with pytest.raises(ConfigError, match="holdout fraction"):
        split(ds, SplitPlan(inner={"kind": "holdout", "fraction": 0.0}), seed=0)
    with pytest.raises(ConfigError, match="unknown inner split kind"):
        split(ds, SplitPlan(inner={"kind": "loo"}), seed=0)

    j = ds.col_index("event")
    bad_events = ds.values[:, j].copy()
    bad_events[0] = np.nan
    bad_mask = np.zeros(ds.n_rows, dtype=bool)
    bad_mask[0] = True
    broken = replace_column_values(ds, "event", bad_events, mask=bad_mask)
    with pytest.raises(DataError, match="complete"):
        split(broken, SplitPlan(), seed=0)


# -- fold pipelines ---------------------------------------------------------------


def test_fold_pipeline_fits_impute_scale_prune():
    ds = prune_dataset()
    prep = PrepConfig(impute_iterations=3, prune_threshold=0.9, standardize=True)
    pipe = fit_fold_pipeline(ds, prep, seed=0)
    # b has the higher missing rate of the correlated pair, so b goes
    assert pipe.dropped == ["b"]
    assert pipe.feature_names == ["a", "c"]
    assert pipe.x_fit.shape == (ds.n_rows, 2)
    assert np.isfinite(pipe.x_fit).all()
    # scaler was fit before pruning, on every continuous covariate
    assert set(pipe.scaler.stats) == {"a", "b", "c"}


def test_fold_pipeline_transform_applies_to_new_rows():
    ds, _ = cohort(missing=True, n=200)
    res = split(ds, SplitPlan(test_fraction=0.2), seed=5)
    fit_ds = subset_rows(ds, res.train_idx)
    new_ds = subset_rows(ds, res.test_idx)
    prep = PrepConfig(impute_iterations=3)
    pipe = fit_fold_pipeline(fit_ds, prep, seed=1)
    x_new = pipe.transform(new_ds)
    assert x_new.shape == (new_ds.n_rows, len(pipe.feature_names))
    assert np.isfinite(x_new).all()


def test_fold_pipeline_standardize_off():
    ds, _ = cohort(missing=False, n=120)
    pipe = fit_fold_pipeline(ds, PrepConfig(impute_iterations=2, standardize=False), seed=0)
    assert pipe.scaler is None


# -- leakage guarantees ---------------------------------------------------------------


def test_fold_artifacts_ignore_validation_rows():
    """Shifting held-out cells by +1000 must not move any fitted artifact."""
    ds, _ = cohort(missing=True, n=240)
    plan = SplitPlan(test_fraction=0.2, inner={"kind": "kfold", "k": 3})
    res = split(ds, plan, seed=7)
    fit_idx, val_idx = res.folds[0]

    j = ds.col_index("x1")
    shifted = ds.values[:, j].copy()
    shifted[val_idx[::2]] += 1000.0
    ds2 = replace_column_values(ds, "x1", shifted, mask=ds.missing_mask[:, j].copy())

    prep = PrepConfig(impute_iterations=4)
    p1 = fit_fold_pipeline(subset_rows(ds, fit_idx), prep, seed=11)
    p2 = fit_fold_pipeline(subset_rows(ds2, fit_idx), prep, seed=11)

    assert p1.scaler.stats == p2.scaler.stats
    assert p1.dropped == p2.dropped
    assert p1.feature_names == p2.feature_names
    np.testing.assert_array_equal(p1.x_fit, p2.x_fit)
    assert p1.imputer.means == p2.imputer.means
    assert sorted(p1.imputer.models) == sorted(p2.imputer.models)
    for name, beta in p1.imputer.models.items():
        np.testing.assert_array_equal(beta, p2.imputer.models[name])


def test_cv_details_expose_the_leakage_sentinel():
    ds, _ = cohort(missing=True, n=240)
    plan = SplitPlan(test_fraction=0.2, inner={"kind": "kfold", "k": 3})
    res = split(ds, plan, seed=7)
    _, val_idx = res.folds[0]

    j = ds.col_index("x1")
    shifted = ds.values[:, j].copy()
    shifted[val_idx[::2]] += 1000.0
    ds2 = replace_column_values(ds, "x1", shifted, mask=ds.missing_mask[:, j].copy())

    prep = PrepConfig(impute_iterations=4)
    params = {"l1": 0.0, "l2": 0.0}
    cv1 = cv_evaluate(ds, res.folds, "coxph", params, prep, seed=20)
    cv2 = cv_evaluate(ds2, res.folds, "coxph", params, prep, seed=20)

    # fold 0 holds the shifted rows out, so its fitted artifacts are untouched
    assert cv1.details[0].imputer_digest == cv2.details[0].imputer_digest
    assert cv1.details[0].scaler_stats == cv2.details[0].scaler_stats
    assert cv1.details[0].pruned == cv2.details[0].pruned
    # but the shift does reach fold 0's validation score
    assert cv1.scores[0] != cv2.scores[0]
    # and the same rows are fitting rows elsewhere, which must move those folds
    assert any(
        a.imputer_digest != b.imputer_digest
        for a, b in zip(cv1.details[1:], cv2.details[1:])
    )


def test_cv_evaluate_is_deterministic():
    ds, _ = cohort(missing=True, n=160)
    res = split(ds, SplitPlan(test_fraction=0.2, inner={"kind": "kfold", "k": 2}), seed=0)
    params = {"l1": 0.0, "l2": 0.0}
    prep = PrepConfig(impute_iterations=3)
    cv1 = cv_evaluate(ds, res.folds, "coxph", params, prep, seed=5)
    cv2 = cv_evaluate(ds, res.folds, "coxph", params, prep, seed=5)
    assert cv1.scores == cv2.scores
    assert [d.imputer_digest for d in cv1.details] == [d.imputer_digest for d in cv2.details]
    assert all(0.0 <= s <= 1.0 for s in cv1.scores)
    assert [d.fold_index for d in cv1.details] == [0, 1]
    for d in cv1.details:
        assert len(d.imputer_digest) == 64
        assert set(d.fit_row_ids).isdisjoint(d.val_row_ids)


# -- grid search -----------------------------------------------------------------------


def test_expand_grid_order_and_validation():
    points = expand_grid({"a": [1, 2], "b": ["x", "y"]})
    assert points == [
        {"a": 1, "b": "x"},
        {"a": 1, "b": "y"},
        {"a": 2, "b": "x"},
        {"a": 2, "b": "y"},
    ]
    assert expand_grid({}) == [{}]
    with pytest.raises(ConfigError, match="non-empty list"):
        expand_grid({"a": []})
    with pytest.raises(ConfigError, match="non-empty list"):
        expand_grid({"a": 3})


def test_grid_search_prefers_higher_mean_score():
    ds, _ = cohort(missing=False, n=200)
    res = split(ds, SplitPlan(test_fraction=0.2, inner={"kind": "kfold", "k": 2}), seed=1)
    grid = {"l1": [0.0, 10.0], "l2": [0.0]}
    out = grid_search(ds, res.folds, "coxph", grid, PrepConfig(impute_iterations=2), seed=0)
    # l1 = 10 zeroes every coefficient, leaving a constant risk score
    assert out.entries[1]["mean_score"] == pytest.approx(0.5)
    assert out.entries[0]["mean_score"] > 0.55
    assert out.best_index == 0
    assert out.best_params == {"l1": 0.0, "l2": 0.0}
    assert [e["params"] for e in out.entries] == expand_grid(grid)
    for e in out.entries:
        assert e["mean_score"] == pytest.approx(np.mean(e["fold_scores"]))


class _StubFamily:
    """Constant-risk family: every grid point ties at C = 0.5 exactly."""

    name = "stub"
    default_grid = {"size": [1], "lr": [0.1]}

    def make_params(self, d):
        return dict(d)

    def fit(self, x, times, events, params, seed, names=None):
        return dict(params)

    def risk(self, model, x):
        return np.zeros(len(x))

    def curves(self, model, x, times):
        return [np.ones(len(times))] * len(x)

    def complexity(self, params):
        return (params["size"],)

    def lr(self, params):
        return params["lr"]


@pytest.fixture
def stub_family():
    FAMILY_REGISTRY["stub"] = _StubFamily()
    yield
    del FAMILY_REGISTRY["stub"]


def test_grid_ties_prefer_smaller_model_then_lower_lr_then_order(stub_family):
    ds, _ = cohort(missing=False, n=120)
    res = split(ds, SplitPlan(test_fraction=0.2, inner={"kind": "kfold", "k": 2}), seed=0)
    prep = PrepConfig(impute_iterations=2)

    out = grid_search(ds, res.folds, "stub", {"size": [3, 1, 2], "lr": [0.5]}, prep, seed=0)
    assert all(e["mean_score"] == 0.5 for e in out.entries)
    assert out.best_params == {"size": 1, "lr": 0.5}

    out = grid_search(ds, res.folds, "stub", {"size": [2], "lr": [0.9, 0.1, 0.4]}, prep, seed=0)
    assert out.best_params == {"size": 2, "lr": 0.1}

    out = grid_search(ds, res.folds, "stub", {"size": [2, 2], "lr": [0.5]}, prep, seed=0)
    assert out.best_index == 0


# -- factor identification ---------------------------------------------------------------


def test_identify_factors_recovers_signal():
    ds, _ = cohort(missing=True, n=500, seed=4)
    rows = identify_factors(ds, m=3, iterations=3, seed=0)
    assert [r.name for r in rows] == ["x1", "x2", "x3"]
    by_name = {r.name: r for r in rows}

    x1 = by_name["x1"]
    assert 1.5 < x1.hr < 3.0
    assert x1.significant and x1.p_value < 0.05
    assert x1.hr == pytest.approx(np.exp(x1.pooled_beta), rel=1e-12)
    assert x1.hr_low < x1.hr < x1.hr_high

    x2 = by_name["x2"]
    assert x2.hr < 1.0
    assert x2.significant

    for r in rows:
        assert r.pooled_se > 0.0
        assert r.significant == (r.p_value < 0.05)


def test_identify_factors_needs_two_imputations():
    ds, _ = cohort(missing=True, n=120)
    with pytest.raises(ConfigError, match="m >= 2"):
        identify_factors(ds, m=1, iterations=2, seed=0)


def test_factors_to_csv_round_trip(tmp_path):
    ds, _ = cohort(missing=True, n=300, seed=4)
    rows = identify_factors(ds, m=2, iterations=2, seed=1)
    path = tmp_path / "factors.csv"
    factors_to_csv(rows, path)
    with open(path, newline="", encoding="utf-8") as fh:
        read = list(csv.reader(fh))
    assert read[0] == ["variable", "hr", "ci_low", "ci_high", "p_value", "significant"]
    assert len(read) == len(rows) + 1
    for row, rec in zip(rows, read[1:]):
        assert rec[0] == row.name
        assert float(rec[1]) == row.hr
        assert float(rec[4]) == row.p_value
        assert rec[5] == ("yes" if row.significant else "no")


# -- experiment config ----------------------------------------------------------------------


def test_config_from_dict_defaults_and_overrides():
    cfg = ExperimentConfig.from_dict({})
    assert cfg.seed == 0
    assert cfg.plan.test_fraction == 0.2
    assert cfg.plan.inner == {"kind": "kfold", "k": 5}
    assert cfg.prep.impute_iterations == 10
    assert cfg.prep.prune_threshold == 0.7
    assert cfg.prep.standardize is True
    assert cfg.families == {}
    assert cfg.n_boot == 1000

    doc = {
        "seed": 7,
        "split": {"test_fraction": 0.3, "inner": {"kind": "holdout", "fraction": 0.1}},
        "prep": {"impute_iterations": 4, "prune_threshold": 0.9, "standardize": False},
        "families": {"coxph": {"l1": [0.01]}},
        "n_boot": 50,
    }
    cfg = ExperimentConfig.from_dict(doc)
    assert cfg.seed == 7
    assert cfg.plan.inner == {"kind": "holdout", "fraction": 0.1}
    assert cfg.prep.standardize is False
    assert cfg.families == {"coxph": {"l1": [0.01]}}
    assert cfg.n_boot == 50


def test_config_rejects_unknown_family():
    with pytest.raises(ConfigError, match="unknown model family"):
        ExperimentConfig.from_dict({"families": {"forest": {}}})


# -- end-to-end experiment --------------------------------------------------------------------


def fast_config(seed=11, families=None):
    return ExperimentConfig(
        seed=seed,
        plan=SplitPlan(test_fraction=0.2, inner={"kind": "holdout", "fraction": 0.25}),
        prep=PrepConfig(impute_iterations=2),
        families=families if families is not None else {"coxph": {"l1": [0.0], "l2": [0.0, 0.1]}},
        n_boot=40,
    )


def test_run_experiment_report_structure():
    ds, _ = cohort(missing=False, n=200, seed=2)
    report = run_experiment(ds, fast_config())
    content = report.content
    assert set(content) == {
        "toolkit_version",
        "seed",
        "data_digest",
        "config",
        "split_provenance",
        "families",
    }
    assert len(content["data_digest"]) == 64
    prov = content["split_provenance"]
    assert prov["n_train"] + prov["n_test"] == ds.n_rows
    assert set(prov["train_row_ids"]).isdisjoint(prov["test_row_ids"])

    fam = content["families"]["coxph"]
    assert fam["chosen_params"] in ({"l1": 0.0, "l2": 0.0}, {"l1": 0.0, "l2": 0.1})
    assert len(fam["grid"]) == 2
    assert fam["n_features"] == 3
    metrics = fam["test_metrics"]
    assert set(metrics) == {"c_index", "ibs", "tauc_mean"}
    for rec in metrics.values():
        assert set(rec) == {"point", "ci_low", "ci_high", "n_boot", "seed"}
        assert rec["n_boot"] == 40
        assert rec["ci_low"] <= rec["ci_high"]
    assert metrics["c_index"]["point"] > 0.55

    assert report.wall_clock_seconds > 0.0
    assert "coxph" in report.models


def test_run_experiment_bytes_are_deterministic():
    ds, _ = cohort(missing=True, n=200, seed=2)
    b1 = run_experiment(ds, fast_config()).to_json_bytes()
    b2 = run_experiment(ds, fast_config()).to_json_bytes()
    assert b1 == b2
    b3 = run_experiment(ds, fast_config(seed=12)).to_json_bytes()
    assert b1 != b3


def test_run_experiment_empty_grid_uses_family_defaults():
    ds, _ = cohort(missing=False, n=160, seed=3)
    report = run_experiment(ds, fast_config(families={"coxph": {}}))
    fam = report.content["families"]["coxph"]
    assert fam["chosen_params"] == {"l1": 0.0, "l2": 0.0}
    assert len(fam["grid"]) == 1


def test_run_experiment_requires_families():
    ds, _ = cohort(missing=False, n=120)
    with pytest.raises(ConfigError, match="no model families"):
        run_experiment(ds, fast_config(families={}))
