"""Cohort table tests: schema rules, CSV round-trips, inclusion filters."""

import numpy as np
import pytest

from survkit.errors import DataError, SchemaError
from survkit.tabular import (
    ColumnSpec,
    InclusionRules,
    SurvivalDataset,
    apply_inclusion,
    drop_columns,
    load_csv,
    load_schema,
    replace_column_values,
    save_csv,
    save_schema,
    subset_rows,
    summarize,
    validate_schema,
)


def demo_columns():
    return [
        ColumnSpec("pid", "continuous", role="id"),
        ColumnSpec("months", "continuous", role="time"),
        ColumnSpec("died", "binary", role="event"),
        ColumnSpec("age", "continuous"),
        ColumnSpec("grade", "categorical", levels=["g1", "g2", "g3"]),
        ColumnSpec("male", "binary"),
    ]


def demo_csv(tmp_path, text):
    p = tmp_path / "cohort.csv"
    p.write_text(text, encoding="utf-8")
    return p


BASIC = (
    "pid,months,died,age,grade,male\n"
    "1,12.5,1,63,g2,1\n"
    "2,30,0,NA,g1,0\n"
    "3,7,1,55.25,,1\n"
)


# -- schema ---------------------------------------------------------------------


def test_schema_rejects_bad_kind_and_role():
    with pytest.raises(SchemaError):
        ColumnSpec("x", "numeric")
    with pytest.raises(SchemaError):
        ColumnSpec("x", "continuous", role="exposure")


def test_schema_categorical_levels_rules():
    with pytest.raises(SchemaError):
        ColumnSpec("g", "categorical")  # levels required
    with pytest.raises(SchemaError):
        ColumnSpec("g", "categorical", levels=["a", "a"])  # duplicates
    with pytest.raises(SchemaError):
        ColumnSpec("x", "continuous", levels=["a"])  # levels forbidden


def test_schema_outcome_requirements():
    cols = demo_columns()
    validate_schema(cols)
    with pytest.raises(SchemaError):
        validate_schema([c for c in cols if c.role != "time"])
    with pytest.raises(SchemaError):
        validate_schema(cols + [ColumnSpec("t2", "continuous", role="time")])
    bad = demo_columns()
    bad[1] = ColumnSpec("months", "binary", role="time")
    with pytest.raises(SchemaError):
        validate_schema(bad)


def test_schema_json_round_trip(tmp_path):
    path = tmp_path / "schema.json"
    save_schema(demo_columns(), path)
    loaded = load_schema(path)
    assert [c.name for c in loaded] == [c.name for c in demo_columns()]
    assert loaded[4].levels == ["g1", "g2", "g3"]
    assert loaded[1].role == "time"


def test_schema_json_rejects_garbage(tmp_path):
    path = tmp_path / "schema.json"
    path.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(SchemaError):
        load_schema(path)
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(SchemaError):
        load_schema(path)


# -- CSV loading ------------------------------------------------------------------


def test_load_basic_and_mask(tmp_path):
    ds = load_csv(demo_csv(tmp_path, BASIC), demo_columns())
    assert ds.n_rows == 3
    np.testing.assert_array_equal(ds.time, [12.5, 30.0, 7.0])
    np.testing.assert_array_equal(ds.event, [1.0, 0.0, 1.0])
    # categorical cells become level indices
    assert ds.values[0, ds.col_index("grade")] == 1.0
    # both sentinel spellings mark cells missing
    assert ds.missing_mask[1, ds.col_index("age")]
    assert ds.missing_mask[2, ds.col_index("grade")]
    assert np.isnan(ds.values[1, ds.col_index("age")])
    assert ds.missing_mask.sum() == 2


def test_header_order_does_not_matter(tmp_path):
    shuffled = (
        "male,grade,age,died,months,pid\n"
        "1,g2,63,1,12.5,1\n"
    )
    ds = load_csv(demo_csv(tmp_path, shuffled), demo_columns())
    assert ds.column_names[0] == "pid"
    assert ds.time[0] == 12.5
    assert ds.values[0, ds.col_index("male")] == 1.0


def test_header_mismatch_is_schema_error(tmp_path):
    with pytest.raises(SchemaError, match="header"):
        load_csv(demo_csv(tmp_path, "pid,months,died\n1,2,1\n"), demo_columns())
    with pytest.raises(SchemaError, match="empty"):
        load_csv(demo_csv(tmp_path, ""), demo_columns())


def test_cell_errors_carry_row_numbers(tmp_path):
    bad_number = BASIC.replace("63", "old")
    with pytest.raises(DataError, match="age"):
        load_csv(demo_csv(tmp_path, bad_number), demo_columns())
    bad_level = BASIC.replace("g2", "g9")
    with pytest.raises(DataError, match="g9"):
        load_csv(demo_csv(tmp_path, bad_level), demo_columns())
    bad_binary = "pid,months,died,age,grade,male\n1,12.5,2,63,g2,1\n"
    with pytest.raises(DataError, match="0 or 1"):
        load_csv(demo_csv(tmp_path, bad_binary), demo_columns())
    negative_time = BASIC.replace("12.5", "-1")
    with pytest.raises(DataError, match="negative"):
        load_csv(demo_csv(tmp_path, negative_time), demo_columns())
    ragged = BASIC + "4,1,1,50\n"
    with pytest.raises(DataError, match="fields"):
        load_csv(demo_csv(tmp_path, ragged), demo_columns())


def test_csv_round_trip_identity(tmp_path):
    """save then load reproduces values, mask, and level coding exactly."""
    ds = load_csv(demo_csv(tmp_path, BASIC), demo_columns())
    out = tmp_path / "again.csv"
    save_csv(ds, out)
    back = load_csv(out, demo_columns())
    np.testing.assert_array_equal(back.missing_mask, ds.missing_mask)
    observed = ~ds.missing_mask
    np.testing.assert_array_equal(back.values[observed], ds.values[observed])


def test_round_trip_survives_awkward_floats(tmp_path):
    # repr-based formatting keeps non-integer values exact through text
    cols = demo_columns()
    ds = load_csv(demo_csv(tmp_path, BASIC), cols)
    ds.values[0, ds.col_index("age")] = 0.1 + 0.2  # 0.30000000000000004
    out = tmp_path / "floats.csv"
    save_csv(ds, out)
    back = load_csv(out, cols)
    assert back.values[0, back.col_index("age")] == 0.1 + 0.2


# -- dataset mechanics -------------------------------------------------------------


def test_subset_rows_tracks_provenance(tmp_path):
    ds = load_csv(demo_csv(tmp_path, BASIC), demo_columns())
    sub = subset_rows(ds, [2, 0])
    np.testing.assert_array_equal(sub.row_ids, [2, 0])
    np.testing.assert_array_equal(sub.time, [7.0, 12.5])
    assert sub.patient_ids() == ["3", "1"]


def test_drop_columns(tmp_path):
    ds = load_csv(demo_csv(tmp_path, BASIC), demo_columns())
    slim = drop_columns(ds, ["male"])
    assert "male" not in slim.column_names
    assert slim.values.shape == (3, 5)
    with pytest.raises(SchemaError):
        drop_columns(ds, ["ghost"])


def test_replace_column_values(tmp_path):
    ds = load_csv(demo_csv(tmp_path, BASIC), demo_columns())
    out = replace_column_values(ds, "age", [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(out.values[:, out.col_index("age")], [1.0, 2.0, 3.0])
    assert not out.missing_mask[:, out.col_index("age")].any()
    # original untouched
    assert ds.missing_mask[1, ds.col_index("age")]


def test_dataset_shape_validation():
    cols = demo_columns()
    with pytest.raises(DataError):
        SurvivalDataset(cols, np.zeros((2, 3)), np.zeros((2, 3), dtype=bool))
    with pytest.raises(DataError):
        SurvivalDataset(cols, np.zeros((2, 6)), np.zeros((3, 6), dtype=bool))


# -- inclusion rules ---------------------------------------------------------------


def inclusion_fixture(tmp_path):
    text = (
        "pid,months,died,age,grade,male\n"
        "1,10,1,60,g1,0\n"
        "2,NA,1,61,g2,0\n"      # missing outcome
        "3,20,0,62,g3,1\n"      # excluded level g3
        "4,0.5,1,63,g1,1\n"     # early event
        "5,0.5,0,64,g1,0\n"     # early but censored: kept
        "6,40,0,65,g2,1\n"
    )
    return load_csv(demo_csv(tmp_path, text), demo_columns())


def test_inclusion_rules_and_audit(tmp_path):
    ds = inclusion_fixture(tmp_path)
    rules = InclusionRules(
        drop_missing_outcomes=True,
        exclude_levels={"grade": ["g3"]},
        exclude_early_events=1.0,
    )
    kept, audit = apply_inclusion(ds, rules)
    assert kept.patient_ids() == ["1", "5", "6"]
    assert audit["n_before"] == 6
    assert audit["n_after"] == 3
    by_rule = {s["rule"]: s["n_dropped"] for s in audit["steps"]}
    assert by_rule == {
        "drop_missing_outcomes": 1,
        "exclude_levels:grade": 1,
        "exclude_early_events": 1,
    }


def test_inclusion_exclude_levels_validation(tmp_path):
    ds = inclusion_fixture(tmp_path)
    with pytest.raises(SchemaError):
        apply_inclusion(ds, InclusionRules(exclude_levels={"age": ["60"]}))
    with pytest.raises(SchemaError):
        apply_inclusion(ds, InclusionRules(exclude_levels={"grade": ["g7"]}))


# -- summary -----------------------------------------------------------------------


def test_summarize(tmp_path):
    text = (
        "pid,months,died,age,grade,male\n"
        "1,10,1,60,g1,0\n"
        "2,20,0,NA,g2,0\n"
        "3,30,1,62,g1,1\n"
        "4,40,0,63,NA,1\n"
    )
    ds = load_csv(demo_csv(tmp_path, text), demo_columns())
    s = summarize(ds)
    assert s.n_rows == 4
    assert s.n_events == 2
    assert s.event_fraction == 0.5
    assert s.n_covariates == 3
    assert s.followup_quartiles == (17.5, 25.0, 32.5)
    assert s.followup_max == 40.0
    assert s.missing_pct["age"] == 25.0
    assert s.missing_pct["grade"] == 25.0
    assert s.missing_pct["male"] == 0.0


def test_summarize_requires_complete_outcomes(tmp_path):
    ds = inclusion_fixture(tmp_path)
    with pytest.raises(DataError):
        summarize(ds)
