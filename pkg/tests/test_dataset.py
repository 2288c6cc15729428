import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from npsens.dataset import (
    CASE_STUDY_COUNTS,
    ColumnMapping,
    DegenerateDataError,
    ObservationalDataset,
    Observation,
    SchemaError,
    ValidationError,
    case_study_from_counts,
    empirical_treated_proportion,
    impute_conservative,
    load_case_study,
    load_csv,
    write_csv,
)


def _write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_bundled_case_study_matches_counts():
    data = load_case_study()
    assert data.n == 404
    assert data.p == 0
    s = data.summary()
    assert (s["treated"]["outcome_1"], s["treated"]["outcome_0"], s["treated"]["censored"]) == CASE_STUDY_COUNTS["treated"]
    assert (s["control"]["outcome_1"], s["control"]["outcome_0"], s["control"]["censored"]) == CASE_STUDY_COUNTS["control"]
    ref = case_study_from_counts()
    np.testing.assert_array_equal(ref.a, data.a)
    np.testing.assert_array_equal(ref.c, data.c)
    np.testing.assert_array_equal(np.nan_to_num(ref.y, nan=-1), np.nan_to_num(data.y, nan=-1))


def test_conservative_imputation_zeroes_censored():
    data = case_study_from_counts()
    imp = impute_conservative(data)
    assert np.all(imp.y_star[data.c == 0] == 0.0)
    assert np.all(imp.y_star[data.c == 1] == data.y[data.c == 1])
    treated = imp.y_star[data.a == 1]
    assert math.isclose(treated.mean(), 16 / 55, abs_tol=1e-15)
    assert empirical_treated_proportion(data) == 55 / 404


def test_censored_outcome_cell_is_ignored(tmp_path):
    path = _write(tmp_path, "A,C,Y\n1,1,1\n1,0,1\n0,1,0\n0,0,NA\n")
    data = load_csv(path)
    assert np.isnan(data.y[1])
    assert np.isnan(data.y[3])


def test_missing_uncensored_outcome_is_rejected(tmp_path):
    path = _write(tmp_path, "A,C,Y\n1,1,\n0,1,0\n")
    with pytest.raises(ValidationError) as info:
        load_csv(path)
    assert info.value.row == 0


@pytest.mark.parametrize("row", ["2,1,1", "1,1,0.5", "1,x,1"])
def test_non_binary_values_rejected(tmp_path, row):
    path = _write(tmp_path, f"A,C,Y\n0,1,0\n{row}\n")
    with pytest.raises(ValidationError) as info:
        load_csv(path)
    assert info.value.row == 1


def test_missing_column_is_schema_error(tmp_path):
    path = _write(tmp_path, "A,C,Y\n0,1,0\n")
    with pytest.raises(SchemaError):
        load_csv(path, ColumnMapping(covariates=("age",)))


def test_bad_covariate_reports_row(tmp_path):
    path = _write(tmp_path, "age,A,C,Y\n1.5,0,1,0\nabc,1,1,1\n")
    with pytest.raises(ValidationError) as info:
        load_csv(path, ColumnMapping(covariates=("age",)))
    assert info.value.row == 1


def test_no_treated_rows_is_degenerate():
    with pytest.raises(DegenerateDataError):
        ObservationalDataset(w=np.empty((2, 0)), a=[0, 0], c=[1, 1], y=[0, 1], z=None)


def test_arrays_are_read_only():
    data = case_study_from_counts()
    with pytest.raises(ValueError):
        data.a[0] = 0


def test_from_rows():
    rows = [Observation(w=(0.5,), a=1, c=1, y=1), Observation(w=(1.0,), a=0, c=0, y=None)]
    data = ObservationalDataset.from_rows(rows, covariate_names=("x",))
    assert data.n == 2 and data.p == 1
    assert list(data.rows)[0].y == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=4, max_value=40), st.integers(min_value=0, max_value=2), st.integers(0, 2**31))
def test_csv_round_trip_is_exact(tmp_path_factory, n, p, seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 2, n)
    a[0], a[1] = 1, 0
    c = rng.integers(0, 2, n)
    y = np.where(c == 1, rng.integers(0, 2, n), np.nan)
    w = rng.normal(size=(n, p)) * 10 ** rng.uniform(-5, 5, size=(n, p))
    data = ObservationalDataset(w=w, a=a, c=c, y=y, z=None, covariate_names=tuple(f"w{j}" for j in range(p)))
    path = tmp_path_factory.mktemp("rt") / "x.csv"
    schema = write_csv(data, path)
    back = load_csv(path, schema)
    np.testing.assert_array_equal(back.w, data.w)
    np.testing.assert_array_equal(back.a, data.a)
    np.testing.assert_array_equal(back.c, data.c)
    np.testing.assert_array_equal(np.isnan(back.y), np.isnan(data.y))
    np.testing.assert_array_equal(back.y[c == 1], data.y[c == 1])


def test_imputation_idempotent_and_conservative():
    data = case_study_from_counts()
    once = impute_conservative(data)
    recoded = ObservationalDataset(w=data.w, a=data.a, c=np.ones(data.n), y=once.y_star, z=None)
    np.testing.assert_array_equal(impute_conservative(recoded).y_star, once.y_star)
    rng = np.random.default_rng(0)
    t = data.a == 1
    for _ in range(20):
        other = np.where(data.c == 1, data.y, rng.integers(0, 2, data.n))
        assert once.y_star[t].mean() <= other[t].mean()


@pytest.mark.parametrize("a, expected", [([1, 0], 0.5), ([1, 1, 1, 0], 0.75)])
def test_treated_proportion(a, expected):
    n = len(a)
    data = ObservationalDataset(w=np.empty((n, 0)), a=a, c=[1] * n, y=[0] * n, z=None)
    assert empirical_treated_proportion(data) == expected


def test_empty_file_is_degenerate(tmp_path):
    with pytest.raises(DegenerateDataError):
        load_csv(_write(tmp_path, ""))
