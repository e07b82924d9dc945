import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from margincausal.dataset import (BINARY, CATEGORICAL, CONTINUOUS, Dataset, DgpSpec, Schema,
                                  TreatmentVector, generate, load_csv, read_schema_file,
                                  replicate_rng, replicate_seed, standardize, write_csv)
from margincausal.errors import InsufficientDataError, ParseError, SchemaError


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_three_rows(tmp_path):
    p = _write(tmp_path, "y,t,z1,z2\n1.0,0,0.5,1\n2.0,1,1.5,2\n3.0,1,2.5,0\n")
    d = load_csv(p, Schema("t", BINARY, "y"))
    assert (d.n, d.p) == (3, 2)
    assert d.column_names == ("z1", "z2")
    np.testing.assert_array_equal(d.T, [-1, 1, 1])
    np.testing.assert_array_equal(d.outcome, [1, 2, 3])
    assert d.treatment.labels == (0, 1)


def test_binary_with_three_values_rejected(tmp_path):
    p = _write(tmp_path, "t,z\n0,1\n1,2\n2,3\n")
    with pytest.raises(SchemaError):
        load_csv(p, Schema("t", BINARY))


def test_na_row_rejected_and_counted(tmp_path):
    p = _write(tmp_path, "y,t,z1\n1,0,0.1\n2,1,NA\n3,1,0.3\n4,0,\n5,0,0.7\n")
    d = load_csv(p, Schema("t", BINARY, "y"))
    assert d.n == 3
    assert d.rejected_rows == (2, 4)


def test_parse_error_location(tmp_path):
    p = _write(tmp_path, "t,z1\n0,1\n1,abc\n")
    with pytest.raises(ParseError) as ei:
        load_csv(p, Schema("t", BINARY))
    assert ei.value.row == 2 and ei.value.column == "z1"


def test_missing_column_and_too_few_rows(tmp_path):
    p = _write(tmp_path, "t,z1\n0,1\n1,2\n")
    with pytest.raises(SchemaError):
        load_csv(p, Schema("t", BINARY, covariates=("z9",)))
    q = _write(tmp_path, "t,z1\n0,1\n", "one.csv")
    with pytest.raises(InsufficientDataError):
        load_csv(q, Schema("t", BINARY))


def test_schema_file(tmp_path):
    s = _write(tmp_path, "# roles\ntreatment = dose\ntreatment_kind = continuous\n"
                         "outcome = y\ncovariates = a, b\n", "s.ini")
    schema = read_schema_file(s)
    assert schema == Schema("dose", CONTINUOUS, "y", ("a", "b"))


def test_categorical_and_continuous_invariants():
    TreatmentVector(CATEGORICAL, [0, 1, 2, 1])
    with pytest.raises(SchemaError):
        TreatmentVector(CATEGORICAL, [0, 2, 2, 3])  # level 1 absent
    with pytest.raises(SchemaError):
        TreatmentVector(CATEGORICAL, [0, 1, 0, 1])  # K = 2
    with pytest.raises(SchemaError):
        TreatmentVector(CONTINUOUS, [1.0, 2.0, 1.0])
    with pytest.raises(InsufficientDataError):
        TreatmentVector(BINARY, [1.0, 1.0])


def test_csv_roundtrip(tmp_path):
    d = generate(DgpSpec("fig2-bivariate", n=20, seed=4))
    write_csv(d, tmp_path / "r.csv")
    back = load_csv(tmp_path / "r.csv", Schema("t", BINARY, "y"))
    np.testing.assert_array_equal(back.covariates, d.covariates)
    np.testing.assert_array_equal(back.T, d.T)
    np.testing.assert_array_equal(back.outcome, d.outcome)


def test_standardize_arithmetic_and_constant_column():
    z = np.column_stack([[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]])
    d = Dataset(z, TreatmentVector(BINARY, [-1, 1, 1]))
    s, rec = standardize(d)
    np.testing.assert_allclose(s.covariates[:, 0], [-1, 0, 1], atol=1e-12)
    assert rec.dropped_columns == ("z2",)
    assert s.p == 1
    with pytest.raises(SchemaError):
        standardize(Dataset(z[:, 1:], TreatmentVector(BINARY, [-1, 1, 1])))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(3, 30), st.integers(1, 4)),
              elements=st.floats(-1e3, 1e3)))
def test_standardize_idempotent(z):
    t = np.where(np.arange(len(z)) % 2 == 0, -1.0, 1.0)
    d = Dataset(z, TreatmentVector(BINARY, t))
    try:
        s1, _ = standardize(d)
    except SchemaError:
        return
    np.testing.assert_allclose(s1.covariates.mean(0), 0, atol=1e-10)
    np.testing.assert_allclose(s1.covariates.std(0, ddof=1), 1, atol=1e-10)
    s2, _ = standardize(s1)
    np.testing.assert_allclose(s2.covariates, s1.covariates, atol=1e-10)


def test_generate_is_deterministic():
    a = generate(DgpSpec("fig2-bivariate", n0=100, n1=100, seed=7))
    b = generate(DgpSpec("fig2-bivariate", n0=100, n1=100, seed=7))
    assert a.covariates.tobytes() == b.covariates.tobytes()
    assert a.outcome.tobytes() == b.outcome.tobytes()
    c = generate(DgpSpec("fig2-bivariate", n0=100, n1=100, seed=8))
    assert not np.array_equal(a.covariates, c.covariates)


def test_fig1_group_means():
    d = generate(DgpSpec("fig1-univariate", n=200, seed=1))
    z = d.covariates[:, 0]
    assert abs(z[d.T < 0].mean() + 2) < 0.5
    assert abs(z[d.T > 0].mean() - 2) < 0.5


def test_positivity_forced_assignment():
    d = generate(DgpSpec("positivity-violation", n=1000, seed=3))
    z1 = d.covariates[:, 0]
    assert np.all(d.T[z1 > 0.9] == 1)
    assert np.all(d.T[z1 < 0.1] == -1)


def test_continuous_family():
    d = generate(DgpSpec("continuous-treatment", n=500, seed=3))
    assert d.treatment.kind == CONTINUOUS
    assert d.p == 3


def test_unknown_family():
    with pytest.raises(SchemaError):
        generate(DgpSpec("nope"))


def test_replicate_seeds_are_stable():
    assert replicate_seed(1, 2) == replicate_seed(1, 2)
    assert replicate_seed(1, 2) != replicate_seed(1, 3)
    a = replicate_rng(9, 4).integers(0, 1000, 5)
    b = replicate_rng(9, 4).integers(0, 1000, 5)
    np.testing.assert_array_equal(a, b)


def test_row_permutation_equivariance(tmp_path):
    d = generate(DgpSpec("fig2-bivariate", n=30, seed=2))
    perm = np.random.default_rng(0).permutation(d.n)
    pd = d.subset(perm)
    np.testing.assert_array_equal(pd.covariates, d.covariates[perm])
    np.testing.assert_array_equal(pd.T, d.T[perm])


def test_dataset_is_read_only():
    d = generate(DgpSpec("fig2-bivariate", n=10, seed=2))
    with pytest.raises(ValueError):
        d.covariates[0, 0] = 1.0
