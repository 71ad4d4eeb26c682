import numpy as np
import pytest

from jointrobust.data import (
    CONSTANT_COLUMN,
    EMPTY_ARM_CONTROL,
    Dataset,
    Schema,
    load_dataset,
    validate_dataset,
    write_dataset,
)
from jointrobust.errors import ParseError, SchemaError, SizeError
from jointrobust.simulation import DgpConfig, generate_dataset


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_three_rows(tmp_path):
    d = load_dataset(write(tmp_path, "x1,z,y\n1,1,2\n2,0,1\n3,1,4\n"))
    assert (d.n, d.d) == (3, 1)
    assert d.treatment.tolist() == [1, 0, 1]
    assert d.covariates[:, 0].tolist() == [1.0, 2.0, 3.0]
    assert d.outcome.tolist() == [2.0, 1.0, 4.0]


def test_bad_treatment_token_names_row(tmp_path):
    with pytest.raises(ParseError, match="row 2") as exc:
        load_dataset(write(tmp_path, "x1,z,y\n1,1,2\n2,2,1\n3,1,4\n"))
    assert exc.value.row == 2


def test_non_numeric_cell_names_row(tmp_path):
    with pytest.raises(ParseError, match="row 3"):
        load_dataset(write(tmp_path, "x1,z,y\n1,1,2\n2,0,1\n3,1,abc\n"))


def test_missing_column(tmp_path):
    with pytest.raises(SchemaError, match="y"):
        load_dataset(write(tmp_path, "x1,z,out\n1,1,2\n2,0,1\n"))


def test_too_few_rows(tmp_path):
    with pytest.raises(SizeError):
        load_dataset(write(tmp_path, "x1,z,y\n1,1,2\n"))


def test_custom_schema(tmp_path):
    p = write(tmp_path, "age,t,outcome,noise\n1,1,2,9\n2,0,1,9\n")
    d = load_dataset(p, Schema(covariates=("age",), treatment="t", outcome="outcome"))
    assert d.d == 1 and d.treatment.tolist() == [1, 0]


def test_round_trip_exact(tmp_path):
    sim = generate_dataset(DgpConfig(150, 0.5, seed=3))
    p = tmp_path / "rt.csv"
    write_dataset(sim.observed, p)
    back = load_dataset(p)
    np.testing.assert_allclose(back.covariates, sim.observed.covariates, rtol=0, atol=1e-12)
    np.testing.assert_allclose(back.outcome, sim.observed.outcome, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(back.treatment, sim.observed.treatment)


def test_validate_empty_control_arm():
    d = Dataset(np.array([[1.0], [2.0], [3.0]]), [1, 1, 1], [1.0, 2.0, 3.0])
    assert EMPTY_ARM_CONTROL in validate_dataset(d).issues


def test_validate_clean():
    d = generate_dataset(DgpConfig(50, 0.0, seed=1)).observed
    r = validate_dataset(d)
    assert r.issues == ()
    assert r.n_treated + r.n_control == d.n


def test_validate_constant_column():
    x = np.column_stack([np.arange(4.0), np.full(4, 7.0)])
    assert CONSTANT_COLUMN in validate_dataset(Dataset(x, [0, 1, 0, 1], np.zeros(4))).issues


def test_validate_non_finite():
    d = Dataset(np.array([[1.0], [np.nan]]), [0, 1], [1.0, 2.0])
    assert "non-finite" in validate_dataset(d).issues


def test_validate_does_not_mutate():
    d = generate_dataset(DgpConfig(40, 1.0, seed=2)).observed
    before = (d.covariates.copy(), d.treatment.copy(), d.outcome.copy())
    validate_dataset(d)
    for a, b in zip(before, (d.covariates, d.treatment, d.outcome)):
        np.testing.assert_array_equal(a, b)
    assert not d.covariates.flags.writeable


def test_dataset_rejects_mismatched_lengths():
    with pytest.raises(SizeError):
        Dataset(np.zeros((3, 1)), [0, 1], [1.0, 2.0, 3.0])
