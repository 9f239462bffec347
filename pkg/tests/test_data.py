import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmf import (
    FitConfig,
    FitReport,
    ModelParams,
    ResponseData,
    get_family,
    holdout_split,
    load_csv_matrix,
    load_model,
    save_csv_matrix,
    save_model,
)
from gmf.data import filter_sparse
from gmf.errors import (
    InputError,
    ParseError,
    ShapeMismatchError,
    SplitInfeasibleError,
    VersionMismatchError,
)

from conftest import random_instance


# ------------------------------------------------------------------ #
# containers
# ------------------------------------------------------------------ #

def test_response_data_shapes():
    y = np.ones((3, 2))
    with pytest.raises(ShapeMismatchError):
        ResponseData(y, np.ones((2, 2), dtype=bool), None, get_family("gaussian"))
    with pytest.raises(ShapeMismatchError):
        ResponseData(y, np.ones((3, 2), dtype=bool), np.ones((4, 1)),
                     get_family("gaussian"))
    data = ResponseData(y, np.ones((3, 2), dtype=bool), None, get_family("gaussian"))
    assert (data.n, data.m, data.d) == (3, 2, 0)
    assert data.x.shape == (3, 0)


def test_validate_requires_coverage():
    y = np.ones((3, 2))
    mask = np.ones((3, 2), dtype=bool)
    mask[1] = False
    data = ResponseData(y, mask, None, get_family("gaussian"))
    with pytest.raises(InputError):
        data.validate()
    mask = np.ones((3, 2), dtype=bool)
    mask[:, 0] = False
    with pytest.raises(InputError):
        ResponseData(y, mask, None, get_family("gaussian")).validate()


def test_validate_rejects_constant_covariate():
    y = np.ones((3, 2))
    x = np.column_stack([np.ones(3), np.arange(3.0)])
    data = ResponseData(y, np.ones((3, 2), dtype=bool), x, get_family("gaussian"))
    with pytest.raises(InputError):
        data.validate()


def test_validate_checks_masked_cells_are_ignored():
    y = np.array([[1.0, -5.0], [0.0, 2.0]])
    mask = np.array([[True, False], [True, True]])
    ResponseData(y, mask, None, get_family("poisson")).validate()


def test_model_params_shapes():
    with pytest.raises(ShapeMismatchError):
        ModelParams(np.zeros(2), np.zeros((1, 3)), np.zeros((2, 2)),
                    np.zeros((4, 2)), np.ones(2))
    params = ModelParams(np.zeros(3), np.zeros((0, 3)), np.zeros((2, 3)),
                         np.zeros((5, 2)), np.ones(3))
    assert params.p == 2
    clone = params.copy()
    clone.u[0, 0] = 9.0
    assert params.u[0, 0] == 0.0


def test_fit_config_validate():
    FitConfig().validate()
    with pytest.raises(InputError):
        FitConfig(method="nelder-mead").validate()
    with pytest.raises(InputError):
        FitConfig(rank=-1).validate()
    with pytest.raises(InputError):
        FitConfig(tol=0.0).validate()
    with pytest.raises(InputError):
        FitConfig(wolfe_c1=0.9, wolfe_c2=0.5).validate()
    with pytest.raises(InputError):
        FitConfig(gamma_u=-1.0).validate()
    cfg = FitConfig(rank=3).replace(tol=1e-5)
    assert cfg.rank == 3 and cfg.tol == 1e-5


# ------------------------------------------------------------------ #
# CSV
# ------------------------------------------------------------------ #

def test_csv_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    matrix = rng.normal(size=(7, 4)) * 10.0 ** rng.integers(-8, 8, size=(7, 4))
    path = tmp_path / "m.csv"
    save_csv_matrix(matrix, path)
    back, mask = load_csv_matrix(path)
    assert mask.all()
    assert np.array_equal(back, matrix)


def test_csv_na_cells(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("1,NA,3\n4,5,\n")
    values, mask = load_csv_matrix(path)
    assert np.array_equal(values, [[1, 0, 3], [4, 5, 0]])
    assert np.array_equal(mask, [[1, 0, 1], [1, 1, 0]])


def test_csv_custom_na_token(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("1,miss\n2,3\n")
    values, mask = load_csv_matrix(path, na_token="miss")
    assert not mask[0, 1] and mask[1].all()


def test_csv_header_autodetect(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("col_a,col_b\n1,2\n3,4\n")
    values, mask = load_csv_matrix(path)
    assert values.shape == (2, 2)
    path.write_text("1,2\n3,4\n")
    values, _ = load_csv_matrix(path)
    assert values.shape == (2, 2) and values[0, 0] == 1.0


def test_csv_errors(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("")
    with pytest.raises(ParseError):
        load_csv_matrix(path)
    path.write_text("1,2\n3\n")
    with pytest.raises(ParseError):
        load_csv_matrix(path)
    path.write_text("1,2\n3,frog\n")
    with pytest.raises(ParseError):
        load_csv_matrix(path)


def test_csv_mask_write(tmp_path):
    path = tmp_path / "m.csv"
    save_csv_matrix(np.array([[1.5, 2.5]]), path, mask=np.array([[True, False]]))
    assert path.read_text().strip() == "1.5,NA"


# ------------------------------------------------------------------ #
# model persistence
# ------------------------------------------------------------------ #

def _round_trip(params, meta, tmp_path):
    path = tmp_path / "model.json"
    save_model(params, meta, path)
    return load_model(path), path


def test_model_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    params = ModelParams(
        beta0=rng.normal(size=4),
        b=rng.normal(size=(2, 4)),
        lam=rng.normal(size=(3, 4)) * 1e-7,
        u=rng.normal(size=(6, 3)) * 1e9,
        phi=rng.uniform(0.5, 2, size=4),
    )
    (back, meta), _ = _round_trip(params, {"family": "gaussian"}, tmp_path)
    for name in ("beta0", "b", "lam", "u", "phi"):
        assert np.array_equal(getattr(back, name), getattr(params, name)), name


def test_model_column_major_layout(tmp_path):
    params = ModelParams(np.zeros(2), np.array([[1.0, 2.0], [3.0, 4.0]]),
                         np.zeros((1, 2)), np.zeros((3, 1)), np.ones(2))
    path = tmp_path / "model.json"
    save_model(params, {"family": "poisson"}, path)
    doc = json.loads(path.read_text())
    assert doc["b"]["data"] == [1.0, 3.0, 2.0, 4.0]
    assert doc["format_version"] == 1
    assert doc["family"] == "poisson"


def test_model_version_and_shape_checks(tmp_path):
    params = ModelParams(np.zeros(2), np.zeros((0, 2)), np.zeros((1, 2)),
                         np.zeros((3, 1)), np.ones(2))
    path = tmp_path / "model.json"
    save_model(params, {"family": "poisson"}, path)
    doc = json.loads(path.read_text())

    bad = dict(doc, format_version=99)
    path.write_text(json.dumps(bad))
    with pytest.raises(VersionMismatchError):
        load_model(path)

    bad = json.loads(json.dumps(doc))
    bad["lambda"]["data"].append(0.0)
    path.write_text(json.dumps(bad))
    with pytest.raises(ShapeMismatchError):
        load_model(path)

    bad = dict(doc, p=5)
    path.write_text(json.dumps(bad))
    with pytest.raises(ShapeMismatchError):
        load_model(path)

    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_model(path)


def test_model_meta_from_report(tmp_path):
    params = ModelParams(np.zeros(2), np.zeros((0, 2)), np.zeros((1, 2)),
                         np.zeros((3, 1)), np.ones(2))
    report = FitReport(method="airwls", objective_trace=[2.0, 1.0],
                       converged=True, diagnostics={"family": "bernoulli"})
    (back, meta), _ = _round_trip(params, report, tmp_path)
    assert meta["method"] == "airwls"
    assert meta["converged"] is True
    assert meta["diagnostics"]["family"] == "bernoulli"


# ------------------------------------------------------------------ #
# splits / filters
# ------------------------------------------------------------------ #

def test_holdout_split_properties():
    data, _ = random_instance("poisson", 12, 9, 2, 0, seed=7, mask_frac=0.1)
    train, test = holdout_split(data, 0.2, seed=1)
    assert not (train & test).any()
    assert np.array_equal(train | test, data.mask)
    assert test.sum() == round(0.2 * data.mask.sum())
    assert train.any(axis=1).all() and train.any(axis=0).all()


def test_holdout_split_deterministic():
    data, _ = random_instance("poisson", 10, 8, 2, 0, seed=7)
    a = holdout_split(data, 0.25, seed=3)
    b = holdout_split(data, 0.25, seed=3)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_holdout_split_errors():
    data, _ = random_instance("poisson", 4, 3, 1, 0, seed=0)
    with pytest.raises(InputError):
        holdout_split(data, 1.5, seed=0)
    with pytest.raises(SplitInfeasibleError):
        holdout_split(data, 0.01, seed=0)  # rounds to zero test cells
    with pytest.raises(SplitInfeasibleError):
        # 90% holdout cannot keep every row/column covered here
        holdout_split(data, 0.9, seed=0, max_retries=5)


def test_filter_sparse():
    y = np.array([[1.0, 0.0, 2.0],
                  [0.0, 0.0, 0.0],
                  [3.0, 0.0, 1.0]])
    data = ResponseData(y, np.ones_like(y, dtype=bool), None, get_family("poisson"))
    sub, rows, cols = filter_sparse(data, 0.5)
    assert rows.tolist() == [0, 2]
    assert cols.tolist() == [0, 2]
    assert sub.y.shape == (2, 2)
    with pytest.raises(InputError):
        filter_sparse(data, 1.1)


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_csv_value_round_trip_property(seed):
    rng = np.random.default_rng(seed)
    value = float(rng.normal() * 10.0 ** rng.integers(-12, 12))
    assert float(f"{value:.17g}") == value
