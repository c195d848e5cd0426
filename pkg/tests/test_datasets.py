import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ohmgrad.datasets import (
    Dataset,
    StandardizedPCA,
    bundled_wdbc,
    gen_regression,
    load_wdbc,
    pca_reduce,
    stratified_split,
    write_wdbc,
)
from ohmgrad.errors import DatasetParseError, DatasetSchemaError

ROW_M = "842302,M," + ",".join(["17.99"] + ["1.0"] * 29)
ROW_B = "842517,B," + ",".join(["20.57"] + ["2.0"] * 29)


def test_regression_noiseless():
    d = gen_regression(2, 3, 0.0, 50, seed=1)
    np.testing.assert_array_equal(d.y, d.X @ d.true_map.T)
    assert d.true_map.shape == (3, 2)
    assert np.all((d.true_map >= 0) & (d.true_map < 10))
    assert d.kind == "regression" and d.noise_var == 0


def test_regression_noise_level():
    d = gen_regression(2, 2, 3.0, 20_000, seed=2)
    resid = d.y - d.X @ d.true_map.T
    assert d.noise_var == 9.0
    assert abs(resid.var() - 9.0) < 0.3


def test_regression_deterministic():
    a, b = gen_regression(2, 2, 3.0, 30, 5), gen_regression(2, 2, 3.0, 30, 5)
    assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()


def test_regression_same_map_across_sigma():
    a, b = gen_regression(2, 2, 0.0, 30, 5), gen_regression(2, 2, 3.0, 30, 5)
    np.testing.assert_array_equal(a.true_map, b.true_map)
    np.testing.assert_array_equal(a.X, b.X)


@pytest.mark.parametrize("sigma, count", [(-1.0, 5), (1.0, 0)])
def test_regression_validation(sigma, count):
    with pytest.raises(ValueError):
        gen_regression(2, 2, sigma, count)


def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.zeros(2), "regression")
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), np.array([0, 1]), "classification")
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), np.zeros(2), "ranking")


def test_load_wdbc_rows(tmp_path):
    p = tmp_path / "w.data"
    p.write_text(ROW_M + "\n" + ROW_B + "\n")
    d = load_wdbc(p)
    assert d.y.tolist() == [1, -1]
    assert d.X.shape == (2, 30) and d.X[0, 0] == 17.99 and d.X[1, 0] == 20.57


def test_load_wdbc_truncated(tmp_path):
    p = tmp_path / "w.data"
    p.write_text(ROW_M + "\n" + ROW_B.rsplit(",", 3)[0] + "\n")
    with pytest.raises(DatasetSchemaError) as exc:
        load_wdbc(p)
    assert exc.value.line == 2


def test_load_wdbc_bad_value(tmp_path):
    p = tmp_path / "w.data"
    p.write_text(ROW_B + "\n" + ROW_M.replace("17.99", "abc") + "\n")
    with pytest.raises(DatasetParseError, match="line 2"):
        load_wdbc(p)


def test_load_wdbc_bad_label(tmp_path):
    p = tmp_path / "w.data"
    p.write_text(ROW_M.replace(",M,", ",X,") + "\n")
    with pytest.raises(DatasetParseError, match="line 1"):
        load_wdbc(p)


def test_load_wdbc_empty(tmp_path):
    p = tmp_path / "w.data"
    p.write_text("")
    with pytest.raises(DatasetParseError):
        load_wdbc(p)


def test_wdbc_round_trip(tmp_path):
    d = bundled_wdbc()
    write_wdbc(d, tmp_path / "wdbc.data")
    back = load_wdbc(tmp_path / "wdbc.data")
    assert back.X.shape == (569, 30)
    np.testing.assert_array_equal(back.X, d.X)
    np.testing.assert_array_equal(back.y, d.y)
    assert (back.y == 1).sum() == 212


def test_stratified_split():
    d = bundled_wdbc()
    tr, te = stratified_split(d, 0.2, seed=0)
    assert len(tr) + len(te) == 569 and len(te) == 114
    assert abs((te.y == 1).mean() - (d.y == 1).mean()) < 0.01
    tr2, _ = stratified_split(d, 0.2, seed=0)
    np.testing.assert_array_equal(tr.X, tr2.X)


def test_pca_one_dimensional_data(rng):
    t = rng.standard_normal(100)
    X = np.outer(t, [1.0, -2.0, 0.5]) + [3.0, 1.0, -1.0]
    _, _, ratio = pca_reduce(X, 1)
    assert ratio[0] >= 1 - 1e-9


def test_pca_full_rank_preserves_distances(rng):
    X = rng.standard_normal((40, 5)) * [1, 2, 3, 4, 5]
    Z = (X - X.mean(0)) / X.std(0)
    P, basis, _ = pca_reduce(X, 5)
    d = lambda A: np.linalg.norm(A[:, None] - A[None], axis=-1)  # noqa: E731
    np.testing.assert_allclose(d(P), d(Z), atol=1e-9)
    np.testing.assert_allclose(basis @ basis.T, np.eye(5), atol=1e-12)


def test_pca_against_svd(rng):
    X = rng.standard_normal((60, 6)) @ rng.standard_normal((6, 6))
    Z = (X - X.mean(0)) / X.std(0)
    _, s, Vt = np.linalg.svd(Z, full_matrices=False)
    P, basis, ratio = pca_reduce(X, 3)
    for k in range(3):
        assert abs(abs(basis[k] @ Vt[k]) - 1) < 1e-9
        assert basis[k, np.argmax(np.abs(basis[k]))] > 0
    np.testing.assert_allclose(ratio, s[:3] ** 2 / (s**2).sum(), rtol=1e-9)


def test_pca_wdbc_three_components():
    P, basis, ratio = pca_reduce(bundled_wdbc().X, 3)
    assert P.shape == (569, 3) and basis.shape == (3, 30)
    assert np.all(np.diff(ratio) <= 0)


def test_pca_zero_variance_column(rng):
    X = np.column_stack([rng.standard_normal(30), np.full(30, 2.0), rng.standard_normal(30)])
    with pytest.warns(UserWarning, match="zero-variance"):
        pca = StandardizedPCA(2).fit(X)
    assert pca.keep_.tolist() == [True, False, True]
    assert pca.transform(X).shape == (30, 2)


def test_pca_too_many_dims(rng):
    with pytest.raises(ValueError):
        pca_reduce(rng.standard_normal((10, 3)), 4)


def test_pca_sklearn_api():
    from sklearn.base import clone

    p = clone(StandardizedPCA(n_components=2))
    assert p.get_params() == {"n_components": 2}


@given(st.integers(2, 6), st.integers(0, 10**6))
def test_pca_projection_centered(n_cols, seed):
    X = np.random.default_rng(seed).standard_normal((25, n_cols))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        P, _, ratio = pca_reduce(X, 1)
    assert abs(P.mean()) < 1e-9
    assert 0 < ratio[0] <= 1 + 1e-12
