"""Synthetic regression data, the WDBC loader and PCA preprocessing."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.model_selection import train_test_split
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import DatasetParseError, DatasetSchemaError


@dataclass(frozen=True)
class Dataset:
    """Inputs ``X`` (n x E_i) with regression targets (n x E_o) or +/-1 labels (n,)."""

    X: np.ndarray
    y: np.ndarray
    kind: str
    true_map: np.ndarray | None = None
    noise_var: float = 0.0

    def __post_init__(self):
        if self.kind not in ("regression", "classification"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if len(self.X) != len(self.y):
            raise ValueError("inputs and targets differ in length")
        if self.kind == "classification" and not np.all(np.isin(self.y, (-1, 1))):
            raise ValueError("classification labels must be -1 or +1")

    def __len__(self):
        return len(self.X)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.kind, self.true_map, self.noise_var)

    def with_inputs(self, X) -> "Dataset":
        return Dataset(np.asarray(X, dtype=float), self.y, self.kind, self.true_map, self.noise_var)


def gen_regression(n_inputs: int, n_outputs: int, sigma: float, count: int, seed=None) -> Dataset:
    """Draw ``M ~ U[0, 10)``, ``x ~ N(0, I)`` and ``y = M x + eps`` with ``eps ~ N(0, sigma^2 I)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    M = rng.uniform(0.0, 10.0, size=(n_outputs, n_inputs))
    X = rng.standard_normal((count, n_inputs))
    noise = rng.standard_normal((count, n_outputs))
    Y = X @ M.T + sigma * noise
    return Dataset(X, Y, "regression", M, float(sigma) ** 2)


WDBC_FEATURES = 30


def load_wdbc(path) -> Dataset:
    """Parse a UCI ``wdbc.data`` file: id, diagnosis (M/B), 30 features per row.

    Malignant maps to +1, benign to -1; row order is preserved.
    """
    X, y = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != WDBC_FEATURES + 2:
                raise DatasetSchemaError(
                    f"expected {WDBC_FEATURES + 2} fields, found {len(row)}", lineno
                )
            diag = row[1].strip()
            if diag not in ("M", "B"):
                raise DatasetParseError(f"diagnosis must be M or B, got {diag!r}", lineno)
            try:
                X.append([float(f) for f in row[2:]])
            except ValueError as exc:
                raise DatasetParseError(f"non-numeric feature ({exc})", lineno) from exc
            y.append(1 if diag == "M" else -1)
    if not X:
        raise DatasetParseError("file contains no records")
    return Dataset(np.array(X), np.array(y), "classification")


def write_wdbc(dataset: Dataset, path, ids=None) -> None:
    """Write ``dataset`` in the UCI layout understood by :func:`load_wdbc`."""
    ids = range(1, len(dataset) + 1) if ids is None else ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for i, x, lab in zip(ids, dataset.X, dataset.y):
            w.writerow([i, "M" if lab == 1 else "B", *(repr(float(v)) for v in x)])


def bundled_wdbc() -> Dataset:
    """The copy of WDBC shipped with scikit-learn (target 0 = malignant)."""
    from sklearn.datasets import load_breast_cancer

    data = load_breast_cancer()
    return Dataset(np.asarray(data.data, dtype=float), np.where(data.target == 0, 1, -1),
                   "classification")


def stratified_split(dataset: Dataset, test_size: float = 0.2, seed=0):
    idx = np.arange(len(dataset))
    strat = dataset.y if dataset.kind == "classification" else None
    tr, te = train_test_split(idx, test_size=test_size, random_state=seed, stratify=strat)
    return dataset.subset(np.sort(tr)), dataset.subset(np.sort(te))


class StandardizedPCA(TransformerMixin, BaseEstimator):
    """Standardise columns, then project onto the leading principal directions.

    Directions come in descending eigenvalue order, each signed so that its
    largest-magnitude loading is positive. Zero-variance columns are dropped
    with a warning.

    Attributes
    ----------
    mean_, scale_ : ndarray
        Column statistics of the kept columns.
    keep_ : ndarray of bool
        Mask of columns with nonzero variance.
    components_ : ndarray of shape (n_components, n_kept)
    explained_variance_ratio_ : ndarray
    """

    def __init__(self, n_components=3):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=2)
        std = X.std(axis=0)
        keep = std > 0
        if not keep.all():
            warnings.warn(f"dropping zero-variance columns {np.flatnonzero(~keep).tolist()}")
        if self.n_components > keep.sum():
            raise ValueError(f"n_components={self.n_components} exceeds {keep.sum()} usable features")
        self.keep_ = keep
        self.mean_ = X[:, keep].mean(axis=0)
        self.scale_ = std[keep]
        Z = (X[:, keep] - self.mean_) / self.scale_
        evals, evecs = np.linalg.eigh(Z.T @ Z / len(Z))
        order = np.argsort(evals)[::-1]
        evals, evecs = np.clip(evals[order], 0, None), evecs[:, order].T
        flip = np.sign(evecs[np.arange(len(evecs)), np.argmax(np.abs(evecs), axis=1)])
        evecs = evecs * flip[:, None]
        self.components_ = evecs[: self.n_components]
        self.explained_variance_ = evals[: self.n_components]
        self.explained_variance_ratio_ = self.explained_variance_ / evals.sum()
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X)
        return ((X[:, self.keep_] - self.mean_) / self.scale_) @ self.components_.T


def pca_reduce(data, dims: int):
    """Standardise and project ``data`` onto ``dims`` principal directions.

    Returns ``(projected, basis, explained_variance_ratio)``.
    """
    pca = StandardizedPCA(dims).fit(data)
    return pca.transform(data), pca.components_, pca.explained_variance_ratio_
