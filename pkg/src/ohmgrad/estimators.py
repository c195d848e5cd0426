"""scikit-learn compatible wrappers around circuit training."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .circuit import Circuit, io_map
from .datasets import Dataset
from .graph import CircuitGraph, make_selectors
from .topology import choose_io_edges, grid_graph
from .training import TrainConfig, train


class _NetworkMixin:
    def _graph(self) -> CircuitGraph:
        if self.graph is not None:
            return self.graph
        return grid_graph(*self.grid)

    def _selectors(self, graph, n_in, n_out):
        if self.inputs is not None or self.outputs is not None:
            if self.inputs is None or self.outputs is None:
                raise ValueError("give both inputs and outputs, or neither")
            sel = make_selectors(graph, self.inputs, self.outputs)
        else:
            sel = choose_io_edges(graph, n_in, n_out, self.io_seed)
        if len(sel.inputs) != n_in or len(sel.outputs) != n_out:
            raise ValueError(
                f"selectors have {len(sel.inputs)} inputs / {len(sel.outputs)} outputs, "
                f"data needs {n_in} / {n_out}"
            )
        return sel

    def _fit_circuit(self, X, target, kind, n_out, estimator):
        graph = self._graph()
        sel = self._selectors(graph, X.shape[1], n_out)
        circuit = Circuit(graph, r_min=self.r_min, r_max=self.r_max)
        cfg = TrainConfig(estimator=estimator, eta=self.eta, beta=self.beta, gamma=self.gamma,
                          steps=self.steps, r_min=self.r_min, r_max=self.r_max,
                          r_init=self.r_init, p_freeze=self.p_freeze, seed=self.seed)
        self.trajectory_ = train(circuit, sel, Dataset(X, target, kind), cfg)
        self.circuit_ = circuit
        self.selectors_ = sel
        self.coef_ = io_map(circuit, sel, self.gamma)
        self.resistances_ = circuit.r.copy()
        self.n_features_in_ = X.shape[1]

    def _check_X(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, model was fitted with {self.n_features_in_}")
        return X


class ResistorNetworkRegressor(_NetworkMixin, RegressorMixin, BaseEstimator):
    """Least-squares regression with a trained resistor network.

    Predictions are the readout voltages ``X @ coef_.T`` where ``coef_`` is
    the network's input-output block.

    Parameters
    ----------
    grid : (rows, cols)
        Grid topology used when ``graph`` is None.
    graph : CircuitGraph, optional
    inputs, outputs : sequence of int, optional
        Explicit edge indices; otherwise drawn from the spanning-tree complement with ``io_seed``.
    estimator : {"analytical", "two-phase"}
    """

    def __init__(self, grid=(3, 3), graph=None, inputs=None, outputs=None, io_seed=0,
                 estimator="analytical", eta=None, beta=0.3, gamma=1.0, steps=1000,
                 r_min=0.1, r_max=10.0, r_init=1.0, p_freeze=0.0, seed=0):
        self.grid = grid
        self.graph = graph
        self.inputs = inputs
        self.outputs = outputs
        self.io_seed = io_seed
        self.estimator = estimator
        self.eta = eta
        self.beta = beta
        self.gamma = gamma
        self.steps = steps
        self.r_min = r_min
        self.r_max = r_max
        self.r_init = r_init
        self.p_freeze = p_freeze
        self.seed = seed

    def fit(self, X, y):
        if self.estimator not in ("analytical", "two-phase"):
            raise ValueError(f"regression estimator must be analytical or two-phase, got {self.estimator!r}")
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self._single = y.ndim == 1
        Y = y.reshape(len(y), -1).astype(float)
        self._fit_circuit(X, Y, "regression", Y.shape[1], self.estimator)
        return self

    def predict(self, X):
        out = self._check_X(X) @ self.coef_.T
        return out[:, 0] if self._single else out


class ResistorNetworkClassifier(_NetworkMixin, ClassifierMixin, BaseEstimator):
    """Binary hinge-loss classifier read from a single output edge.

    ``classes_[1]`` is encoded as +1 (positive readout voltage).
    """

    def __init__(self, grid=(5, 5), graph=None, inputs=None, outputs=None, io_seed=3,
                 estimator="analytical", eta=0.1, beta=0.01, gamma=10.0, steps=1000,
                 r_min=0.1, r_max=10.0, r_init=1.0, p_freeze=0.0, seed=0):
        self.grid = grid
        self.graph = graph
        self.inputs = inputs
        self.outputs = outputs
        self.io_seed = io_seed
        self.estimator = estimator
        self.eta = eta
        self.beta = beta
        self.gamma = gamma
        self.steps = steps
        self.r_min = r_min
        self.r_max = r_max
        self.r_init = r_init
        self.p_freeze = p_freeze
        self.seed = seed

    def fit(self, X, y):
        if self.estimator not in ("analytical", "two-phase"):
            raise ValueError(f"estimator must be analytical or two-phase, got {self.estimator!r}")
        X, y = check_X_y(X, y)
        self.classes_ = unique_labels(y)
        if len(self.classes_) != 2:
            raise ValueError(f"binary classification only; got classes {self.classes_.tolist()}")
        signed = np.where(y == self.classes_[1], 1, -1)
        self._fit_circuit(X, signed, "classification", 1, "hinge-" + self.estimator)
        return self

    def decision_function(self, X):
        return (self._check_X(X) @ self.coef_.T)[:, 0]

    def predict(self, X):
        return self.classes_[(self.decision_function(X) >= 0).astype(int)]
