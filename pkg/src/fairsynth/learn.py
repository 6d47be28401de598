"""Weighted logistic regression fitted by Newton's method."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .tabular import Dataset, Schema, SchemaMismatch


@dataclass(frozen=True)
class Encoder:
    """Design-matrix layout: intercept, then one block per non-outcome attribute.

    Categorical attributes get one indicator per level except the first;
    numeric attributes contribute their value as a single column.
    """

    schema: Schema

    @property
    def inputs(self) -> list[int]:
        out = self.schema.outcome
        return [i for i in range(len(self.schema)) if i != out]

    @property
    def n_columns(self) -> int:
        return 1 + sum(1 if self.schema.attributes[i].numeric else self.schema.attributes[i].size - 1
                       for i in self.inputs)

    def column_names(self) -> list[str]:
        names = ["(intercept)"]
        for i in self.inputs:
            a = self.schema.attributes[i]
            if a.numeric:
                names.append(a.name)
            else:
                names += [f"{a.name}={lev}" for lev in a.levels[1:]]
        return names

    def transform(self, d: Dataset) -> np.ndarray:
        if d.schema.names != self.schema.names or d.schema.shape != self.schema.shape:
            raise SchemaMismatch("dataset schema differs from the model's")
        X = np.zeros((d.n, self.n_columns))
        X[:, 0] = 1.0
        col = 1
        for i in self.inputs:
            a = self.schema.attributes[i]
            idx = d.rows[:, i]
            if a.numeric:
                X[:, col] = a.values()[idx]
                col += 1
            else:
                hit = idx > 0
                X[np.flatnonzero(hit), col + idx[hit] - 1] = 1.0
                col += a.size - 1
        return X


@dataclass(frozen=True)
class LogisticModel:
    coefficients: np.ndarray
    encoder: Encoder
    converged: bool = True
    iterations: int = 0

    @property
    def status(self) -> str:
        return "converged" if self.converged else "iteration-limit"

    def decision_function(self, d: Dataset) -> np.ndarray:
        return self.encoder.transform(d) @ self.coefficients


def _objective(beta, X, y, w, l2):
    z = X @ beta
    ll = y * log_expit(z) + (1 - y) * log_expit(-z)
    return float(w @ ll) - 0.5 * l2 * float(beta @ beta)


def fit_logistic(train: Dataset, l2: float = 1e-6, max_iter: int = 100,
                 tol: float = 1e-8) -> LogisticModel:
    """Maximize the weight-normalized log-likelihood minus (l2/2)||beta||^2.

    Normalizing by the total weight makes the fit invariant to a common
    rescaling of the weights. Converged when the gradient's sup-norm is
    below ``tol``; otherwise the best iterate is returned with
    ``converged=False``.
    """
    if train.n == 0:
        raise ValueError("cannot fit on an empty dataset")
    if l2 < 0:
        raise ValueError("l2 must be nonnegative")
    enc = Encoder(train.schema)
    X = enc.transform(train)
    y = (train.rows[:, train.schema.outcome] == train.schema.favorable_index()).astype(float)
    w = train.weight_vector()
    total = w.sum()
    if total <= 0:
        raise ValueError("total training weight must be positive")
    w = w / total
    beta = np.zeros(X.shape[1])
    obj = _objective(beta, X, y, w, l2)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(X @ beta)
        grad = X.T @ (w * (y - p)) - l2 * beta
        if np.abs(grad).max() < tol:
            converged = True
            it -= 1
            break
        H = (X * (w * p * (1 - p))[:, None]).T @ X + l2 * np.eye(X.shape[1])
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        while t > 1e-12:
            cand = beta + t * step
            new = _objective(cand, X, y, w, l2)
            if new >= obj - 1e-15 * abs(obj):
                break
            t *= 0.5
        else:
            break
        beta, obj = cand, new
    else:
        p = expit(X @ beta)
        grad = X.T @ (w * (y - p)) - l2 * beta
        converged = bool(np.abs(grad).max() < tol)
    return LogisticModel(beta, enc, converged, it)


def gradient(model: LogisticModel, d: Dataset, l2: float = 1e-6) -> np.ndarray:
    """Gradient of the fitting objective at the model's coefficients."""
    X = model.encoder.transform(d)
    y = (d.rows[:, d.schema.outcome] == d.schema.favorable_index()).astype(float)
    w = d.weight_vector() / d.weight_vector().sum()
    return X.T @ (w * (y - expit(X @ model.coefficients))) - l2 * model.coefficients


def predict(model: LogisticModel, d: Dataset, threshold: float = 0.5):
    """Labels (1 = favorable, score >= threshold) and favorable-class scores."""
    scores = expit(model.decision_function(d))
    return (scores >= threshold).astype(np.int64), scores
