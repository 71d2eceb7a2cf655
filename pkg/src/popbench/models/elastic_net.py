"""Gaussian elastic net fitted by coordinate descent, lambda chosen by K-fold CV."""

from __future__ import annotations

import numpy as np

from popbench._rng import rng_for
from popbench.errors import ModelError
from popbench.models import _kernels
from popbench.models.base import ElasticNetParams, FittedModel, ModelKind, TrainMatrix
from popbench.models.boosting import base_score


def standardize(X: np.ndarray):
    """Column means, population standard deviations, and the non-constant mask."""
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    active = sd > 1e-12 * np.maximum(1.0, np.abs(mean))
    safe = np.where(active, sd, 1.0)
    Z = np.where(active, (X - mean) / safe, 0.0)
    return np.ascontiguousarray(Z), mean, safe, active


def lambda_max(Z: np.ndarray, yc: np.ndarray, alpha: float) -> float:
    n = Z.shape[0]
    return float(np.max(np.abs(Z.T @ yc)) / (n * alpha)) if Z.shape[1] else 0.0


def lambda_path(lmax: float, hp: ElasticNetParams) -> np.ndarray:
    if hp.path_length == 1:
        return np.array([lmax])
    return lmax * np.logspace(0.0, np.log10(hp.path_ratio), hp.path_length)


def _path(Z, yc, lambdas, active, hp: ElasticNetParams):
    return _kernels.enet_path(Z, yc, np.asarray(lambdas, dtype=float), hp.alpha, hp.tol, hp.max_iter, active)


def objective(Z, yc, beta, lam, alpha) -> float:
    """Penalized objective on standardized columns and centred response."""
    r = yc - Z @ beta
    return float(r @ r / (2 * len(yc)) + lam * (alpha * np.abs(beta).sum() + (1 - alpha) * beta @ beta / 2))


def _cv_mse(X, y, lambdas, hp: ElasticNetParams, seed: int) -> np.ndarray:
    n = X.shape[0]
    perm = rng_for(seed, 0).permutation(n)
    fold = np.empty(n, dtype=np.int64)
    fold[perm] = np.arange(n) % hp.cv_folds
    mse = np.zeros((hp.cv_folds, len(lambdas)))
    for k in range(hp.cv_folds):
        tr, va = fold != k, fold == k
        Z, mean, sd, active = standardize(X[tr])
        ybar = y[tr].mean()
        betas, _ = _path(Z, y[tr] - ybar, lambdas, active, hp)
        coef = betas / sd
        intercept = ybar - coef @ mean
        pred = X[va] @ coef.T + intercept
        mse[k] = np.mean((y[va, None] - pred) ** 2, axis=0)
    return mse.mean(axis=0)


def fit_elastic_net(data: TrainMatrix, hp: ElasticNetParams, seed: int) -> FittedModel:
    """Fit on standardized columns; coefficients are returned on the original scale.

    Zero-variance columns get a zero coefficient. Without ``hp.fixed_lambda``
    the penalty is the path value with the lowest mean validation MSE over
    ``hp.cv_folds`` folds (ties resolve to the larger penalty).
    """
    X, y = data.X, data.y
    n, p = X.shape
    if hp.fixed_lambda is None and n < hp.cv_folds:
        raise ModelError(f"elastic net needs n >= cv_folds ({n} < {hp.cv_folds})")
    if n < 2:
        raise ModelError("elastic net needs at least 2 rows")
    Z, mean, sd, active = standardize(X)
    ybar = base_score(y)
    yc = y - ybar
    info: dict = {}
    lmax = lambda_max(Z, yc, hp.alpha) if active.any() else 0.0
    if not active.any() or (hp.fixed_lambda is None and lmax == 0.0):
        beta = np.zeros(p)
        lam = lmax
    elif hp.fixed_lambda is not None:
        lam = hp.fixed_lambda
        betas, sweeps = _path(Z, yc, [lam], active, hp)
        beta = betas[0]
        info["sweeps"] = int(sweeps[0])
    else:
        lambdas = lambda_path(lmax, hp)
        cv = _cv_mse(X, y, lambdas, hp, seed)
        best = int(np.argmin(cv))
        betas, sweeps = _path(Z, yc, lambdas[: best + 1], active, hp)
        beta = betas[-1]
        lam = float(lambdas[best])
        info.update(lambda_path=lambdas, cv_mse=cv, sweeps=int(sweeps[-1]))
    coef = np.where(active, beta / sd, 0.0)
    intercept = ybar - float(coef @ mean) if coef.any() else ybar
    params = {"intercept": intercept, "coef": coef, "lambda_": float(lam), "standardized_coef": beta, **info}
    return FittedModel(ModelKind.ELASTIC_NET, hp, data.feature_names, params)


def predict_elastic_net(model: FittedModel, X: np.ndarray) -> np.ndarray:
    return X @ model.parameters["coef"] + model.parameters["intercept"]
