import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from popbench.errors import ModelError
from popbench.models import (
    ModelKind,
    ModelSpec,
    TrainMatrix,
    feature_usage,
    fit,
    model_from_json,
    model_to_json,
    predict,
)
from popbench.models.base import ElasticNetParams, GradientBoostingParams, RandomForestParams
from popbench.models.boosting import fit_gradient_boosting
from popbench.models.elastic_net import lambda_max, standardize

SMALL_RF = RandomForestParams(n_trees=20)
SMALL_GBT = GradientBoostingParams(rounds=30)


def data(n=60, p=4, seed=0, f=lambda X: X[:, 0] + 0.5 * X[:, 1] ** 2):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    return TrainMatrix(X, f(X), tuple(f"x{j}" for j in range(p)))


# --- brute-force CART oracle ----------------------------------------------

def cart_oracle(X, y, rows, min_node_size, depth=0, max_depth=None):
    ys = [y[i] for i in rows]
    mean = sum(ys) / len(ys)
    if max(ys) == min(ys):
        return ("leaf", ys[0])
    if len(rows) < 2 * min_node_size or (max_depth is not None and depth >= max_depth):
        return ("leaf", mean)
    sse = sum((v - mean) ** 2 for v in ys)
    best = (1e-12 * sse, None, None)
    for f in range(X.shape[1]):
        order = sorted(rows, key=lambda i: X[i, f])
        for k in range(1, len(order)):
            a, b = X[order[k - 1], f], X[order[k], f]
            if a == b:
                continue
            L, R = [y[i] for i in order[:k]], [y[i] for i in order[k:]]
            gain = sse - sum((v - sum(L) / len(L)) ** 2 for v in L) - sum((v - sum(R) / len(R)) ** 2 for v in R)
            if gain > best[0] * (1 + 1e-9):
                best = (gain, f, (a + b) / 2)
    if best[1] is None:
        return ("leaf", mean)
    _, f, t = best
    left = [i for i in rows if X[i, f] <= t]
    right = [i for i in rows if X[i, f] > t]
    return ("split", f, t, cart_oracle(X, y, left, min_node_size, depth + 1, max_depth),
            cart_oracle(X, y, right, min_node_size, depth + 1, max_depth))


def oracle_predict(node, x):
    while node[0] == "split":
        node = node[3] if x[node[1]] <= node[2] else node[4]
    return node[1]


@given(st.integers(2, 8), st.integers(1, 3), st.integers(0, 10_000), st.integers(1, 2))
def test_single_tree_matches_brute_force(n, p, seed, mns):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = rng.normal(size=n)
    m = fit(ModelSpec(ModelKind.RANDOM_FOREST, RandomForestParams(1, p, mns, bootstrap=False)),
            TrainMatrix(X, y, tuple(map(str, range(p)))), seed)
    tree = cart_oracle(X, y, list(range(n)), mns)
    probe = np.vstack([X, rng.normal(size=(20, p))])
    expected = [oracle_predict(tree, x) for x in probe]
    np.testing.assert_allclose(predict(m, probe), expected, rtol=1e-12, atol=1e-12)


def test_pure_leaf_tree_reproduces_step_target():
    x = np.linspace(0, 1, 200)
    y = (x > 0.5).astype(float)
    m = fit(ModelSpec("rf", RandomForestParams(1, 1, 1, bootstrap=False)), TrainMatrix(x[:, None], y, ("x1",)), 0)
    assert np.array_equal(predict(m, x[:, None]), y)


def test_forest_shape_and_defaults():
    d = data()
    m = fit(ModelSpec(ModelKind.RANDOM_FOREST), d, 1)
    assert m.parameters["trees"].n_trees == 499
    assert RandomForestParams().resolve_mtry(330) == 110
    assert RandomForestParams().resolve_mtry(2) == 1


@pytest.mark.parametrize("kind", list(ModelKind))
def test_constant_target_predicts_constant(kind):
    d = data(f=lambda X: np.full(len(X), 0.1 + 0.2))
    hp = {ModelKind.RANDOM_FOREST: SMALL_RF, ModelKind.GRADIENT_BOOSTING: SMALL_GBT}.get(kind)
    for seed in (0, 1):
        m = fit(ModelSpec(kind, hp), d, seed)
        assert np.all(predict(m, np.random.default_rng(5).normal(size=(7, 4))) == 0.1 + 0.2)
    if kind is ModelKind.ELASTIC_NET:
        assert np.all(m.parameters["coef"] == 0) and m.parameters["intercept"] == 0.1 + 0.2
    if kind is ModelKind.GRADIENT_BOOSTING:
        assert np.all(m.parameters["trees"].value == 0)


def test_gbt_two_point_hand_example():
    d = TrainMatrix(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]), ("x",))
    hp = GradientBoostingParams(rounds=1, max_depth=1, row_subsample=1.0, col_subsample=1.0)
    m = fit(ModelSpec("gbt", hp), d, 0)
    np.testing.assert_allclose(predict(m, d.X), [0.4875, 0.5125], rtol=0, atol=1e-15)


def test_gbt_default_shape():
    m = fit(ModelSpec(ModelKind.GRADIENT_BOOSTING), data(n=40), 0)
    trees = m.parameters["trees"]
    assert trees.n_trees == 500
    # leaves stored after shrinkage: |w| <= 0.05 * max|G| / (H + lambda)
    assert np.max(np.abs(trees.value)) < 0.05 * 40


@settings(max_examples=15)
@given(st.integers(0, 10_000))
def test_gbt_training_rmse_non_increasing(seed):
    d = data(n=50, p=5, seed=seed, f=lambda X: np.sin(X[:, 0]) + X[:, 1] * X[:, 2])
    hp = GradientBoostingParams(rounds=100, row_subsample=1.0)
    rmse = fit_gradient_boosting(d, hp, seed, record_training_rmse=True).parameters["training_rmse"]
    assert np.all(np.diff(rmse) <= 0)


def test_enet_zero_lambda_is_least_squares():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(20, 5))
    y = X @ rng.normal(size=5) + 0.1 * rng.normal(size=20) + 3
    m = fit(ModelSpec("en", ElasticNetParams(fixed_lambda=0.0)), TrainMatrix(X, y, tuple("abcde")), 0)
    A = np.column_stack([np.ones(20), X])
    sol = np.linalg.solve(A.T @ A, A.T @ y)
    np.testing.assert_allclose(m.parameters["coef"], sol[1:], atol=1e-6)
    assert m.parameters["intercept"] == pytest.approx(sol[0], abs=1e-6)


def _single_predictor(c, n=40, seed=0):
    # standardized x and centred y with x'y / n == c exactly
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    x = (x - x.mean()) / x.std()
    e = rng.normal(size=n)
    e = e - e.mean()
    e -= x * (x @ e) / (x @ x)
    y = c * x + e
    return TrainMatrix(x[:, None], y, ("x",))


@pytest.mark.parametrize("c,lam,alpha", [(0.3, 1.0, 0.5), (0.9, 1.0, 0.5), (-0.7, 0.2, 0.3), (2.0, 0.5, 1.0)])
def test_enet_soft_threshold_formula(c, lam, alpha):
    d = _single_predictor(c)
    m = fit(ModelSpec("en", ElasticNetParams(alpha=alpha, fixed_lambda=lam)), d, 0)
    s = math.copysign(max(abs(c) - lam * alpha, 0.0), c)
    expected = s / (1 + lam * (1 - alpha))
    assert m.parameters["standardized_coef"][0] == pytest.approx(expected, abs=1e-10)
    if c == 0.3:
        assert m.parameters["standardized_coef"][0] == 0.0


@settings(max_examples=20)
@given(st.integers(0, 10_000), st.floats(0.05, 1.0))
def test_enet_kkt_conditions(seed, alpha):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 6))
    y = X[:, 0] - 2 * X[:, 3] + rng.normal(size=30)
    Z, _, _, _ = standardize(X)
    yc = y - y.mean()
    lam = 0.3 * lambda_max(Z, yc, alpha)
    hp = ElasticNetParams(alpha=alpha, fixed_lambda=lam, tol=1e-10)
    beta = fit(ModelSpec("en", hp), TrainMatrix(X, y, tuple("abcdef")), 0).parameters["standardized_coef"]
    grad = Z.T @ (yc - Z @ beta) / len(y) - lam * (1 - alpha) * beta
    for j in range(6):
        if beta[j] != 0:
            assert grad[j] == pytest.approx(lam * alpha * np.sign(beta[j]), abs=1e-7)
        else:
            assert abs(grad[j]) <= lam * alpha + 1e-7


def test_enet_cv_path():
    m = fit(ModelSpec(ModelKind.ELASTIC_NET), data(n=80, f=lambda X: 2 * X[:, 0] - X[:, 2]), 0)
    p = m.parameters
    assert len(p["lambda_path"]) == 100
    assert p["lambda_path"][-1] == pytest.approx(p["lambda_path"][0] * 1e-4)
    assert p["lambda_"] == p["lambda_path"][int(np.argmin(p["cv_mse"]))]


def test_zero_variance_column_gets_zero_coefficient():
    d = data(n=50)
    X = d.X.copy()
    X[:, 2] = 7.0
    m = fit(ModelSpec("en"), TrainMatrix(X, d.y, d.feature_names), 0)
    assert m.parameters["coef"][2] == 0.0


@pytest.mark.parametrize("kind", list(ModelKind))
def test_predict_realigns_columns_by_name(kind):
    d = data()
    hp = {ModelKind.RANDOM_FOREST: SMALL_RF, ModelKind.GRADIENT_BOOSTING: SMALL_GBT}.get(kind)
    m = fit(ModelSpec(kind, hp), d, 3)
    perm = [2, 0, 3, 1]
    names = [d.feature_names[j] for j in perm]
    np.testing.assert_array_equal(predict(m, d.X[:, perm], names), predict(m, d.X))
    with pytest.raises(ModelError):
        predict(m, d.X[:, :3])


@pytest.mark.parametrize("kind", list(ModelKind))
def test_same_seed_same_model_and_json_round_trip(kind):
    d = data()
    hp = {ModelKind.RANDOM_FOREST: SMALL_RF, ModelKind.GRADIENT_BOOSTING: SMALL_GBT}.get(kind)
    a, b = fit(ModelSpec(kind, hp), d, 11), fit(ModelSpec(kind, hp), d, 11)
    np.testing.assert_array_equal(predict(a, d.X), predict(b, d.X))
    back = model_from_json(model_to_json(a))
    np.testing.assert_array_equal(predict(back, d.X), predict(a, d.X))


def test_forest_parallel_fit_matches_serial():
    from popbench.models.forest import fit_random_forest
    d = data()
    a = fit_random_forest(d, SMALL_RF, 5, n_jobs=1)
    b = fit_random_forest(d, SMALL_RF, 5, n_jobs=4)
    np.testing.assert_array_equal(predict(a, d.X), predict(b, d.X))


def test_feature_usage_counts():
    d = data(f=lambda X: X[:, 0])
    m = fit(ModelSpec("rf", RandomForestParams(5, 4, 1, bootstrap=False, max_depth=1)), d, 0)
    usage = feature_usage(m)
    assert usage.tolist() == [5, 0, 0, 0]


def test_forest_fits_step_function():
    x = np.linspace(0, 1, 500)
    y = np.floor(x * 5)
    m = fit(ModelSpec(ModelKind.RANDOM_FOREST), TrainMatrix(x[:, None], y, ("x",)), 0)
    pred = predict(m, x[:, None])
    assert 1 - np.sum((y - pred) ** 2) / np.sum((y - y.mean()) ** 2) >= 0.95


def test_invalid_hyperparameters():
    with pytest.raises(ModelError):
        GradientBoostingParams(learning_rate=0)
    with pytest.raises(ModelError):
        ElasticNetParams(alpha=0)
    with pytest.raises(ModelError):
        ModelSpec("rf", GradientBoostingParams())
