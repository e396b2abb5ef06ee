import warnings

import numpy as np
import pytest

from oracles import brute_gram, dense_qp, optimal_bias_interval, random_instance
from gsvma.kernels import LINEAR, RBF, DimensionMismatch, KernelSpec, gram
from gsvma.svm import (
    DidNotConverge, SingleClassInput, SvmConfig, SvmError, SvmModel, _smo_steps, check_kkt,
    decision_value, dual_objective, fit_gram, load_model, predict, predict_many, save_model, train,
)


def two_point_model():
    return train([[0.0], [2.0]], [-1, 1], SvmConfig(C=10, kernel=KernelSpec(LINEAR), tolerance=1e-9))


def test_two_point_boundary():
    m = two_point_model()
    assert decision_value(m, [1.0]) == pytest.approx(0.0, abs=1e-6)
    assert decision_value(m, [0.0]) == pytest.approx(-1.0, abs=1e-6)
    assert decision_value(m, [2.0]) == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_array_equal(predict_many(m, [[0.0], [2.0]]), [-1, 1])


def test_two_point_matches_oracle():
    X = np.array([[0.0], [2.0]])
    y = np.array([-1.0, 1.0])
    _, b, obj = dense_qp(X @ X.T, y, 10.0)
    m = two_point_model()
    assert m.dual_objective == pytest.approx(obj, abs=1e-10)
    assert m.bias == pytest.approx(b, abs=1e-6)


def test_xor_rbf():
    X = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=float)
    y = np.array([-1, -1, 1, 1])
    m = train(X, y, SvmConfig(C=10, kernel=KernelSpec(RBF, gamma=1.0)))
    np.testing.assert_array_equal(predict_many(m, X), y)
    alpha, b, obj = dense_qp(gram(KernelSpec(RBF, gamma=1.0), X), y, 10.0)
    assert m.dual_objective == pytest.approx(obj, abs=1e-6)


def test_single_class_rejected():
    with pytest.raises(SingleClassInput):
        train([[0.0], [1.0], [2.0]], [1, 1, 1])


@pytest.mark.parametrize("labels", [[1, 0], [1], [2, -1]])
def test_bad_labels(labels):
    with pytest.raises(SvmError):
        train(np.zeros((len(labels), 1)), labels)


def test_dimension_errors():
    m = two_point_model()
    with pytest.raises(DimensionMismatch):
        decision_value(m, [1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        train(np.zeros((3, 2)), [1, -1])


def hand_model(coeffs, bias, rows, C=1.0):
    rows = np.asarray(rows, dtype=float)
    return SvmModel(rows, np.asarray(coeffs, dtype=float), bias, KernelSpec(LINEAR),
                    support=np.arange(len(coeffs)), C=C)


def test_predict_sign_and_tie():
    m = hand_model([1.0], 0.0, [[1.0]])
    assert predict(m, [2.0]) == 1
    assert predict(m, [-2.0]) == -1
    assert decision_value(m, [0.0]) == 0.0
    assert predict(m, [0.0]) == 1


def test_check_kkt_reports_box_violation():
    # alpha = 3 > C = 1 on a point that is otherwise on the margin
    X = [[1.0], [-1.0]]
    m = hand_model([3.0, -3.0], 0.0, X, C=1.0)
    rep = check_kkt(m, X, [1, -1])
    assert rep.max_violation >= 2.0
    assert rep.equality_residual == 0.0


def test_dual_objective_cases():
    assert dual_objective([0, 0], [1, -1], np.eye(2)) == 0.0
    a, g = 0.7, 2.5
    assert dual_objective([a], [1], [[g]]) == pytest.approx(a - 0.5 * a * a * g)
    with pytest.raises(DimensionMismatch):
        dual_objective([1, 2], [1, -1], np.eye(3))


def test_objective_matches_oracle_and_constraints_hold():
    rng = np.random.default_rng(17)
    for _ in range(100):
        X, y, fam, params, C = random_instance(rng)
        K = brute_gram(fam, params, X)
        cfg = SvmConfig(C=C, kernel=KernelSpec(fam, **params))
        m = train(X, y, cfg)
        alpha = np.zeros(y.size)
        alpha[m.support] = m.coeffs * y[m.support]
        assert alpha.min() >= 0 and alpha.max() <= C
        rep = check_kkt(m, X, y)
        assert rep.equality_residual <= 1e-8
        assert rep.max_violation <= cfg.tolerance
        assert dual_objective(alpha, y, K) == pytest.approx(m.dual_objective, abs=1e-10)


def test_tight_solve_matches_oracle_objective_and_bias():
    rng = np.random.default_rng(23)
    for _ in range(40):
        X, y, fam, params, C = random_instance(rng)
        K = brute_gram(fam, params, X)
        alpha, _, obj = dense_qp(K, y, C)
        sol = fit_gram(K, y, C, tolerance=1e-10)
        assert abs(sol.objective - obj) <= 1e-8 * max(1.0, abs(obj))
        lo, hi = optimal_bias_interval(K @ (alpha * y), y)
        assert lo - 1e-6 <= sol.bias <= hi + 1e-6


def test_smo_steps_monotone_and_feasible():
    rng = np.random.default_rng(31)
    for _ in range(20):
        X, y, fam, params, C = random_instance(rng)
        K = np.ascontiguousarray(brute_gram(fam, params, X))
        yf = y.astype(float)
        alpha = np.zeros(y.size)
        grad = -np.ones(y.size)
        prev = 0.0
        for _ in range(500):
            steps, gap = _smo_steps(K, yf, C, 1e-10, 1, alpha, grad)
            assert alpha.min() >= 0 and alpha.max() <= C
            assert abs(np.dot(alpha, yf)) <= 1e-10
            obj = dual_objective(alpha, yf, K)
            assert obj >= prev - 1e-12
            np.testing.assert_allclose(grad, (np.outer(yf, yf) * K) @ alpha - 1, atol=1e-9)
            prev = obj
            if steps == 0:
                break


def test_training_is_deterministic():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 4))
    y = np.where(X[:, 0] + 0.3 * rng.normal(size=40) > 0, 1, -1)
    a = train(X, y, SvmConfig(C=2.0))
    b = train(X, y, SvmConfig(C=2.0))
    assert a.to_dict() == b.to_dict()


def test_model_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    X = rng.uniform(size=(30, 5))
    y = np.where(X[:, 1] > 0.5, 1, -1)
    mask = np.array([1, 1, 0, 1, 0], dtype=bool)
    m = train(X, y, SvmConfig(C=3.0), column_mask=mask)
    path = tmp_path / "model.json"
    save_model(m, path)
    loaded = load_model(path)
    np.testing.assert_array_equal(loaded.decision_function(X), m.decision_function(X))
    assert loaded.to_dict() == m.to_dict()


def test_stored_coefficients_within_box():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(50, 3))
    y = np.where(rng.random(50) < 0.5, 1, -1)
    m = train(X, y, SvmConfig(C=0.5))
    assert np.all(np.abs(m.coeffs) > 0) and np.all(np.abs(m.coeffs) <= 0.5)


def test_budget_exhaustion_warns():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 3))
    y = np.where(rng.random(60) < 0.5, 1, -1)
    with pytest.warns(DidNotConverge):
        m = train(X, y, SvmConfig(C=10, max_pair_updates=2))
    assert not m.converged and m.gap > 1e-3
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert train(X, y, SvmConfig(C=10)).converged
