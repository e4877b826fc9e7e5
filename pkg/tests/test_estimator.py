import json

import numpy as np
import pytest

from sdrn import estimator as est
from sdrn.losses import LossSpec, loss_value
from sdrn.relu_product import approx_basis_eval
from sdrn.sparse_grid import enumerate_basis, tensor_hat_eval

QUADRATIC = LossSpec("quadratic")


def test_hyperparams_schedule():
    assert est.hyperparams_from_n(2000, 0) == (2, 6)
    assert est.hyperparams_from_n(2000, -2) == (0, 6)
    assert est.hyperparams_from_n(5000, 1) == (3, 9)
    with pytest.raises(ValueError):
        est.hyperparams_from_n(1, 0)


def test_scale_covariates():
    X = np.array([[2.0, 0.1], [4.0, 0.9], [6.0, 0.5]])
    scaled, scaler = est.scale_covariates(X)
    assert np.allclose(scaled[:, 0], [0.0, 0.5, 1.0])
    assert np.max(np.abs(scaled[:, 1] - np.array([0.0, 1.0, 0.5]))) <= 1e-12
    # unit-range column is unchanged
    X2 = np.array([[0.0], [1.0], [0.25]])
    scaled2, _ = est.scale_covariates(X2)
    assert np.max(np.abs(scaled2[:, 0] - X2[:, 0])) <= 1e-12
    # values beyond the training range clamp to the cube
    assert scaler.transform(np.array([[0.0, 0.5]]))[0, 0] == 0.0
    assert scaler.transform(np.array([[9.0, 0.5]]))[0, 0] == 1.0
    with pytest.raises(est.ConstantColumnError):
        est.scale_covariates(np.array([[1.0, 2.0], [1.0, 3.0]]))


def test_feature_matrix_corner_row():
    fmap = est.FeatureMap(basis=enumerate_basis(2, 0), R=2)
    row = fmap(np.array([[0.0, 0.0]]))
    exact = np.array([1.0, 0.0, 0.0, 0.0])
    assert row.shape == (1, 4)
    assert np.max(np.abs(row[0] - exact)) <= 3.0 * 2.0 ** -6
    assert fmap(np.empty((0, 2))).shape == (0, 4)
    with pytest.raises(ValueError):
        fmap(np.zeros((3, 5)))


def test_feature_matrix_matches_per_id_evaluation():
    gen = np.random.default_rng(1)
    basis = enumerate_basis(3, 3)
    fmap = est.FeatureMap(basis=basis, R=5)
    X = gen.random((40, 3))
    Phi = fmap(X)
    for col in range(0, len(basis), 17):
        direct = approx_basis_eval(5, basis.ids[col], X)
        assert np.all(Phi[:, col] == direct)


def test_feature_matrix_high_r_approaches_exact_tensor():
    gen = np.random.default_rng(2)
    basis = enumerate_basis(4, 2)
    fmap = est.FeatureMap(basis=basis, R=12)
    X = gen.random((30, 4))
    Phi = fmap(X)
    exact = np.column_stack([tensor_hat_eval(bid, X) for bid in basis.ids])
    assert np.max(np.abs(Phi - exact)) <= 3.0 * 2.0 ** -26 * 3


def test_objective_examples():
    Phi = np.array([[1.0], [1.0]])
    y = np.array([1.0, 1.0])
    assert est.objective(np.zeros(1), Phi, y, QUADRATIC, 0.0) == 2.0
    assert est.objective(np.zeros(1), Phi, y, LossSpec("huber", delta=1.0), 5.0) == 1.0
    with pytest.raises(ValueError):
        est.objective(np.zeros(2), Phi, y, QUADRATIC, 0.0)
    with pytest.raises(ValueError):
        est.objective(np.zeros(1), Phi, y, QUADRATIC, -1.0)


def test_objective_matches_bruteforce():
    gen = np.random.default_rng(3)
    for spec in (QUADRATIC, LossSpec("huber", delta=0.7), LossSpec("quantile", tau=0.3)):
        Phi = gen.standard_normal((20, 6))
        y = gen.standard_normal(20)
        gamma = gen.standard_normal(6)
        lam = 1.7
        total = 0.0
        for i in range(20):
            pred = float(np.dot(Phi[i], gamma))
            total += float(loss_value(spec, pred, y[i]))
        total += 0.5 * lam * float(np.sum(gamma ** 2))
        assert abs(est.objective(gamma, Phi, y, spec, lam) - total) <= 1e-10


def test_gradient_matches_finite_differences():
    gen = np.random.default_rng(4)
    h = 1e-6
    specs = [QUADRATIC, LossSpec("huber", delta=1.0), LossSpec("quantile", tau=0.4), LossSpec("logistic")]
    for spec in specs:
        for _ in range(100):
            Phi = gen.uniform(0, 1, (15, 5))
            if spec.kind == "logistic":
                y = gen.integers(0, 2, 15).astype(float)
            else:
                y = gen.standard_normal(15)
            gamma = gen.uniform(-0.5, 0.5, 5)
            if spec.kind == "quantile":
                resid = y - Phi @ gamma
                if np.min(np.abs(resid)) < 1e-4:
                    continue
            lam = 0.9
            grad = est.objective_gradient(gamma, Phi, y, spec, lam)
            for k in range(5):
                e = np.zeros(5)
                e[k] = h
                fd = (
                    est.objective(gamma + e, Phi, y, spec, lam)
                    - est.objective(gamma - e, Phi, y, spec, lam)
                ) / (2 * h)
                scale = max(1.0, abs(fd))
                assert abs(grad[k] - fd) / scale <= 1e-5


def test_adam_single_step_value():
    # with |gradient| = 1 the bias corrections cancel: step = alpha / (1 + eps)
    Phi = np.array([[1.0]])
    y = np.array([0.5])  # gradient at gamma=0 is 2*(0-0.5)*1 = -1
    cfg = est.FitConfig(loss=QUADRATIC, kappa=0.0, epochs=1, tol=0.0)
    gamma, diag = est.adam_fit(Phi, y, cfg)
    assert gamma[0] == pytest.approx(0.1 / (1.0 + 1e-8), rel=1e-14)
    assert diag.epochs_run == 1


def test_adam_rejects_zero_epochs():
    cfg = est.FitConfig(loss=QUADRATIC, epochs=0)
    with pytest.raises(ValueError):
        est.adam_fit(np.ones((2, 1)), np.ones(2), cfg)


def test_adam_nonfinite_aborts():
    cfg = est.FitConfig(loss=QUADRATIC, epochs=10)
    with pytest.raises(est.NonFiniteObjectiveError):
        est.adam_fit(np.ones((2, 1)), np.array([np.inf, 1.0]), cfg)


def test_adam_matches_ridge_closed_form():
    gen = np.random.default_rng(7)
    Phi = gen.random((50, 20))
    y = gen.standard_normal(50)
    lam = 2.0
    closed = np.linalg.solve(2.0 * Phi.T @ Phi + lam * np.eye(20), 2.0 * Phi.T @ y)
    cfg = est.FitConfig(loss=QUADRATIC, kappa=lam, epochs=10_000)
    gamma, diag = est.adam_fit(Phi, y, cfg)
    assert np.max(np.abs(gamma - closed)) <= 1e-4
    assert diag.converged


def test_adam_objective_decreases_over_windows():
    gen = np.random.default_rng(8)
    Phi = gen.random((40, 10))
    y = gen.standard_normal(40)
    cfg = est.FitConfig(loss=QUADRATIC, kappa=1.0, epochs=600, tol=0.0, track_objective=True)
    _, diag = est.adam_fit(Phi, y, cfg)
    trace = diag.objective_trace
    warmup = 100
    for t in range(warmup, len(trace) - 50):
        assert trace[t + 50] <= trace[t] + 1e-9 * max(1.0, abs(trace[t]))


def test_adam_deterministic():
    gen = np.random.default_rng(9)
    Phi = gen.random((30, 8))
    y = gen.standard_normal(30)
    cfg = est.FitConfig(loss=LossSpec("huber", delta=1.0), kappa=0.5, epochs=200)
    g1, _ = est.adam_fit(Phi, y, cfg)
    g2, _ = est.adam_fit(Phi, y, cfg)
    assert np.all(g1 == g2)
    minibatch = est.FitConfig(
        loss=LossSpec("huber", delta=1.0), kappa=0.5, epochs=200, batch_size=7, seed=5
    )
    g3, _ = est.adam_fit(Phi, y, minibatch)
    g4, _ = est.adam_fit(Phi, y, minibatch)
    assert np.all(g3 == g4)
    assert not np.all(g3 == g1)


def test_unpenalized_equals_kappa_zero():
    gen = np.random.default_rng(10)
    Phi = gen.random((25, 5))
    y = gen.standard_normal(25)
    a, _ = est.adam_fit(Phi, y, est.FitConfig(loss=QUADRATIC, kappa=0.0, epochs=300))
    b, _ = est.adam_fit(Phi, y, est.FitConfig(loss=QUADRATIC, kappa=0.0, epochs=300))
    assert np.all(a == b)


def _small_model(loss=QUADRATIC, n=60, seed=11):
    gen = np.random.default_rng(seed)
    X = gen.uniform(0.0, 2.0, (n, 2))
    if loss.kind == "logistic":
        y = (gen.random(n) < 0.5).astype(float)
    else:
        y = np.sin(X[:, 0]) + X[:, 1] + 0.1 * gen.standard_normal(n)
    cfg = est.FitConfig(loss=loss, kappa=1.0, epochs=400, seed=3)
    return est.fit_sdrn(X, y, cfg, m=1, R=4, column_names=("a", "b")), X


def test_fit_predict_and_one_hot():
    model, X = _small_model()
    assert len(model.gamma) == len(enumerate_basis(2, 1))
    # a one-hot coefficient vector turns prediction into a single feature value
    k = 5
    one_hot = np.zeros_like(model.gamma)
    one_hot[k] = 1.0
    probe = est.SdrnModel(
        gamma=one_hot,
        d=2,
        m=1,
        R=4,
        loss=QUADRATIC,
        kappa=1.0,
        scaler=model.scaler,
    )
    pts = X[:7]
    fmap = probe.feature_map()
    expected = fmap(model.scaler.transform(pts))[:, k]
    assert np.all(probe.predict(pts) == expected)


def test_model_json_round_trip_bitwise():
    model, _ = _small_model()
    doc = json.loads(json.dumps(model.to_json()))
    clone = est.SdrnModel.from_json(doc)
    gen = np.random.default_rng(12)
    pts = gen.uniform(-0.5, 2.5, (1000, 2))
    assert np.all(model.predict(pts) == clone.predict(pts))


def test_model_schema_version_guard():
    model, _ = _small_model()
    doc = model.to_json()
    doc["schema_version"] = 99
    with pytest.raises(ValueError):
        est.SdrnModel.from_json(doc)


def test_logistic_prediction_threshold():
    model, X = _small_model(loss=LossSpec("logistic"))
    model.gamma[:] = 0.0  # score 0 everywhere: sigmoid = 0.5, ties go to class 1
    assert np.all(model.predict_class(X[:5]) == 1)
    probs = model.predict_proba(X[:5])
    assert np.all(probs == 0.5)
    plain, _ = _small_model()
    with pytest.raises(ValueError):
        plain.predict_proba(X[:3])


def test_fit_sup_norm_diagnostic():
    model, X = _small_model()
    train_preds = model.predict(X)
    assert model.diagnostics.sup_norm == pytest.approx(np.max(np.abs(train_preds)), rel=1e-12)
