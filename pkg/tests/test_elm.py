import numpy as np
import pytest

from paramrom import FitFailure, InvalidArgument
from paramrom.elm import (
    ElmModel,
    FeatureBank,
    evaluate,
    feature_matrix,
    fit_min_norm,
    gradient,
    load_model,
    sample_features,
    sobol_points,
    train_elm,
)


@pytest.mark.parametrize("offsets", ["box", "uniform"])
def test_feature_bank_invariants(offsets):
    bank = sample_features(500, 10, 1, offsets)
    assert np.abs(np.linalg.norm(bank.B, axis=1) - 1).max() <= 1e-12
    assert np.abs(bank.c).max() <= np.sqrt(10)


def test_feature_bank_determinism():
    a, b, c = sample_features(20, 3, 5), sample_features(20, 3, 5), sample_features(20, 3, 6)
    assert np.array_equal(a.B, b.B) and np.array_equal(a.c, b.c)
    assert not np.array_equal(a.B, c.B)
    with pytest.raises(InvalidArgument):
        sample_features(10, 2, 0, offsets="nope")


def test_box_offsets_put_kinks_inside_the_box():
    bank = sample_features(200, 4, 0)
    # each hyperplane b.t + c = 0 passes through a point of [0,1]^4
    corners = np.array(np.meshgrid(*[[0, 1]] * 4, indexing="ij")).reshape(4, -1).T
    vals = bank.pre_activation(corners)
    assert np.all(vals.min(axis=0) <= 0) and np.all(vals.max(axis=0) >= 0)


def test_sobol_points():
    P = sobol_points(2000, 20)
    assert P.shape == (2000, 20)
    assert P.min() >= 0 and P.max() <= 1
    assert np.array_equal(P[:1], np.zeros((1, 20)))
    with pytest.raises(InvalidArgument):
        sobol_points(0, 2)


def _star_discrepancy_estimate(P, grid=40):
    g = np.linspace(0, 1, grid + 1)[1:]
    worst = 0.0
    for a in g:
        for b in g:
            frac = np.mean((P[:, 0] < a) & (P[:, 1] < b))
            worst = max(worst, abs(frac - a * b))
    return worst


def test_sobol_discrepancy_decreases():
    d = [_star_discrepancy_estimate(sobol_points(J, 2)) for J in (16, 64, 256)]
    assert d[0] > d[1] > d[2]


def test_feature_matrix_examples():
    B = np.array([[1.0, 0.0]])
    bank = FeatureBank(B=B, c=np.array([0.0]))
    T = np.random.default_rng(0).random((5, 2))
    assert np.allclose(feature_matrix(bank, T)[:, 0], T[:, 0])
    bank = sample_features(30, 3, 0)
    assert np.array_equal(feature_matrix(bank, np.zeros((1, 3)))[0], np.maximum(bank.c, 0))
    pos = FeatureBank(B=bank.B, c=np.full(30, np.sqrt(3)))
    assert np.all(feature_matrix(pos, np.random.default_rng(1).uniform(0.01, 0.99, (10, 3))) > 0)


def test_fit_identity_system():
    U = np.random.default_rng(0).standard_normal((6, 3))
    W, rep = fit_min_norm(np.eye(6), U)
    assert np.abs(W - U.T).max() <= 1e-9 * np.abs(U).max()
    assert rep.max_residual <= 1e-8


def test_fit_min_norm_projection():
    rng = np.random.default_rng(2)
    Psi = np.maximum(rng.standard_normal((20, 80)), 0)
    V = rng.standard_normal((80, 2))
    U = Psi @ V
    W, _ = fit_min_norm(Psi, U)
    assert np.abs(Psi @ W.T - U).max() <= 1e-8 * (1 + np.abs(U).max())
    assert np.all(np.linalg.norm(W, axis=1) <= np.linalg.norm(V, axis=0) + 1e-12)
    # the min-norm solution lies in the row space of Psi
    proj = Psi.T @ np.linalg.lstsq(Psi.T, W.T, rcond=None)[0]
    assert np.abs(proj - W.T).max() < 1e-8


def test_fit_failure_on_rank_deficiency():
    Psi = np.zeros((5, 10))
    Psi[:, 0] = 1.0
    with pytest.raises(FitFailure):
        fit_min_norm(Psi, np.arange(5.0))


def test_fit_rejects_mismatched_rows():
    with pytest.raises(InvalidArgument):
        fit_min_norm(np.ones((4, 8)), np.ones(5))


def _toy_model(J=50, M=200, n_t=3, seed=0):
    P = sobol_points(J, n_t)
    U = np.column_stack([np.sin(P @ np.arange(1.0, n_t + 1)), np.prod(P, axis=1), np.ones(J)])
    return P, U, train_elm(P, U, M, seed)


def test_train_interpolates():
    P, U, model = _toy_model()
    assert np.abs(evaluate(model, P) - U).max() <= 1e-8 * (1 + np.abs(U).max())
    assert model.K == 3 and model.n_t == 3


def test_evaluate_zero_weights():
    bank = sample_features(10, 2, 0)
    m = ElmModel(bank=bank, W=np.zeros((4, 10)))
    assert np.array_equal(evaluate(m, [0.3, 0.4]), np.zeros(4))
    assert np.array_equal(gradient(m, [0.3, 0.4]), np.zeros((4, 2)))


def test_gradient_single_feature():
    bank = FeatureBank(B=np.array([[1.0, 0.0]]), c=np.array([-0.5]))
    m = ElmModel(bank=bank, W=np.array([[1.0]]))
    assert gradient(m, [0.7, 0.2])[0, 0] == 1.0
    assert gradient(m, [0.3, 0.2])[0, 0] == 0.0
    assert gradient(m, [0.5, 0.2])[0, 0] == 0.0  # kink convention


def test_gradient_finite_differences():
    _, _, model = _toy_model()
    rng = np.random.default_rng(4)
    h, checked = 1e-6, 0
    while checked < 20:
        t = rng.uniform(0.05, 0.95, 3)
        if np.abs(model.bank.pre_activation(t)).min() < 1e-4:
            continue
        fd = np.column_stack([(evaluate(model, t + h * e) - evaluate(model, t - h * e)) / (2 * h) for e in np.eye(3)])
        g = gradient(model, t)
        assert np.linalg.norm(fd - g) <= 1e-5 * np.linalg.norm(g)
        checked += 1


def test_model_roundtrip(tmp_path):
    _, _, model = _toy_model()
    model.provenance = "abc123"
    path = tmp_path / "m.npz"
    model.save(path)
    back = load_model(path)
    assert np.array_equal(back.W, model.W)
    assert np.array_equal(back.bank.B, model.bank.B) and np.array_equal(back.bank.c, model.bank.c)
    assert back.provenance == "abc123"
    t = np.random.default_rng(0).random(3)
    assert np.array_equal(evaluate(back, t), evaluate(model, t))


def test_large_fit_residual():
    # J=2000, M=8000 on smooth data with K=50 outputs
    P = sobol_points(2000, 20)
    freq = np.random.default_rng(0).standard_normal((20, 50))
    U = np.sin(P @ freq) + 1
    model = train_elm(P, U, 8000, seed=1)
    assert model.fit_report.relative_residual <= 1e-8
