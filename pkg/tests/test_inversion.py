import csv
from types import SimpleNamespace

import numpy as np
import pytest

from paramrom import ConfigurationError, InvalidArgument
from paramrom.elm import ElmModel, FeatureBank, sample_features
from paramrom.fem import build_mesh
from paramrom.inversion import (
    InverseProblem,
    LineSearchConfig,
    grad_loss,
    loss,
    loss_and_grad,
    potential_error,
    reconstruct,
)
from paramrom.measurement import Observation, build_pixels, measure, precompute_tensor
from paramrom.potentials import ConstantPotential, GaussianPotential


def _setup(weighted=False, mask=None, seed=0, n_t=2):
    mesh = build_mesh(6)
    pots = [ConstantPotential(1.0)] + [
        GaussianPotential(5.0, 0.4, tuple(c)) for c in np.random.default_rng(seed).uniform(-0.6, 0.6, (n_t, 2))
    ]
    px = build_pixels(4, mask=mask)
    tensor = precompute_tensor(mesh, px, pots)
    rng = np.random.default_rng(seed + 1)
    bank = sample_features(40, n_t, seed)
    model = ElmModel(bank=bank, W=rng.standard_normal((mesh.n_nodes, 40)) / 10 + 0.05)
    t_true = np.full(n_t, 0.4)
    q = measure(tensor, t_true, model.W @ np.maximum(bank.pre_activation(t_true)[0], 0))
    cov = (0.05 * q) ** 2 + 1e-4
    obs = Observation(q=q + 0.01 * rng.standard_normal(len(q)), covariance_diag=cov, mask=px.coverage_mask)
    return InverseProblem(model, tensor, obs, weighted=weighted, potentials=pots, true_parameter=t_true)


def _fd(problem, t, h=1e-6):
    return np.array([(loss(problem, t + h * e) - loss(problem, t - h * e)) / (2 * h) for e in np.eye(len(t))])


@pytest.mark.parametrize("weighted", [False, True])
@pytest.mark.parametrize("mask", [None, 0.36])
def test_gradient_matches_finite_differences(weighted, mask):
    problem = _setup(weighted, mask)
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 10:
        t = rng.uniform(0.05, 0.95, 2)
        if np.abs(problem.model.bank.pre_activation(t)).min() < 1e-4:
            continue
        g = grad_loss(problem, t)
        assert np.linalg.norm(g - _fd(problem, t)) <= 1e-5 * max(np.linalg.norm(g), 1e-12) + 1e-10
        checked += 1


def test_zero_residual_gives_zero_loss_and_gradient():
    problem = _setup()
    t = np.array([0.3, 0.7])
    u = problem.model.W @ np.maximum(problem.model.bank.pre_activation(t)[0], 0)
    problem.observation.q = measure(problem.tensor, t, u)
    L, g = loss_and_grad(problem, t)
    assert L <= 1e-28
    assert np.linalg.norm(g) <= 1e-12


def test_masked_pixels_do_not_contribute():
    problem = _setup(mask=0.36)
    t = np.array([0.2, 0.5])
    L0 = loss(problem, t)
    problem.observation.q[~problem.mask] += 100.0
    assert loss(problem, t) == L0


def test_weighted_without_covariance():
    problem = _setup()
    problem.observation.covariance_diag = None
    with pytest.raises(ConfigurationError):
        InverseProblem(problem.model, problem.tensor, problem.observation, weighted=True)
    problem.observation.covariance_diag = np.zeros(problem.tensor.n_pixels)
    with pytest.raises(ConfigurationError):
        InverseProblem(problem.model, problem.tensor, problem.observation, weighted=True)


def test_shape_checks():
    problem = _setup()
    with pytest.raises(InvalidArgument):
        loss(problem, [0.1, 0.2, 0.3])
    bad = Observation(q=np.zeros(3))
    with pytest.raises(InvalidArgument):
        InverseProblem(problem.model, problem.tensor, bad)


def _scalar_problem(q00, q01, q10, q11, w, c, obs, area=1.0):
    """K = M = N_m = 1 with an affine pixel response, solved by hand."""
    bank = FeatureBank(B=np.array([[1.0]]), c=np.array([c]))
    model = ElmModel(bank=bank, W=np.array([[w]]))
    Q = np.array([[[q00]], [[q10]]])
    tensor = SimpleNamespace(
        K=1, n_t=1, n_pixels=1, Q=Q, operator=lambda t: Q[0] + np.tensordot(np.atleast_1d(t), Q[1:], axes=1),
        pixels=SimpleNamespace(pixel_area=area, coverage_mask=np.array([True]), bounds=(-1.0, 1.0)),
    )
    return InverseProblem(model, tensor, Observation(q=np.array([obs])))


def test_scalar_gradient_by_hand():
    q00, q10, w, c, obs = 2.0, 0.5, 3.0, 0.1, 1.0
    problem = _scalar_problem(q00, 0, q10, 0, w, c, obs, area=0.25)
    t = 0.6
    u = w * (t + c)
    pred = u * (q00 + t * q10)
    r = obs - pred
    dpred = w * (q00 + t * q10) + u * q10
    L, g = loss_and_grad(problem, [t])
    assert L == pytest.approx(0.5 * 0.25 * r * r, rel=1e-14)
    assert g[0] == pytest.approx(-0.25 * r * dpred, rel=1e-14)


def test_descent_on_quadratic_least_squares():
    # a single linear feature makes the loss an exact quadratic in t
    problem = _scalar_problem(1.0, 0, 0.0, 0, 2.0, 0.0, 0.8)
    trace = reconstruct(problem, [0.1], max_iter=500)
    assert trace.t_hat[0] == pytest.approx(0.4, abs=1e-6)
    assert np.all(np.diff(trace.losses) <= 0)


def test_descent_projects_onto_box():
    # the unconstrained minimizer sits at t = 1.5, so the iterate stops at 1
    problem = _scalar_problem(1.0, 0, 0.0, 0, 2.0, 0.0, 3.0)
    trace = reconstruct(problem, [0.2], max_iter=100)
    assert trace.t_hat[0] == 1.0
    assert trace.converged


def test_descent_monotone_and_in_box():
    problem = _setup(weighted=True)
    trace = reconstruct(problem, [0.9, 0.1], max_iter=60)
    assert np.all(np.diff(trace.losses) <= 0)
    its = np.array(trace.iterates)
    assert its.min() >= 0 and its.max() <= 1
    assert trace.losses[-1] < trace.losses[0]
    assert len(trace.param_errors) == len(trace.records)


def test_stall_is_reported():
    problem = _setup()
    trace = reconstruct(problem, [0.9, 0.1], max_iter=5, ls=LineSearchConfig(initial_step=1e6, max_backtracks=0))
    assert trace.stalled and not trace.converged
    assert len(trace.records) < 6
    # the returned point is the last accepted iterate
    assert np.array_equal(trace.t_hat, trace.iterates[-1])


def test_line_search_validation():
    for kwargs in ({"initial_step": 0}, {"shrink": 1.0}, {"armijo": 0.0}, {"max_backtracks": -1}):
        with pytest.raises(InvalidArgument):
            LineSearchConfig(**kwargs)


def test_potential_error_cancels_base():
    pots = [ConstantPotential(7.0), GaussianPotential(2.0, 0.3, (0.0, 0.0))]
    assert potential_error(pots, [0.5], [0.5]) == 0.0
    assert potential_error(pots, [0.75], [0.5], n=201) == pytest.approx(0.5, rel=1e-12)


def test_trace_csv(tmp_path):
    problem = _setup()
    trace = reconstruct(problem, [0.5, 0.5], max_iter=3)
    path = tmp_path / "trace.csv"
    trace.write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["iteration", "loss", "param_error", "potential_error", "step_size", "backtracks"]
    assert len(rows) == len(trace.records) + 1
    assert float(rows[1][1]) == pytest.approx(trace.losses[0], rel=1e-12)
