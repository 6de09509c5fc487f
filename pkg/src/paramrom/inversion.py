"""Recovering the potential parameters from pixel data.

The loss compares observed pixel values with the surrogate prediction
``q(t) = sum_k u_k(t) (Q_0k + sum_i t_i Q_ik)`` over the observed pixels,

    L(t) = |P|/2 * sum_p w_p (q_obs,p - q_p(t))^2,

with ``w_p = 1`` or ``w_p = 1 / Sigma_pp`` for the weighted form. The
gradient reuses the ELM Jacobian ``B^T D(t) W^T`` so one evaluation costs a
single surrogate pass plus contractions with the precomputed tensor.
"""

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .elm import evaluate
from .errors import ConfigurationError, InvalidArgument
from .potentials import evaluate_potential

GRAD_TOL = 1e-12


@dataclass
class LineSearchConfig:
    initial_step: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 40

    def __post_init__(self):
        if self.initial_step <= 0:
            raise InvalidArgument("initial_step must be positive")
        if not 0 < self.shrink < 1:
            raise InvalidArgument("shrink must be in (0, 1)")
        if not 0 < self.armijo < 1:
            raise InvalidArgument("armijo constant must be in (0, 1)")
        if self.max_backtracks < 0:
            raise InvalidArgument("max_backtracks must be >= 0")


@dataclass
class InverseProblem:
    model: object
    tensor: object
    observation: object
    weighted: bool = False
    potentials: Optional[list] = None
    true_parameter: Optional[np.ndarray] = None
    potential_grid: int = 200
    _mu_grid: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.model.K != self.tensor.K:
            raise InvalidArgument(f"surrogate has K={self.model.K}, tensor has K={self.tensor.K}")
        if self.model.n_t != self.tensor.n_t:
            raise InvalidArgument(f"surrogate has Nt={self.model.n_t}, tensor has Nt={self.tensor.n_t}")
        if len(self.observation.q) != self.tensor.n_pixels:
            raise InvalidArgument("observation length does not match the pixel count")
        mask = self.observation.mask
        if mask is None:
            mask = self.tensor.pixels.coverage_mask
        self.mask = np.asarray(mask, dtype=bool)
        self.pixel_weights = self._pixel_weights()

    @property
    def n_t(self):
        return self.model.n_t

    def _pixel_weights(self):
        area = self.tensor.pixels.pixel_area
        w = np.where(self.mask, area, 0.0)
        if self.weighted:
            cov = self.observation.covariance_diag
            if cov is None:
                raise ConfigurationError("weighted loss requested but the observation has no covariance")
            cov = np.asarray(cov, dtype=float)
            if np.any(cov[self.mask] <= 0):
                raise ConfigurationError("weighted loss needs a positive variance on every observed pixel")
            w = np.divide(w, cov, out=np.zeros_like(w), where=self.mask)
        return w

    def predict(self, t):
        u = evaluate(self.model, t)
        return u, self.tensor.operator(t)

    def mu_samples(self):
        """Potential components tabulated on a uniform grid for the L-infinity estimate."""
        if self._mu_grid is None:
            if self.potentials is None:
                raise ConfigurationError("potential error needs the potential list")
            self._mu_grid = potential_grid_values(self.potentials, self.potential_grid, self.tensor.pixels.bounds)
        return self._mu_grid


def _check_box(t, n_t):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.shape != (n_t,):
        raise InvalidArgument(f"expected {n_t} parameters, got shape {t.shape}")
    return t


def loss(problem, t):
    t = _check_box(t, problem.n_t)
    u, G = problem.predict(t)
    r = problem.observation.q - u @ G
    return 0.5 * float(np.sum(problem.pixel_weights * r * r))


def loss_and_grad(problem, t):
    """Loss and ``-B^T D(t) W^T z(t) - Z(t) u(t)``."""
    t = _check_box(t, problem.n_t)
    model = problem.model
    pre = model.bank.pre_activation(t)[0]
    psi = np.maximum(pre, 0.0)
    u = model.W @ psi
    G = problem.tensor.operator(t)
    r = problem.observation.q - u @ G
    wr = problem.pixel_weights * r
    z = G @ wr
    Z = problem.tensor.Q[1:] @ wr
    active = (pre > 0).astype(float)
    grad = -model.bank.B.T @ (active * (model.W.T @ z)) - Z @ u
    return 0.5 * float(np.dot(wr, r)), grad


def grad_loss(problem, t):
    return loss_and_grad(problem, t)[1]


def parameter_error(t_hat, t_true):
    return float(np.linalg.norm(np.asarray(t_hat, dtype=float) - np.asarray(t_true, dtype=float)))


def potential_grid_values(potentials, n=200, bounds=(-1.0, 1.0)):
    xs = np.linspace(bounds[0], bounds[1], n)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return np.stack([mu(pts) for mu in potentials[1:]], axis=0)


def potential_error(potentials, t_hat, t_true, n=200, bounds=(-1.0, 1.0), table=None):
    """Grid estimate of ``max_x |mu(x, t_hat) - mu(x, t_true)|``; ``mu_0`` cancels."""
    d = np.asarray(t_hat, dtype=float) - np.asarray(t_true, dtype=float)
    if table is None:
        table = potential_grid_values(potentials, n, bounds)
    return float(np.max(np.abs(d @ table)))


@dataclass
class IterationRecord:
    iteration: int
    loss: float
    param_error: float
    potential_error: float
    step_size: float
    backtracks: int


@dataclass
class ReconstructionTrace:
    records: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    t_hat: Optional[np.ndarray] = None
    stalled: bool = False
    converged: bool = False

    @property
    def losses(self):
        return np.array([r.loss for r in self.records])

    @property
    def param_errors(self):
        return np.array([r.param_error for r in self.records])

    @property
    def potential_errors(self):
        return np.array([r.potential_error for r in self.records])

    def final(self):
        return self.records[-1]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "loss", "param_error", "potential_error", "step_size", "backtracks"])
            for r in self.records:
                w.writerow(
                    [r.iteration, f"{r.loss:.12e}", f"{r.param_error:.12e}", f"{r.potential_error:.12e}",
                     f"{r.step_size:.12e}", r.backtracks]
                )


def reconstruct(problem, t0, max_iter=200, ls=None):
    """Projected gradient descent on ``[0, 1]^Nt`` with Armijo backtracking.

    A trial point ``clip(t - step * grad)`` is accepted when
    ``L(trial) <= L(t) + c1 * grad . (trial - t)``, which reduces to
    ``L(t) - c1 * step * |grad|^2`` whenever no bound is active. The step is
    reset to ``ls.initial_step`` after every accepted iterate.
    """
    ls = ls or LineSearchConfig()
    t = np.clip(_check_box(t0, problem.n_t), 0.0, 1.0)
    truth = problem.true_parameter
    table = problem.mu_samples() if (truth is not None and problem.potentials is not None) else None
    trace = ReconstructionTrace()

    def record(it, L, step, nb):
        pe = parameter_error(t, truth) if truth is not None else float("nan")
        me = potential_error(None, t, truth, table=table) if table is not None else float("nan")
        trace.records.append(IterationRecord(it, L, pe, me, step, nb))
        trace.iterates.append(t.copy())

    L, g = loss_and_grad(problem, t)
    record(0, L, 0.0, 0)
    for it in range(1, max_iter + 1):
        if np.linalg.norm(np.clip(t - g, 0.0, 1.0) - t) <= GRAD_TOL:
            trace.converged = True
            break
        step = ls.initial_step
        for nb in range(ls.max_backtracks + 1):
            trial = np.clip(t - step * g, 0.0, 1.0)
            L_trial = loss(problem, trial)
            if L_trial <= L + ls.armijo * float(g @ (trial - t)):
                break
            step *= ls.shrink
        else:
            trace.stalled = True
            break
        t = trial
        L, g = loss_and_grad(problem, t)
        record(it, L, step, nb)
    trace.t_hat = t.copy()
    return trace
