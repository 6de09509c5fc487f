"""Extreme learning machine surrogate for many parameters.

The coefficient vector is approximated as ``u(t) = W relu(B t + c)`` with a
fixed random feature bank ``(B, c)``. Only ``W`` is fitted, as the
minimal-norm interpolant of the snapshot data.
"""

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.stats import qmc

from .errors import FitFailure, InvalidArgument

RIDGE_SCALE = 1e-10
RESIDUAL_TOL = 1e-8
MAX_REFINEMENTS = 50


@dataclass(frozen=True)
class FeatureBank:
    B: np.ndarray
    c: np.ndarray
    seed: object = None

    @property
    def M(self):
        return self.B.shape[0]

    @property
    def n_t(self):
        return self.B.shape[1]

    def pre_activation(self, t):
        return np.atleast_2d(t) @ self.B.T + self.c


def sample_features(M, n_t, seed, offsets="box"):
    """Random ReLU features with unit-sphere directions (normalized Gaussians).

    ``offsets="box"`` places each kink hyperplane through a uniform point of
    ``[0, 1]^n_t`` (``c = -b . xi``); ``offsets="uniform"`` draws ``c``
    uniformly on ``[-sqrt(n_t), sqrt(n_t)]``. Both keep ``|c| <= sqrt(n_t)``.
    """
    if M < 1 or n_t < 1:
        raise InvalidArgument("M and n_t must be positive")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((M, n_t))
    B = g / np.linalg.norm(g, axis=1, keepdims=True)
    if offsets == "box":
        c = -np.einsum("md,md->m", B, rng.random((M, n_t)))
    elif offsets == "uniform":
        C = np.sqrt(n_t)
        c = rng.uniform(-C, C, size=M)
    else:
        raise InvalidArgument(f"unknown offsets mode {offsets!r}")
    return FeatureBank(B=B, c=c, seed=seed)


def sobol_points(J, n_t):
    """First ``J`` points of the unscrambled Sobol sequence in ``[0, 1]^n_t``."""
    if J < 1:
        raise InvalidArgument("J must be >= 1")
    engine = qmc.Sobol(d=n_t, scramble=False)
    with warnings.catch_warnings():
        # balance properties need powers of two; we take a plain prefix
        warnings.simplefilter("ignore", UserWarning)
        return engine.random(J)


def feature_matrix(bank, points):
    """``Psi[j, m] = relu(b_m . t_j + c_m)``."""
    return np.maximum(bank.pre_activation(points), 0.0)


@dataclass
class FitReport:
    max_residual: float
    relative_residual: float
    ridge: float
    refinements: int


def fit_min_norm(Psi, U, tol=RESIDUAL_TOL):
    """Minimal-norm solution ``W`` (K x M) of ``Psi W^T = U``.

    Solved through the dual normal equations ``(Psi Psi^T + lam I) A = U``,
    ``W^T = Psi^T A``, with ``lam = 1e-10 trace(Psi Psi^T) / J``. A few steps
    of iterative refinement against the unregularized Gram matrix remove the
    ridge bias. Raises :class:`FitFailure` when the interpolation residual
    stays above ``tol * (1 + max|U|)``.
    """
    Psi = np.asarray(Psi, dtype=float)
    U = np.asarray(U, dtype=float)
    squeeze = U.ndim == 1
    if squeeze:
        U = U[:, None]
    J, M = Psi.shape
    if U.shape[0] != J:
        raise InvalidArgument(f"U has {U.shape[0]} rows, Psi has {J}")
    G = Psi @ Psi.T
    lam = RIDGE_SCALE * np.trace(G) / J
    try:
        factor = sla.cho_factor(G + lam * np.eye(J), lower=True)
    except np.linalg.LinAlgError as exc:
        raise FitFailure(f"Gram matrix factorization failed ({exc}); resample the feature bank") from exc

    scale = 1.0 + np.max(np.abs(U))
    A = sla.cho_solve(factor, U)
    R = U - G @ A
    steps = 0
    while np.max(np.abs(R)) > 0.01 * tol * scale and steps < MAX_REFINEMENTS:
        A += sla.cho_solve(factor, R)
        R = U - G @ A
        steps += 1
    Wt = Psi.T @ A
    resid = np.max(np.abs(Psi @ Wt - U))
    if not np.isfinite(resid) or resid > tol * scale:
        raise FitFailure(
            f"interpolation residual {resid:.3e} exceeds {tol:.1e} relative; resample the feature bank"
        )
    W = Wt.T
    if squeeze:
        W = W[0]
    return W, FitReport(float(resid), float(resid / scale), float(lam), steps)


@dataclass
class ElmModel:
    bank: FeatureBank
    W: np.ndarray
    fit_report: FitReport = None
    provenance: str = ""

    @property
    def K(self):
        return self.W.shape[0]

    @property
    def n_t(self):
        return self.bank.n_t

    def __call__(self, t):
        return evaluate(self, t)

    def save(self, path):
        save_model(self, path)


def train_elm(points, snapshots, M, seed, provenance="", offsets="box"):
    bank = sample_features(M, points.shape[1], seed, offsets)
    W, report = fit_min_norm(feature_matrix(bank, points), snapshots)
    return ElmModel(bank=bank, W=W, fit_report=report, provenance=provenance)


def evaluate(model, t):
    """``W relu(B t + c)`` for a point (Nt,) or a batch (n, Nt)."""
    t = np.asarray(t, dtype=float)
    psi = feature_matrix(model.bank, t)
    out = psi @ model.W.T
    return out[0] if t.ndim == 1 else out


def gradient(model, t):
    """Jacobian ``d u_k / d t_i`` (K x Nt); the ReLU derivative at a kink is taken as 0."""
    t = np.asarray(t, dtype=float)
    active = (model.bank.pre_activation(t)[0] > 0).astype(float)
    return (model.W * active) @ model.bank.B


def save_model(model, path):
    np.savez(
        path,
        seed=np.array(str(model.bank.seed)),
        n_t=np.array(model.bank.n_t),
        M=np.array(model.bank.M),
        B=model.bank.B,
        c=model.bank.c,
        W=model.W,
        provenance=np.array(model.provenance),
    )


def load_model(path):
    with np.load(path, allow_pickle=False) as data:
        bank = FeatureBank(B=data["B"], c=data["c"], seed=str(data["seed"]))
        if bank.M != int(data["M"]) or bank.n_t != int(data["n_t"]):
            raise InvalidArgument(f"inconsistent model file {path}")
        return ElmModel(bank=bank, W=data["W"], provenance=str(data["provenance"]))


def array_digest(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()
