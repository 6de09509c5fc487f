"""Closed-form manufactured solutions for the convergence studies.

Each case provides ``u(x, t)``, its spatial Laplacian, the potentials, and the
source ``f = -lap(u) + mu u``. All functions accept points ``x`` of shape
(P, 2) and parameters ``t`` of shape (Nt,) or (n, Nt); batched parameters
produce (n, P) arrays.
"""

from dataclasses import dataclass, field

import numpy as np

from .potentials import ConstantPotential, GaussianPotential, evaluate_potential
from .seeding import sub_rng


@dataclass
class ManufacturedCase:
    name: str
    n_t: int
    potentials: list
    solution_fn: object
    laplacian_fn: object
    params: dict = field(default_factory=dict)

    def u(self, x, t):
        return self.solution_fn(np.asarray(x, dtype=float), np.asarray(t, dtype=float))

    def laplacian(self, x, t):
        return self.laplacian_fn(np.asarray(x, dtype=float), np.asarray(t, dtype=float))

    def mu(self, x, t):
        return evaluate_potential(self.potentials, x, t)

    def source(self, x, t):
        return -self.laplacian(x, t) + self.mu(x, t) * self.u(x, t)

    def boundary(self, x, t):
        return self.u(x, t)


def _split(x, t):
    t = np.asarray(t, dtype=float)
    batch = t.ndim == 2
    tt = t if batch else t[None, :]
    x1 = x[None, :, 0]
    x2 = x[None, :, 1]
    return tt, x1, x2, batch


def _finish(v, batch):
    return v if batch else v[0]


def manufactured_low_dim():
    """Two-parameter case with a travelling sine and two moving Gaussian bumps."""
    p = np.array([0.5, 0.5])
    potentials = [
        ConstantPotential(0.1),
        GaussianPotential(1.0, 1.0 / np.sqrt(2.0), (0.5, 0.5)),
        GaussianPotential(1.0, 1.0 / np.sqrt(2.0), (-0.5, -0.5)),
    ]

    def parts(x, t):
        tt, x1, x2, batch = _split(x, t)
        t1, t2 = tt[:, :1], tt[:, 1:2]
        phase = 2 * np.pi * (t1 * x1 + t2 * x2)
        rm = (x1 - t1) ** 2 + (x2 - t2) ** 2
        rp = (x1 + t1) ** 2 + (x2 + t2) ** 2
        return tt, phase, rm, rp, batch

    def solution(x, t):
        tt, phase, rm, rp, batch = parts(x, t)
        v = np.sin(phase) + 2 * (np.exp(-5 * rm) + np.exp(-5 * rp)) + 1
        return _finish(v, batch)

    def laplacian(x, t):
        tt, phase, rm, rp, batch = parts(x, t)
        tn2 = np.sum(tt**2, axis=1, keepdims=True)
        v = -4 * np.pi**2 * tn2 * np.sin(phase) + 2 * (
            (100 * rm - 20) * np.exp(-5 * rm) + (100 * rp - 20) * np.exp(-5 * rp)
        )
        return _finish(v, batch)

    return ManufacturedCase("low_dim", 2, potentials, solution, laplacian, {"p": p.tolist()})


def manufactured_high_dim(seed=0, n_t=10, bounds=(-1.0, 1.0)):
    """Ten-parameter case with random directions ``v1, v2`` and random potential centers."""
    rng = sub_rng(seed, "manufactured.directions")
    v1 = rng.standard_normal(n_t)
    v1 /= np.linalg.norm(v1)
    v2 = rng.standard_normal(n_t)
    v2 /= np.linalg.norm(v2)
    centers = sub_rng(seed, "manufactured.centers").uniform(bounds[0], bounds[1], size=(n_t, 2))
    potentials = [ConstantPotential(0.1)] + [
        GaussianPotential(500.0, 1.0 / np.sqrt(50.0), (float(c[0]), float(c[1]))) for c in centers
    ]
    k = 4.0 / 3.0

    def parts(x, t):
        tt, x1, x2, batch = _split(x, t)
        a = (tt @ v1)[:, None]
        b = (tt @ v2)[:, None]
        tn = np.linalg.norm(tt, axis=1)[:, None]
        r2 = x1**2 + x2**2
        return a, b, tn, x1, x2, r2, batch

    def solution(x, t):
        a, b, tn, x1, x2, r2, batch = parts(x, t)
        v = (
            np.sin(a * np.pi * x1) * np.cos(b * np.pi * x2)
            + 10 * x1**2 * x2 / (1 + 6 * tn)
            + tn * np.exp(-k * r2)
        )
        return _finish(v, batch)

    def laplacian(x, t):
        a, b, tn, x1, x2, r2, batch = parts(x, t)
        v = (
            -np.pi**2 * (a**2 + b**2) * np.sin(a * np.pi * x1) * np.cos(b * np.pi * x2)
            + 20 * x2 / (1 + 6 * tn)
            + tn * (4 * k**2 * r2 - 4 * k) * np.exp(-k * r2)
        )
        return _finish(v, batch)

    params = {"v1": v1.tolist(), "v2": v2.tolist(), "centers": centers.tolist(), "seed": seed}
    return ManufacturedCase("high_dim", n_t, potentials, solution, laplacian, params)
