"""Potential components ``mu_i`` of the affine potential ``mu(x, t) = mu_0 + sum t_i mu_i``."""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class ConstantPotential:
    value: float

    def __call__(self, x):
        x = np.asarray(x)
        return np.full(x.shape[:-1], float(self.value))

    def peak(self):
        return float(self.value)

    def to_dict(self):
        return {"type": "constant", "value": float(self.value)}


@dataclass(frozen=True)
class GaussianPotential:
    """``amplitude * exp(-|x - center|^2 / width^2)``."""

    amplitude: float
    width: float
    center: tuple

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        d = x - np.asarray(self.center, dtype=float)
        return self.amplitude * np.exp(-np.sum(d * d, axis=-1) / self.width**2)

    def peak(self):
        return float(self.amplitude)

    def to_dict(self):
        d = asdict(self)
        d["center"] = [float(c) for c in self.center]
        d["type"] = "gaussian"
        return d


def potential_from_dict(d):
    kind = d.get("type")
    if kind == "constant":
        return ConstantPotential(float(d["value"]))
    if kind == "gaussian":
        return GaussianPotential(float(d["amplitude"]), float(d["width"]), tuple(float(c) for c in d["center"]))
    raise ConfigurationError(f"unknown potential type {kind!r}")


def evaluate_potential(potentials, x, t):
    """``mu(x, t)`` for a list ``[mu_0, ..., mu_Nt]``; ``t`` may be a batch (n, Nt)."""
    t = np.asarray(t, dtype=float)
    basis = np.stack([mu(x) for mu in potentials[1:]], axis=-1) if len(potentials) > 1 else None
    base = potentials[0](x)
    if basis is None:
        return base if t.ndim == 1 else np.broadcast_to(base, (len(t),) + base.shape)
    if t.ndim == 1:
        return base + basis @ t
    return base[None, :] + t @ basis.T


def random_gaussians(rng, n, amplitude_range, width_range, bounds=(-1.0, 1.0)):
    """Gaussians with amplitude, width and center drawn uniformly from the given ranges."""
    out = []
    for _ in range(n):
        r = rng.uniform(*amplitude_range)
        s = rng.uniform(*width_range)
        c = rng.uniform(bounds[0], bounds[1], size=2)
        out.append(GaussianPotential(float(r), float(s), (float(c[0]), float(c[1]))))
    return out
