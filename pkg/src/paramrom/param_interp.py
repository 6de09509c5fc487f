"""Piecewise-linear interpolation on a Kuhn-simplex partition of ``[0, 1]^Nt``.

Each grid cell is split into ``Nt!`` simplices by ordering the fractional
coordinates of the point inside the cell. The split is consistent across
shared faces, so the interpolant is continuous.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, OutOfDomain, UnsupportedDimension

MAX_DIM = 4
BOX_TOL = 1e-12


@dataclass(frozen=True)
class ParamGrid:
    n_t: int
    points_per_side: int

    @property
    def h(self):
        return 1.0 / (self.points_per_side - 1)

    @property
    def n_nodes(self):
        return self.points_per_side**self.n_t

    @property
    def nodes(self):
        """All grid nodes in lexicographic order, first coordinate slowest."""
        axes = [np.linspace(0.0, 1.0, self.points_per_side)] * self.n_t
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def node_index(self, multi):
        return np.ravel_multi_index(tuple(np.asarray(multi).T), (self.points_per_side,) * self.n_t)


def build_param_grid(n_t, points_per_side):
    if not 1 <= n_t <= MAX_DIM:
        raise UnsupportedDimension(f"simplicial interpolation supports 1..{MAX_DIM} parameters, got {n_t}; use the ELM surrogate")
    if points_per_side < 2:
        raise InvalidArgument("points_per_side must be >= 2")
    return ParamGrid(int(n_t), int(points_per_side))


def locate_and_barycentric(grid, t):
    """Vertex indices and barycentric weights of the Kuhn simplex containing ``t``.

    ``t`` may be a single point (Nt,) or a batch (n, Nt). Returns arrays of
    shape (n, Nt+1) (or (Nt+1,) for a single point).
    """
    t = np.asarray(t, dtype=float)
    single = t.ndim == 1
    t = np.atleast_2d(t)
    if t.shape[1] != grid.n_t:
        raise InvalidArgument(f"expected points with {grid.n_t} coordinates, got {t.shape[1]}")
    if np.any(t < -BOX_TOL) or np.any(t > 1.0 + BOX_TOL):
        raise OutOfDomain("parameter outside [0, 1]^Nt")
    t = np.clip(t, 0.0, 1.0)

    n = grid.points_per_side
    s = t * (n - 1)
    cell = np.clip(np.floor(s).astype(np.int64), 0, n - 2)
    frac = np.clip(s - cell, 0.0, 1.0)

    # descending order of fractional parts; stable so ties resolve by axis
    order = np.argsort(-frac, axis=1, kind="stable")
    fs = np.take_along_axis(frac, order, axis=1)
    npts, d = frac.shape

    weights = np.empty((npts, d + 1))
    weights[:, 0] = 1.0 - fs[:, 0]
    weights[:, 1:d] = fs[:, :-1] - fs[:, 1:]
    weights[:, d] = fs[:, -1]

    verts = np.empty((npts, d + 1, d), dtype=np.int64)
    verts[:, 0] = cell
    rows = np.arange(npts)
    for k in range(d):
        verts[:, k + 1] = verts[:, k]
        verts[rows, k + 1, order[:, k]] += 1
    idx = np.ravel_multi_index(tuple(np.moveaxis(verts, 2, 0)), (n,) * d)

    if single:
        return idx[0], weights[0]
    return idx, weights


@dataclass
class SimplicialInterpolant:
    grid: ParamGrid
    snapshots: np.ndarray

    def __post_init__(self):
        if self.snapshots.shape[0] != self.grid.n_nodes:
            raise InvalidArgument(
                f"snapshot rows ({self.snapshots.shape[0]}) do not match grid nodes ({self.grid.n_nodes})"
            )

    def __call__(self, t):
        return interpolate(self, t)


def interpolate(itp, t):
    """Coefficient vector(s) at ``t``: barycentric blend of snapshot rows."""
    idx, w = locate_and_barycentric(itp.grid, t)
    if idx.ndim == 1:
        return w @ itp.snapshots[idx]
    return np.einsum("nv,nvk->nk", w, itp.snapshots[idx])
