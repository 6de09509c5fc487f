"""Pixel-averaging measurement operator and the multiplicative noise model.

``Q`` maps a field to its mean over each axis-aligned pixel. By default the
pixel integrals are exact for piecewise polynomials: every mesh triangle is
clipped against the pixel grid and a Gauss rule is applied on each piece.
A cheaper binned mode splits each triangle into ``s*s`` subtriangles and
assigns each centroid sample to the pixel containing it. In both modes a
pixel value is the weighted sample sum divided by the total sample weight
in that pixel, so constants are reproduced exactly.
"""

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument
from .quadrature import triangle_rule

DEFAULT_SUBDIVISION = 4
DEFAULT_METHOD = "clip"


@dataclass
class PixelPartition:
    nx: int
    ny: int
    bounds: tuple = (-1.0, 1.0)
    coverage_mask: np.ndarray = None

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise InvalidArgument("pixel counts must be >= 1")
        if self.coverage_mask is None:
            self.coverage_mask = np.ones(self.n_pixels, dtype=bool)
        self.coverage_mask = np.asarray(self.coverage_mask, dtype=bool)
        if self.coverage_mask.shape != (self.n_pixels,):
            raise InvalidArgument("coverage mask must have one entry per pixel")
        if not self.coverage_mask.any():
            raise InvalidArgument("coverage mask must observe at least one pixel")

    @property
    def n_pixels(self):
        return self.nx * self.ny

    @property
    def width(self):
        return (self.bounds[1] - self.bounds[0]) / self.nx

    @property
    def height(self):
        return (self.bounds[1] - self.bounds[0]) / self.ny

    @property
    def pixel_area(self):
        return self.width * self.height

    @property
    def coverage(self):
        return float(self.coverage_mask.mean())

    def centers(self):
        a = self.bounds[0]
        ix, iy = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="xy")
        x = a + (ix.ravel() + 0.5) * self.width
        y = a + (iy.ravel() + 0.5) * self.height
        return np.column_stack([x, y])

    def locate(self, points):
        """Pixel index of each point; pixels are half-open except on the top/right edges."""
        a = self.bounds[0]
        points = np.asarray(points, dtype=float)
        ix = np.clip(np.floor((points[:, 0] - a) / self.width).astype(np.int64), 0, self.nx - 1)
        iy = np.clip(np.floor((points[:, 1] - a) / self.height).astype(np.int64), 0, self.ny - 1)
        return iy * self.nx + ix

    def spec(self):
        return {
            "nx": self.nx,
            "ny": self.ny,
            "bounds": list(self.bounds),
            "coverage": self.coverage,
        }


def centered_mask(nx, ny, fraction):
    """Centered rectangular block of observed pixels covering about ``fraction`` of the grid.

    For a 25x25 grid the fractions 1, 0.5776, 0.36 and 0.1936 give exact
    19x19, 15x15 and 11x11 blocks.
    """
    if not 0 < fraction <= 1:
        raise InvalidArgument("coverage fraction must be in (0, 1]")
    side = np.sqrt(fraction)
    kx = max(1, int(round(nx * side)))
    ky = max(1, int(round(ny * side)))
    ox, oy = (nx - kx) // 2, (ny - ky) // 2
    mask = np.zeros((ny, nx), dtype=bool)
    mask[oy : oy + ky, ox : ox + kx] = True
    return mask.ravel()


def build_pixels(nx, ny=None, bounds=(-1.0, 1.0), mask=None):
    ny = nx if ny is None else ny
    if mask is not None and np.isscalar(mask):
        mask = centered_mask(nx, ny, float(mask))
    return PixelPartition(int(nx), int(ny), tuple(bounds), mask)


@dataclass
class PixelSampler:
    """Binned quadrature samples of a mesh, with the averaging matrix.

    ``average`` is a sparse (N_m, n_samples) matrix; ``average @ values``
    returns pixel means of sampled values.
    """

    points: np.ndarray
    weights: np.ndarray
    basis: sp.csr_matrix
    pixel_of: np.ndarray
    pixel_weight: np.ndarray
    average: sp.csr_matrix


def _clip(poly, axis, value, keep_below):
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        pin = p[axis] <= value if keep_below else p[axis] >= value
        qin = q[axis] <= value if keep_below else q[axis] >= value
        if pin:
            out.append(p)
        if pin != qin:
            s = (value - p[axis]) / (q[axis] - p[axis])
            out.append((p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])))
    return out


def _clipped_points(mesh, pixels, order):
    """Gauss points on every triangle-pixel intersection polygon.

    Returns points, weights, owning triangle and owning pixel of each point.
    """
    bary, w = triangle_rule(order)
    a = pixels.bounds[0]
    wx, wy = pixels.width, pixels.height
    pts, wts, tris, pix = [], [], [], []
    corners = mesh.vertices[mesh.triangles]
    for e, tri in enumerate(corners):
        lo, hi = tri.min(axis=0), tri.max(axis=0)
        ix0 = max(int(np.floor((lo[0] - a) / wx)), 0)
        ix1 = min(int(np.ceil((hi[0] - a) / wx)), pixels.nx)
        iy0 = max(int(np.floor((lo[1] - a) / wy)), 0)
        iy1 = min(int(np.ceil((hi[1] - a) / wy)), pixels.ny)
        base = [tuple(v) for v in tri]
        for iy in range(iy0, iy1):
            for ix in range(ix0, ix1):
                poly = _clip(base, 0, a + ix * wx, False)
                poly = _clip(poly, 0, a + (ix + 1) * wx, True) if poly else poly
                poly = _clip(poly, 1, a + iy * wy, False) if poly else poly
                poly = _clip(poly, 1, a + (iy + 1) * wy, True) if poly else poly
                if len(poly) < 3:
                    continue
                P = np.array(poly)
                # fan triangulation of the convex piece
                for k in range(1, len(P) - 1):
                    v = np.array([P[0], P[k], P[k + 1]])
                    d1, d2 = v[1] - v[0], v[2] - v[0]
                    area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
                    if area <= 1e-15 * wx * wy:
                        continue
                    pts.append(bary @ v)
                    wts.append(area * w)
                    tris.append(np.full(len(w), e))
                    pix.append(np.full(len(w), iy * pixels.nx + ix))
    return np.concatenate(pts), np.concatenate(wts), np.concatenate(tris), np.concatenate(pix)


def _p1_basis(mesh, points, owner):
    tri = mesh.triangles[owner]
    p = mesh.vertices[tri]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    r = points - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
    l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
    lam = np.column_stack([1.0 - l1 - l2, l1, l2])
    n = len(points)
    return sp.csr_matrix(
        (lam.ravel(), (np.repeat(np.arange(n), 3), tri.ravel())), shape=(n, mesh.n_nodes)
    )


def pixel_sampler(mesh, pixels, subdivision=DEFAULT_SUBDIVISION, method=DEFAULT_METHOD, order=4):
    """Quadrature samples of ``mesh`` grouped by pixel.

    ``method="clip"`` integrates exactly over triangle-pixel intersections
    with a Gauss rule of the given order on each piece. ``method="bin"``
    splits each triangle into ``subdivision**2`` subtriangles and bins their
    centroids into pixels.
    """
    key = ("pixels", method, subdivision, order, pixels.nx, pixels.ny, tuple(pixels.bounds))
    cache = mesh._quad_cache
    if key in cache:
        return cache[key]
    if method == "clip":
        points, weights, owner, pix = _clipped_points(mesh, pixels, order)
        basis = _p1_basis(mesh, points, owner)
    elif method == "bin":
        q = mesh.subdivided_centroids(subdivision)
        points, weights, basis = q.points, q.weights, q.basis
        pix = pixels.locate(points)
    else:
        raise InvalidArgument(f"unknown pixel quadrature {method!r}")
    wsum = np.bincount(pix, weights=weights, minlength=pixels.n_pixels)
    if np.any(wsum <= 0):
        raise InvalidArgument("some pixels receive no quadrature samples; increase the subdivision")
    n = len(weights)
    avg = sp.csr_matrix((weights / wsum[pix], (pix, np.arange(n))), shape=(pixels.n_pixels, n))
    sampler = PixelSampler(points, weights, basis, pix, wsum, avg)
    cache[key] = sampler
    return sampler


def project(mesh, pixels, field, subdivision=DEFAULT_SUBDIVISION, method=DEFAULT_METHOD):
    """Pixel means of a scalar field (callable on points) or of a P1 coefficient vector."""
    s = pixel_sampler(mesh, pixels, subdivision, method)
    return s.average @ _sample(s, field)


def _sample(sampler, field):
    if callable(field):
        return np.asarray(field(sampler.points), dtype=float)
    return sampler.basis @ np.asarray(field, dtype=float)


@dataclass
class MeasurementTensor:
    """``Q[i, k, p]``: pixel mean of ``mu_i * phi_k`` over pixel ``p``."""

    Q: np.ndarray
    pixels: PixelPartition

    @property
    def n_t(self):
        return self.Q.shape[0] - 1

    @property
    def K(self):
        return self.Q.shape[1]

    @property
    def n_pixels(self):
        return self.Q.shape[2]

    def operator(self, t):
        """``Q_0 + sum_i t_i Q_i`` as a (K, N_m) matrix."""
        t = np.asarray(t, dtype=float)
        return self.Q[0] + np.tensordot(t, self.Q[1:], axes=(0, 0))


def precompute_tensor(mesh, pixels, potentials, subdivision=DEFAULT_SUBDIVISION, method=DEFAULT_METHOD):
    s = pixel_sampler(mesh, pixels, subdivision, method)
    basis_t = s.basis.T.tocsr()
    Q = np.empty((len(potentials), mesh.n_nodes, pixels.n_pixels))
    for i, mu in enumerate(potentials):
        weighted = basis_t.multiply(np.asarray(mu(s.points), dtype=float)[None, :])
        Q[i] = (weighted @ s.average.T).toarray()
    return MeasurementTensor(Q=Q, pixels=pixels)


def measure(tensor, t, u_hat):
    """``q(t) = sum_k u_k (Q_0k + sum_i t_i Q_ik)``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    u_hat = np.asarray(u_hat, dtype=float)
    if t.shape != (tensor.n_t,) or u_hat.shape != (tensor.K,):
        raise InvalidArgument(
            f"dimension mismatch: tensor has Nt={tensor.n_t}, K={tensor.K}; got t{t.shape}, u{u_hat.shape}"
        )
    return u_hat @ tensor.operator(t)


@dataclass
class Observation:
    q: np.ndarray
    noise_amplitude: float = 0.0
    covariance_diag: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None
    clean: Optional[np.ndarray] = field(default=None, repr=False)

    def observed(self):
        return np.ones(len(self.q), dtype=bool) if self.mask is None else self.mask


def add_noise(q, rho, seed, mask=None):
    """Multiplicative Gaussian noise ``q_i (1 + rho eps_i)``; variance ``(rho q_i)^2`` uses clean values."""
    if rho < 0:
        raise InvalidArgument("noise amplitude must be >= 0")
    q = np.asarray(q, dtype=float)
    eps = np.random.default_rng(seed).standard_normal(q.shape)
    noisy = q * (1.0 + rho * eps) if rho > 0 else q.copy()
    return Observation(q=noisy, noise_amplitude=float(rho), covariance_diag=(rho * q) ** 2, mask=mask, clean=q)


def write_observation_csv(path, obs, pixels):
    centers = pixels.centers()
    mask = obs.observed()
    var = obs.covariance_diag if obs.covariance_diag is not None else np.full(len(obs.q), np.nan)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pixel_index", "x_center", "y_center", "value", "variance", "observed_flag"])
        for p in range(len(obs.q)):
            w.writerow(
                [p, f"{centers[p, 0]:.12e}", f"{centers[p, 1]:.12e}", f"{obs.q[p]:.17e}", f"{var[p]:.17e}", int(mask[p])]
            )


def read_observation_csv(path, noise_amplitude=0.0):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    q = np.array([float(r["value"]) for r in rows])
    var = np.array([float(r["variance"]) for r in rows])
    mask = np.array([r["observed_flag"] == "1" for r in rows])
    cov = None if np.all(np.isnan(var)) else var
    return Observation(q=q, noise_amplitude=noise_amplitude, covariance_diag=cov, mask=mask)
