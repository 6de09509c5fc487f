"""P1 finite elements for -lap(u) + mu(x, t) u = f on a square.

The operator is affine in the parameter vector ``t``::

    A(t) = K + M_0 + sum_i t_i M_i

where ``K`` is the stiffness matrix and ``M_i`` is the mass matrix weighted
by the potential ``mu_i``. Dirichlet data is imposed algebraically: boundary
coefficients are pinned and their contribution moved to the right-hand side.

Scalar fields are callables mapping an ``(N, 2)`` array of points to ``(N,)``
values.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgument, NumericalFailure
from .quadrature import subdivision_rule, triangle_rule

DIRECT_SOLVER_MAX_N = 100
CG_RTOL = 1e-10


@dataclass
class QuadratureData:
    """Physical quadrature points of a mesh with the P1 basis tabulated.

    ``basis`` is a sparse (n_points, n_nodes) matrix so that
    ``basis @ coeffs`` evaluates a P1 field at every point.
    """

    points: np.ndarray
    weights: np.ndarray
    basis: sp.csr_matrix
    element: np.ndarray

    def integrate(self, values):
        return values @ self.weights


@dataclass
class StructuredMesh:
    n_points_per_side: int
    bounds: tuple
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray
    interior_nodes: np.ndarray
    diagonal: str = "anti"
    _quad_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def h(self):
        a, b = self.bounds
        return (b - a) / (self.n_points_per_side - 1)

    @property
    def n_nodes(self):
        return len(self.vertices)

    @property
    def area(self):
        a, b = self.bounds
        return (b - a) ** 2

    def triangle_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def spec(self):
        return {
            "n_points_per_side": self.n_points_per_side,
            "bounds": list(self.bounds),
            "diagonal": self.diagonal,
        }

    def _tabulate(self, bary, w):
        tri = self.triangles
        p = self.vertices[tri]
        areas = self.triangle_areas()
        ne, nq = len(tri), len(w)
        pts = np.einsum("qa,ead->eqd", bary, p).reshape(-1, 2)
        wts = (areas[:, None] * w[None, :]).ravel()
        rows = np.repeat(np.arange(ne * nq), 3)
        cols = np.repeat(tri, nq, axis=0).ravel()
        vals = np.tile(bary, (ne, 1)).ravel()
        basis = sp.csr_matrix((vals, (rows, cols)), shape=(ne * nq, self.n_nodes))
        element = np.repeat(np.arange(ne), nq)
        return QuadratureData(pts, wts, basis, element)

    def quadrature(self, order=4):
        """Tabulated Gauss rule of the given order (cached)."""
        key = ("gauss", order)
        if key not in self._quad_cache:
            self._quad_cache[key] = self._tabulate(*triangle_rule(order))
        return self._quad_cache[key]

    def subdivided_centroids(self, s=4):
        """Centroid samples of each triangle split into s*s subtriangles (cached)."""
        key = ("subdiv", s)
        if key not in self._quad_cache:
            self._quad_cache[key] = self._tabulate(*subdivision_rule(s))
        return self._quad_cache[key]

    def evaluate(self, coeffs, points):
        """Evaluate a P1 field at arbitrary points inside the square."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.n_points_per_side
        a, b = self.bounds
        h = self.h
        s = (points - a) / h
        cell = np.clip(np.floor(s).astype(int), 0, n - 2)
        fx, fy = (s - cell).T
        i, j = cell.T
        v00 = j * n + i
        v10 = v00 + 1
        v01 = v00 + n
        v11 = v01 + 1
        c = np.asarray(coeffs)
        if self.diagonal == "main":
            lower = fx >= fy
            val_lower = (1 - fx) * c[v00] + (fx - fy) * c[v10] + fy * c[v11]
            val_upper = (1 - fy) * c[v00] + (fy - fx) * c[v01] + fx * c[v11]
        else:
            lower = fx + fy <= 1
            val_lower = (1 - fx - fy) * c[v00] + fx * c[v10] + fy * c[v01]
            val_upper = (fx + fy - 1) * c[v11] + (1 - fy) * c[v10] + (1 - fx) * c[v01]
        return np.where(lower, val_lower, val_upper)


def build_mesh(n_points_per_side, bounds=(-1.0, 1.0), diagonal="anti"):
    """Uniform triangulation of ``[a, b]^2`` with ``n`` points per side.

    ``diagonal="anti"`` splits every grid cell along its upper-left to
    lower-right diagonal, ``"main"`` along lower-left to upper-right.
    Node ``j * n + i`` sits at ``(a + i h, a + j h)``.
    """
    n = int(n_points_per_side)
    if n < 2:
        raise InvalidArgument(f"n_points_per_side must be >= 2, got {n_points_per_side}")
    a, b = float(bounds[0]), float(bounds[1])
    if not b > a:
        raise InvalidArgument(f"invalid bounds {bounds}")
    xs = np.linspace(a, b, n)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n - 1), np.arange(n - 1), indexing="xy")
    v00 = (j * n + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n
    v11 = v01 + 1
    if diagonal == "main":
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
    elif diagonal == "anti":
        lower = np.column_stack([v00, v10, v01])
        upper = np.column_stack([v10, v11, v01])
    else:
        raise InvalidArgument(f"diagonal must be 'main' or 'anti', got {diagonal!r}")
    triangles = np.empty((2 * len(v00), 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    on_edge = ((ii == 0) | (ii == n - 1) | (jj == 0) | (jj == n - 1)).ravel()
    idx = np.arange(n * n)
    return StructuredMesh(
        n_points_per_side=n,
        bounds=(a, b),
        diagonal=diagonal,
        vertices=vertices,
        triangles=triangles,
        boundary_nodes=idx[on_edge],
        interior_nodes=idx[~on_edge],
    )


def _gradients(mesh):
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    # rows of inv(J)^T applied to reference gradients (-1,-1), (1,0), (0,1)
    g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
    g0 = -g1 - g2
    return np.stack([g0, g1, g2], axis=1), 0.5 * det


def _scatter(mesh, local):
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    N = mesh.n_nodes
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(N, N))


def assemble_stiffness(mesh):
    """Exact P1 stiffness matrix ``int grad(phi_j) . grad(phi_k)``."""
    grads, areas = _gradients(mesh)
    local = areas[:, None, None] * np.einsum("eid,ejd->eij", grads, grads)
    return _scatter(mesh, local)


def _as_values(weight, points):
    if callable(weight):
        vals = np.asarray(weight(points), dtype=float)
        if vals.ndim == 0:
            vals = np.full(len(points), float(vals))
        return vals
    return np.full(len(points), float(weight))


def assemble_weighted_mass(mesh, weight, quad_order=4):
    """Mass matrix ``int weight * phi_j * phi_k`` by per-triangle Gauss quadrature.

    ``weight`` may be a scalar field or a constant.
    """
    bary, w = triangle_rule(quad_order)
    q = mesh.quadrature(quad_order)
    vals = _as_values(weight, q.points).reshape(len(mesh.triangles), len(w))
    areas = mesh.triangle_areas()
    local = np.einsum("e,q,eq,qi,qj->eij", areas, w, vals, bary, bary)
    return _scatter(mesh, local)


def assemble_load(mesh, f, quad_order=4):
    """Load vector ``int f * phi_k``."""
    q = mesh.quadrature(quad_order)
    vals = _as_values(f, q.points)
    return q.basis.T @ (q.weights * vals)


def load_operator(mesh, quad_order=4):
    """Sparse map from source values at quadrature points to load vectors.

    ``F = values @ op`` assembles many loads at once when ``values`` has one
    row per right-hand side.
    """
    q = mesh.quadrature(quad_order)
    return sp.csr_matrix(q.basis.multiply(q.weights[:, None]))


@dataclass
class AffineSystem:
    """Stiffness plus potential-weighted masses, ``A(t) = K + M_0 + sum t_i M_i``."""

    mesh: StructuredMesh
    K: sp.csr_matrix
    M_list: list
    load_fn: Optional[Callable] = None
    _blocks: Optional[tuple] = field(default=None, repr=False, compare=False)

    @property
    def n_t(self):
        return len(self.M_list) - 1

    def _check(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if t.shape != (self.n_t,):
            raise InvalidArgument(f"expected {self.n_t} parameters, got shape {t.shape}")
        return t

    def matrix(self, t):
        t = self._check(t)
        A = self.K + self.M_list[0]
        for ti, Mi in zip(t, self.M_list[1:]):
            A = A + ti * Mi
        return A.tocsr()

    def reduced_blocks(self):
        """Interior-interior and interior-boundary blocks of each affine term."""
        if self._blocks is None:
            I, B = self.mesh.interior_nodes, self.mesh.boundary_nodes
            terms = [self.K + self.M_list[0]] + list(self.M_list[1:])
            II = [m[I][:, I].tocsc() for m in terms]
            IB = [m[I][:, B].tocsr() for m in terms]
            self._blocks = (II, IB)
        return self._blocks

    def reduced(self, t):
        t = self._check(t)
        II, IB = self.reduced_blocks()
        A_ii, A_ib = II[0], IB[0]
        for ti, m_ii, m_ib in zip(t, II[1:], IB[1:]):
            A_ii = A_ii + ti * m_ii
            A_ib = A_ib + ti * m_ib
        return A_ii, A_ib

    def load(self, t):
        if self.load_fn is None:
            return np.zeros(self.mesh.n_nodes)
        return np.asarray(self.load_fn(t), dtype=float)


def assemble_system(mesh, potentials, load_fn=None, quad_order=4):
    """Assemble ``K`` and one weighted mass matrix per potential ``mu_0..mu_Nt``."""
    K = assemble_stiffness(mesh)
    M_list = [assemble_weighted_mass(mesh, mu, quad_order) for mu in potentials]
    return AffineSystem(mesh=mesh, K=K, M_list=M_list, load_fn=load_fn)


@dataclass
class FemSolution:
    coefficients: np.ndarray
    parameter: np.ndarray


def _factor_spd(A_ii, t):
    # symmetric-mode SuperLU without pivoting is an LDL^T factorization
    try:
        lu = spla.splu(
            A_ii.tocsc(),
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError as exc:
        raise NumericalFailure(f"factorization failed at t={t}: {exc}", t=t) from exc
    if not np.array_equal(lu.perm_r, lu.perm_c) or np.any(lu.U.diagonal() <= 0):
        raise NumericalFailure(f"reduced system is not positive definite at t={t}", t=t)
    return lu


def _solve_reduced(A_ii, rhs, t, n):
    if n <= DIRECT_SOLVER_MAX_N:
        return _factor_spd(A_ii, t).solve(rhs)
    d = A_ii.diagonal()
    if np.any(d <= 0):
        raise NumericalFailure(f"non-positive diagonal at t={t}", t=t)
    prec = sp.diags(1.0 / d)
    x, info = spla.cg(A_ii, rhs, rtol=CG_RTOL, atol=0.0, M=prec, maxiter=20 * len(rhs))
    if info != 0:
        raise NumericalFailure(f"CG did not converge at t={t} (info={info})", t=t)
    return x


def boundary_values(mesh, g):
    """Dirichlet data at the boundary nodes; ``g`` is a field, a constant, or None."""
    if g is None:
        return np.zeros(len(mesh.boundary_nodes))
    return _as_values(g, mesh.vertices[mesh.boundary_nodes])


def solve_fem(system, t, g=None, load=None, g_values=None):
    """Solve ``A(t) u = F(t)`` with Dirichlet values of ``g`` pinned on the boundary.

    ``load`` overrides ``system.load_fn`` and ``g_values`` overrides ``g`` with
    precomputed boundary-node values.
    """
    mesh = system.mesh
    t = system._check(t)
    F = system.load(t) if load is None else np.asarray(load, dtype=float)
    I, B = mesh.interior_nodes, mesh.boundary_nodes
    u = np.zeros(mesh.n_nodes)
    u[B] = boundary_values(mesh, g) if g_values is None else g_values
    if len(I):
        A_ii, A_ib = system.reduced(t)
        rhs = F[I] - A_ib @ u[B]
        u[I] = _solve_reduced(A_ii, rhs, t, mesh.n_points_per_side)
    return FemSolution(coefficients=u, parameter=t)


def solve_many(system, ts, g=None, loads=None, g_values=None):
    """Snapshot matrix with one FEM solve per row of ``ts``.

    ``loads`` and ``g_values`` optionally hold one precomputed load vector /
    boundary-value vector per row.
    """
    ts = np.atleast_2d(np.asarray(ts, dtype=float))
    out = np.empty((len(ts), system.mesh.n_nodes))
    gb = None if g_values is not None else boundary_values(system.mesh, g)
    for j, t in enumerate(ts):
        load = None if loads is None else loads[j]
        gv = gb if g_values is None else g_values[j]
        out[j] = solve_fem(system, t, load=load, g_values=gv).coefficients
    return out


def l2_error(mesh, u_h, u_exact, quad_order=4, relative=False):
    """``||u_h - u_exact||_L2`` by Gauss quadrature; ``relative`` divides by ``||u_exact||``."""
    coeffs = u_h.coefficients if isinstance(u_h, FemSolution) else np.asarray(u_h)
    q = mesh.quadrature(quad_order)
    uh = q.basis @ coeffs
    ue = _as_values(u_exact, q.points)
    err = np.sqrt(q.integrate((uh - ue) ** 2))
    if relative:
        return err / np.sqrt(q.integrate(ue**2))
    return err


def interpolant(mesh, field):
    """Nodal P1 interpolant coefficients of a scalar field."""
    return _as_values(field, mesh.vertices)
