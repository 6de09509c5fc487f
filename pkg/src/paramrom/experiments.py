"""Convergence studies and reconstruction experiments.

Every run is a pure function of its :class:`ExperimentConfig`; all
randomness comes from named sub-seeds of ``config.seed``.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cache import SnapshotCache, snapshot_key
from .config import ExperimentConfig
from .elm import evaluate, sobol_points, train_elm
from .errors import ConfigurationError, FitFailure
from .fem import assemble_system, build_mesh, load_operator, solve_many
from .inversion import (
    InverseProblem,
    LineSearchConfig,
    potential_grid_values,
    reconstruct,
)
from .manufactured import manufactured_high_dim, manufactured_low_dim
from .measurement import add_noise, build_pixels, centered_mask, precompute_tensor, project
from .param_interp import SimplicialInterpolant, build_param_grid, interpolate
from .potentials import ConstantPotential, evaluate_potential, random_gaussians
from .seeding import sub_rng, sub_seed

log = logging.getLogger(__name__)

SNAPSHOT_BATCH = 200


def pde_boundary(x):
    """Dirichlet data of the reconstruction experiments (the source is zero)."""
    return x[:, 0] ** 2 * x[:, 1] ** 2 / 16.0 + 1.0


def fit_rate(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise ConfigurationError("a rate needs at least 3 points")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def parallel_map(fn, items, n_jobs=1):
    """``[fn(i) for i in items]``, optionally spread over joblib workers; order is preserved."""
    items = list(items)
    if n_jobs == 1 or len(items) < 2:
        return [fn(i) for i in items]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(fn)(i) for i in items)


def _manufactured_snapshots(system, case, points, quad_order, cache, data_id):
    mesh = system.mesh
    key = snapshot_key(mesh.spec(), [p.to_dict() for p in case.potentials], data_id, points)

    def compute():
        q = mesh.quadrature(quad_order)
        op = load_operator(mesh, quad_order)
        bpts = mesh.vertices[mesh.boundary_nodes]
        out = np.empty((len(points), mesh.n_nodes))
        for s in range(0, len(points), SNAPSHOT_BATCH):
            P = points[s : s + SNAPSHOT_BATCH]
            loads = np.asarray(case.source(q.points, P) @ op)
            out[s : s + SNAPSHOT_BATCH] = solve_many(system, P, loads=loads, g_values=case.u(bpts, P))
        return out

    return cache.get_or_compute(key, compute)


@dataclass
class ConvergenceReport:
    kind: str
    row_name: str
    col_name: str
    rows: list
    cols: list
    errors: np.ndarray
    stds: Optional[np.ndarray] = None
    h_x: list = field(default_factory=list)
    rates: dict = field(default_factory=dict)
    runtimes: dict = field(default_factory=dict)
    cache_stats: dict = field(default_factory=dict)


def trapezoid_samples(n):
    """Uniform ``n x n`` grid on ``[0, 1]^2`` with tensor trapezoidal weights summing to 1."""
    s = np.linspace(0.0, 1.0, n)
    w = np.full(n, 1.0 / (n - 1))
    w[[0, -1]] *= 0.5
    T = np.array(np.meshgrid(s, s, indexing="ij")).reshape(2, -1).T
    return T, np.outer(w, w).ravel()


def run_convergence_low(cfg: ExperimentConfig, cache_directory=None):
    """Relative L2 error of the simplicial surrogate over (t-grid, x-grid) pairs."""
    s = cfg.settings
    case = manufactured_low_dim()
    cache = SnapshotCache(cache_directory)
    T, WT = trapezoid_samples(s.t_samples)
    errors = np.zeros((len(s.t_grids), len(s.x_grids)))
    runtimes, h_x = {}, []
    for j, n in enumerate(s.x_grids):
        start = time.perf_counter()
        mesh = build_mesh(n, diagonal=s.diagonal)
        h_x.append(mesh.h)
        system = assemble_system(mesh, case.potentials, quad_order=s.quad_order)
        q = mesh.quadrature(s.quad_order)
        data_id = {"case": case.name, "quad_order": s.quad_order}
        itps = []
        for m in s.t_grids:
            grid = build_param_grid(2, m)
            S = _manufactured_snapshots(system, case, grid.nodes, s.quad_order, cache, data_id)
            itps.append(SimplicialInterpolant(grid, S))
        num = np.zeros(len(itps))
        den = 0.0
        for c in range(0, len(T), SNAPSHOT_BATCH):
            tc, wc = T[c : c + SNAPSHOT_BATCH], WT[c : c + SNAPSHOT_BATCH]
            ue = case.u(q.points, tc)
            den += wc @ (ue**2 @ q.weights)
            for i, itp in enumerate(itps):
                uh = (q.basis @ interpolate(itp, tc).T).T
                num[i] += wc @ ((ue - uh) ** 2 @ q.weights)
        errors[:, j] = np.sqrt(num / den)
        runtimes[f"x{n}"] = time.perf_counter() - start
        log.info("x-grid %d done in %.1fs", n, runtimes[f"x{n}"])
    rates = {}
    if len(s.x_grids) >= 3:
        for i, m in enumerate(s.t_grids):
            rates[f"spatial_rate_t{m}"] = fit_rate(h_x, errors[i])
    return ConvergenceReport(
        kind=cfg.kind, row_name="t_grid", col_name="x_grid", rows=list(s.t_grids), cols=list(s.x_grids),
        errors=errors, h_x=h_x, rates=rates, runtimes=runtimes, cache_stats=cache.stats(),
    )


def _relative_mc_error(case, model, q, T, batch):
    num = den = 0.0
    for c in range(0, len(T), batch):
        tc = T[c : c + batch]
        ue = case.u(q.points, tc)
        uh = (q.basis @ evaluate(model, tc).T).T
        num += float(np.sum((ue - uh) ** 2 @ q.weights))
        den += float(np.sum(ue**2 @ q.weights))
    return np.sqrt(num / den)


def run_convergence_high(cfg: ExperimentConfig, cache_directory=None):
    """Mean and across-network std of the ELM surrogate error over (M, x-grid) pairs."""
    s = cfg.settings
    case = manufactured_high_dim(cfg.seed, s.n_t)
    cache = SnapshotCache(cache_directory)
    errors = np.zeros((len(s.M_values), len(s.x_grids)))
    stds = np.zeros_like(errors)
    runtimes, h_x = {}, []
    for j, n in enumerate(s.x_grids):
        start = time.perf_counter()
        mesh = build_mesh(n)
        h_x.append(mesh.h)
        system = assemble_system(mesh, case.potentials, quad_order=s.quad_order)
        q = mesh.quadrature(s.quad_order)
        data_id = {"case": case.name, "params": case.params, "quad_order": s.quad_order}
        for i, M in enumerate(s.M_values):
            P = sobol_points(M // 4, s.n_t)
            S = _manufactured_snapshots(system, case, P, s.quad_order, cache, data_id)

            def one_network(net, M=M, P=P, S=S):
                model = train_elm(P, S, M, seed=sub_seed(cfg.seed, "features", M, net), offsets=s.feature_offsets)
                errs = []
                for rep in range(s.mc_repeats):
                    T = sub_rng(cfg.seed, "mc", net, rep).random((s.mc_samples, s.n_t))
                    errs.append(_relative_mc_error(case, model, q, T, s.mc_batch))
                return float(np.mean(errs))

            per_net = parallel_map(one_network, range(s.n_networks), cfg.n_jobs)
            errors[i, j] = np.mean(per_net)
            stds[i, j] = np.std(per_net)
        runtimes[f"x{n}"] = time.perf_counter() - start
        log.info("x-grid %d done in %.1fs", n, runtimes[f"x{n}"])
    rates = {}
    if len(s.M_values) >= 3:
        for j, n in enumerate(s.x_grids):
            rates[f"M_rate_x{n}"] = fit_rate(s.M_values, errors[:, j])
    return ConvergenceReport(
        kind=cfg.kind, row_name="M", col_name="x_grid", rows=list(s.M_values), cols=list(s.x_grids),
        errors=errors, stds=stds, h_x=h_x, rates=rates, runtimes=runtimes, cache_stats=cache.stats(),
    )


@dataclass
class RunResult:
    pixels: int
    coverage: float
    noise: float
    weighted: bool
    trial: int
    realization: int
    trace: object

    @property
    def label(self):
        w = "w" if self.weighted else "u"
        return f"p{self.pixels}_c{self.coverage:.4f}_n{self.noise:.3f}_{w}_t{self.trial}_r{self.realization}"


@dataclass
class ReconstructionReport:
    config: ExperimentConfig
    potentials: list
    targets: np.ndarray
    initial: np.ndarray
    runs: list
    observations: list
    fit: dict
    runtimes: dict = field(default_factory=dict)
    cache_stats: dict = field(default_factory=dict)

    def aggregate(self):
        """Mean/std of final errors per (pixels, coverage, noise, weighted) group, in sweep order."""
        groups = {}
        for r in self.runs:
            groups.setdefault((r.pixels, r.coverage, r.noise, r.weighted), []).append(r)
        rows = []
        for key, runs in groups.items():
            pe = np.array([r.trace.final().param_error for r in runs])
            me = np.array([r.trace.final().potential_error for r in runs])
            rows.append(
                {
                    "pixels": key[0], "coverage": key[1], "noise": key[2], "weighted": key[3],
                    "n_runs": len(runs), "mean_param_error": float(pe.mean()), "std_param_error": float(pe.std()),
                    "mean_potential_error": float(me.mean()), "std_potential_error": float(me.std()),
                    "stalled_runs": int(sum(r.trace.stalled for r in runs)),
                }
            )
        return rows


def build_potentials(seed, s):
    gauss = random_gaussians(sub_rng(seed, "potentials"), s.n_t, s.amplitude_range, s.width_range)
    return [ConstantPotential(float(s.base_potential))] + gauss


def _train_surrogate(cfg, P, S):
    s = cfg.settings
    last = None
    for attempt in range(s.fit_attempts):
        try:
            model = train_elm(P, S, s.M, seed=sub_seed(cfg.seed, "features", attempt), offsets=s.feature_offsets)
            return model, attempt
        except FitFailure as exc:
            log.warning("feature bank %d rejected: %s", attempt, exc)
            last = exc
    raise last


def run_reconstruction(cfg: ExperimentConfig, cache_directory=None):
    """Snapshots, ELM fit, reference observations and one descent per sweep point."""
    s = cfg.settings
    t_start = time.perf_counter()
    runtimes = {}
    potentials = build_potentials(cfg.seed, s)
    cache = SnapshotCache(cache_directory)

    mesh = build_mesh(s.mesh)
    system = assemble_system(mesh, potentials)
    P = sobol_points(s.J, s.n_t)
    key = snapshot_key(mesh.spec(), [p.to_dict() for p in potentials], {"source": 0, "boundary": "x1^2 x2^2/16+1"}, P)
    S = cache.get_or_compute(key, lambda: solve_many(system, P, g=pde_boundary))
    runtimes["snapshots"] = time.perf_counter() - t_start
    t0 = time.perf_counter()
    model, attempt = _train_surrogate(cfg, P, S)
    runtimes["fit"] = time.perf_counter() - t0

    ref = build_mesh(s.reference_mesh)
    ref_system = assemble_system(ref, potentials)
    targets = np.array([sub_rng(cfg.seed, "target", k).random(s.n_t) for k in range(s.trials)])
    initial = np.array([sub_rng(cfg.seed, "init", k).random(s.n_t) for k in range(s.trials)])
    ref_solutions = solve_many(ref_system, targets, g=pde_boundary)
    table = potential_grid_values(potentials, s.potential_grid)
    ls = LineSearchConfig(s.initial_step, s.shrink, s.armijo, s.max_backtracks)

    work, observations = [], []
    t0 = time.perf_counter()
    for npx in s.pixels:
        pixels = build_pixels(npx)
        tensor = precompute_tensor(mesh, pixels, potentials, s.subdivision, s.pixel_quadrature)
        clean = []
        for k in range(s.trials):
            absorbed = lambda x, k=k: evaluate_potential(potentials, x, targets[k]) * ref.evaluate(ref_solutions[k], x)
            clean.append(project(ref, pixels, absorbed, s.subdivision, s.pixel_quadrature))
        for cov in s.coverage:
            mask = centered_mask(npx, npx, cov)
            for k in range(s.trials):
                observations.append({"pixels": pixels, "coverage": cov, "trial": k, "q": clean[k], "mask": mask})
            for li, rho in enumerate(s.noise):
                for k in range(s.trials):
                    for r in range(s.realizations):
                        obs = add_noise(clean[k], rho, sub_seed(cfg.seed, "noise", npx, li, k, r), mask=mask)
                        for wtd in s.weighted:
                            work.append((npx, cov, rho, bool(wtd), k, r, tensor, obs))
    runtimes["observations"] = time.perf_counter() - t0

    def run_one(item):
        npx, cov, rho, wtd, k, r, tensor, obs = item
        problem = InverseProblem(
            model, tensor, obs, weighted=wtd, potentials=potentials, true_parameter=targets[k],
            potential_grid=s.potential_grid, _mu_grid=table,
        )
        trace = reconstruct(problem, initial[k], s.max_iter, ls)
        return RunResult(npx, float(cov), float(rho), wtd, k, r, trace)

    t0 = time.perf_counter()
    runs = parallel_map(run_one, work, cfg.n_jobs)
    runtimes["descent"] = time.perf_counter() - t0
    runtimes["total"] = time.perf_counter() - t_start
    fit = {
        "attempt": attempt,
        "max_residual": model.fit_report.max_residual,
        "relative_residual": model.fit_report.relative_residual,
        "ridge": model.fit_report.ridge,
        "refinements": model.fit_report.refinements,
    }
    return ReconstructionReport(
        config=cfg, potentials=potentials, targets=targets, initial=initial, runs=runs,
        observations=observations, fit=fit, runtimes=runtimes, cache_stats=cache.stats(),
    )


RUNNERS = {
    "convergence-low": run_convergence_low,
    "convergence-high": run_convergence_high,
    "reconstruct": run_reconstruction,
}


def run_experiment(cfg: ExperimentConfig, cache_directory=None):
    return RUNNERS[cfg.kind](cfg, cache_directory)


__all__ = [
    "ConvergenceReport",
    "ReconstructionReport",
    "RunResult",
    "run_convergence_low",
    "run_convergence_high",
    "run_reconstruction",
    "run_experiment",
    "fit_rate",
    "trapezoid_samples",
]
