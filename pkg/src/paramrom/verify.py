"""Invariant suites behind the ``verify`` subcommand.

Each check returns a :class:`CheckResult` with the measured value and the
threshold it was compared against. Sizes are small so the whole suite runs
in well under a minute.
"""

from dataclasses import dataclass

import numpy as np

from .elm import FeatureBank, evaluate, feature_matrix, fit_min_norm, gradient, sample_features, sobol_points, train_elm
from .errors import ConfigurationError
from .experiments import pde_boundary
from .fem import assemble_load, assemble_system, build_mesh, l2_error, solve_fem, solve_many
from .inversion import InverseProblem, loss, loss_and_grad, reconstruct
from .manufactured import manufactured_high_dim, manufactured_low_dim
from .measurement import (
    Observation,
    add_noise,
    build_pixels,
    centered_mask,
    measure,
    pixel_sampler,
    precompute_tensor,
    project,
)
from .param_interp import SimplicialInterpolant, build_param_grid, interpolate
from .potentials import ConstantPotential, GaussianPotential, evaluate_potential, random_gaussians
from .seeding import sub_rng, sub_seed


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    value: float
    threshold: str

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.suite}.{self.name}: {self.value:.3e} ({self.threshold})"


def _rate(h, e):
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


# fem


def fem_spd(seed=0):
    rng = sub_rng(seed, "verify.spd")
    mesh = build_mesh(10)
    system = assemble_system(mesh, manufactured_high_dim(seed).potentials)
    worst = np.inf
    for t in rng.random((100, system.n_t)):
        A = system.reduced(t)[0].toarray()
        np.linalg.cholesky(A)
        worst = min(worst, np.linalg.eigvalsh(A)[0])
    return CheckResult("fem", "spd_random_t", worst > 0, worst, "min eigenvalue > 0 over 100 t")


def fem_galerkin(seed=0):
    mesh = build_mesh(15)
    pots = [ConstantPotential(1.0), GaussianPotential(3.0, 0.4, (0.1, 0.2))]
    f = lambda x: np.cos(x[:, 0]) + x[:, 1]
    system = assemble_system(mesh, pots, load_fn=lambda t: assemble_load(mesh, f))
    t = np.array([0.4])
    u = solve_fem(system, t, g=lambda x: 1 + x[:, 0]).coefficients
    r = system.matrix(t) @ u - system.load(t)
    I = mesh.interior_nodes
    rel = np.abs(r[I]).max() / np.abs(system.load(t)[I]).max()
    return CheckResult("fem", "galerkin_orthogonality", rel <= 1e-9, rel, "<= 1e-9 relative")


def fem_h2_rate(seed=0):
    u = lambda x: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
    f = lambda x: (2 * np.pi**2 + 1) * u(x)
    hs, errs = [], []
    for n in (10, 20, 40, 80):
        mesh = build_mesh(n)
        system = assemble_system(mesh, [ConstantPotential(1.0)], load_fn=lambda t, m=mesh: assemble_load(m, f))
        errs.append(l2_error(mesh, solve_fem(system, [], g=0.0), u))
        hs.append(mesh.h)
    rate = _rate(hs, errs)
    return CheckResult("fem", "h2_rate", 1.8 <= rate <= 2.1, rate, "in [1.8, 2.1]")


def fem_constant(seed=0):
    mesh = build_mesh(12)
    pots = [ConstantPotential(0.5), GaussianPotential(2.0, 0.3, (0.2, -0.1))]
    t = np.array([0.7])
    c = 2.5
    system = assemble_system(mesh, pots, quad_order=6)
    load = assemble_load(mesh, lambda x: c * evaluate_potential(pots, x, t), quad_order=6)
    err = np.abs(solve_fem(system, t, g=c, load=load).coefficients - c).max()
    return CheckResult("fem", "constant_exactness", err <= 1e-10, err, "<= 1e-10")


# param_interp


def interp_affine(seed=0):
    rng = sub_rng(seed, "verify.affine")
    worst = 0.0
    for n_t, n in ((1, 6), (2, 7), (3, 4), (4, 3)):
        grid = build_param_grid(n_t, n)
        a, b = rng.standard_normal(5), rng.standard_normal((n_t, 5))
        itp = SimplicialInterpolant(grid, a + grid.nodes @ b)
        T = rng.random((1000, n_t))
        worst = max(worst, np.abs(interpolate(itp, T) - (a + T @ b)).max())
    return CheckResult("param_interp", "affine_reproduction", worst <= 1e-12, worst, "<= 1e-12")


def interp_nodal(seed=0):
    grid = build_param_grid(3, 4)
    S = sub_rng(seed, "verify.nodal").standard_normal((grid.n_nodes, 7))
    itp = SimplicialInterpolant(grid, S)
    ok = all(np.array_equal(interpolate(itp, x), S[j]) for j, x in enumerate(grid.nodes))
    return CheckResult("param_interp", "nodal_exactness", ok, 0.0 if ok else 1.0, "bit-for-bit")


def interp_rate(seed=0):
    fn = lambda t: np.sin(2 * t[:, 0]) * np.exp(t[:, 1])
    T = sub_rng(seed, "verify.rate").random((4000, 2))
    hs, errs = [], []
    for n in (5, 9, 17, 33):
        grid = build_param_grid(2, n)
        itp = SimplicialInterpolant(grid, fn(grid.nodes)[:, None])
        errs.append(np.sqrt(np.mean((interpolate(itp, T)[:, 0] - fn(T)) ** 2)))
        hs.append(grid.h)
    rate = _rate(hs, errs)
    return CheckResult("param_interp", "h2_rate", 1.8 <= rate <= 2.1, rate, "in [1.8, 2.1]")


# elm


def elm_gate(seed=0):
    P = sobol_points(100, 3)
    U = np.column_stack([np.sin(P @ [1.0, 2.0, 3.0]), np.exp(P[:, 0]), P[:, 1] * P[:, 2]])
    model = train_elm(P, U, 400, seed=sub_seed(seed, "verify.gate"))
    resid = np.abs(evaluate(model, P) - U).max() / (1 + np.abs(U).max())
    return CheckResult("elm", "interpolation_gate", resid <= 1e-8, resid, "<= 1e-8 relative")


def elm_min_norm(seed=0):
    rng = sub_rng(seed, "verify.minnorm")
    worst_fit, ok = 0.0, True
    for _ in range(5):
        bank = sample_features(120, 4, rng.integers(2**32))
        Psi = feature_matrix(bank, rng.random((30, 4)))
        V = rng.standard_normal((120, 2))
        W, _ = fit_min_norm(Psi, Psi @ V)
        worst_fit = max(worst_fit, np.abs(Psi @ W.T - Psi @ V).max())
        ok &= bool(np.all(np.linalg.norm(W.T, axis=0) <= np.linalg.norm(V, axis=0) * (1 + 1e-10)))
    return CheckResult("elm", "min_norm", ok and worst_fit <= 1e-8, worst_fit, "|w| <= |v| and fit <= 1e-8")


def elm_homogeneity(seed=0):
    bank = sample_features(50, 3, sub_seed(seed, "verify.homog"))
    bank0 = FeatureBank(B=bank.B, c=np.zeros(bank.M))
    T = sub_rng(seed, "verify.homog.t").random((20, 3))
    err = max(np.abs(feature_matrix(bank0, a * T) - a * feature_matrix(bank0, T)).max() for a in (0.3, 2.0, 7.5))
    return CheckResult("elm", "positive_homogeneity", err <= 1e-12, err, "<= 1e-12")


def _kink_free_points(bank, n, rng, margin=1e-4):
    out = []
    while len(out) < n:
        t = rng.uniform(0.05, 0.95, bank.n_t)
        if np.abs(bank.pre_activation(t)).min() > margin:
            out.append(t)
    return out


def elm_gradient(seed=0):
    rng = sub_rng(seed, "verify.elmgrad")
    P = sobol_points(60, 3)
    U = np.column_stack([np.sin(P @ [1.0, 2.0, 3.0]), P[:, 0] ** 2])
    model = train_elm(P, U, 240, seed=sub_seed(seed, "verify.elmgrad.features"))
    worst, h = 0.0, 1e-6
    for t in _kink_free_points(model.bank, 20, rng):
        fd = np.column_stack([(evaluate(model, t + h * e) - evaluate(model, t - h * e)) / (2 * h) for e in np.eye(3)])
        g = gradient(model, t)
        worst = max(worst, np.linalg.norm(fd - g) / np.linalg.norm(g))
    return CheckResult("elm", "gradient_fd", worst <= 1e-5, worst, "<= 1e-5 relative")


# measurement


def _toy_measurement(seed=0, n_t=3, n=9, npx=5):
    mesh = build_mesh(n)
    pots = [ConstantPotential(1.0)] + random_gaussians(sub_rng(seed, "verify.pots"), n_t, (5, 10), (0.2, 0.4))
    pixels = build_pixels(npx)
    return mesh, pots, pixels, precompute_tensor(mesh, pixels, pots)


def measurement_tensor_path(seed=0):
    mesh, pots, pixels, tensor = _toy_measurement(seed)
    rng = sub_rng(seed, "verify.tensor")
    worst = 0.0
    for _ in range(50):
        t, u = rng.random(tensor.n_t), rng.standard_normal(mesh.n_nodes)
        a = measure(tensor, t, u)
        b = project(mesh, pixels, lambda x: evaluate_potential(pots, x, t) * mesh.evaluate(u, x))
        worst = max(worst, np.abs(a - b).max() / np.abs(b).max())
    return CheckResult("measurement", "tensor_vs_direct", worst <= 1e-9, worst, "<= 1e-9 relative")


def measurement_nonexpansive(seed=0):
    mesh, _, pixels, _ = _toy_measurement(seed)
    s = pixel_sampler(mesh, pixels)
    rng = sub_rng(seed, "verify.nonexp")
    worst = -np.inf
    for _ in range(100):
        u = rng.standard_normal(mesh.n_nodes)
        vals = s.basis @ u
        q = s.average @ vals
        ratio = np.sqrt(pixels.pixel_area * np.sum(q**2)) / np.sqrt(s.weights @ vals**2)
        worst = max(worst, ratio)
    return CheckResult("measurement", "non_expansive", worst <= 1 + 1e-12, worst, "|Qf| / |f| <= 1")


def measurement_idempotent(seed=0):
    mesh, _, pixels, _ = _toy_measurement(seed)
    c = sub_rng(seed, "verify.idem").standard_normal(pixels.n_pixels)
    field = lambda x: c[pixels.locate(x)]
    q = project(mesh, pixels, field)
    q2 = project(mesh, pixels, lambda x: q[pixels.locate(x)])
    err = max(np.abs(q - c).max(), np.abs(q2 - q).max())
    return CheckResult("measurement", "idempotence", err <= 1e-12, err, "<= 1e-12")


def measurement_affinity(seed=0):
    mesh, _, _, tensor = _toy_measurement(seed)
    rng = sub_rng(seed, "verify.affinity")
    t1, t2 = rng.random(tensor.n_t), rng.random(tensor.n_t)
    u1, u2 = rng.standard_normal(mesh.n_nodes), rng.standard_normal(mesh.n_nodes)
    a, b = 0.3, 1.7
    lin = measure(tensor, t1, a * u1 + b * u2) - (a * measure(tensor, t1, u1) + b * measure(tensor, t1, u2))
    # affine in t: f(s t1 + (1-s) t2) = s f(t1) + (1-s) f(t2)
    s = 0.35
    aff = measure(tensor, s * t1 + (1 - s) * t2, u1) - (s * measure(tensor, t1, u1) + (1 - s) * measure(tensor, t2, u1))
    err = max(np.abs(lin).max(), np.abs(aff).max()) / np.abs(measure(tensor, t1, u1)).max()
    return CheckResult("measurement", "affinity", err <= 1e-12, err, "<= 1e-12 relative")


# inversion


def _toy_inverse(seed=0, n_t=3, mesh_n=9, J=40, npx=6):
    mesh = build_mesh(mesh_n)
    pots = [ConstantPotential(1.0)] + random_gaussians(sub_rng(seed, "verify.inv.pots"), n_t, (5, 10), (0.2, 0.4))
    system = assemble_system(mesh, pots)
    P = sobol_points(J, n_t)
    S = solve_many(system, P, g=pde_boundary)
    model = train_elm(P, S, 4 * J, seed=sub_seed(seed, "verify.inv.features"))
    pixels = build_pixels(npx)
    tensor = precompute_tensor(mesh, pixels, pots)
    return model, tensor, pots


def inversion_gradient(seed=0):
    model, tensor, pots = _toy_inverse(seed)
    rng = sub_rng(seed, "verify.invgrad")
    t_true = rng.random(tensor.n_t)
    q = measure(tensor, t_true, evaluate(model, t_true))
    worst, h = 0.0, 1e-6
    for weighted in (False, True):
        for mask in (None, centered_mask(tensor.pixels.nx, tensor.pixels.ny, 0.36)):
            obs = add_noise(q, 0.05, sub_seed(seed, "verify.invgrad.noise"), mask=mask)
            prob = InverseProblem(model, tensor, obs, weighted=weighted)
            for t in _kink_free_points(model.bank, 10, rng):
                _, g = loss_and_grad(prob, t)
                fd = np.array([(loss(prob, t + h * e) - loss(prob, t - h * e)) / (2 * h) for e in np.eye(tensor.n_t)])
                worst = max(worst, np.linalg.norm(fd - g) / np.linalg.norm(g))
    return CheckResult("inversion", "gradient_fd", worst <= 1e-4, worst, "<= 1e-4 relative")


def inversion_descent(seed=0):
    """Armijo monotonicity, box projection and noiseless self-consistency."""
    model, tensor, pots = _toy_inverse(seed)
    rng = sub_rng(seed, "verify.descent")
    t_true = rng.uniform(0.2, 0.8, tensor.n_t)
    q = measure(tensor, t_true, evaluate(model, t_true))
    d = rng.standard_normal(tensor.n_t)
    t0 = np.clip(t_true + 0.1 * rng.random() * d / np.linalg.norm(d), 0, 1)
    prob = InverseProblem(model, tensor, Observation(q=q), true_parameter=t_true)
    trace = reconstruct(prob, t0, 500)
    L = trace.losses
    mono = bool(np.all(np.diff(L) <= 1e-14 * max(L[0], 1e-300)))
    inside = all(np.all((t >= 0) & (t <= 1)) for t in trace.iterates)
    err = trace.param_errors[-1]
    ok = mono and inside and err <= 1e-6
    return CheckResult("inversion", "descent_self_consistency", ok, err, "monotone, in box, error <= 1e-6")


# manufactured


def manufactured_laplacian(seed=0):
    rng = sub_rng(seed, "verify.fd")
    h = 1e-4
    worst = 0.0
    for case in (manufactured_low_dim(), manufactured_high_dim(seed)):
        for _ in range(100):
            x = rng.uniform(-1, 1, (1, 2))
            t = rng.random(case.n_t)
            fd = sum(
                case.u(x + h * e, t) + case.u(x - h * e, t) - 2 * case.u(x, t) for e in (np.array([[1.0, 0]]), np.array([[0, 1.0]]))
            ) / h**2
            ex = case.laplacian(x, t)
            worst = max(worst, float(np.abs(fd - ex).max() / max(1.0, np.abs(ex).max())))
    return CheckResult("manufactured", "fd_laplacian", worst <= 1e-6, worst, "<= 1e-6 relative")


SUITES = {
    "fem": [fem_spd, fem_galerkin, fem_h2_rate, fem_constant],
    "param_interp": [interp_affine, interp_nodal, interp_rate],
    "elm": [elm_gate, elm_min_norm, elm_homogeneity, elm_gradient],
    "measurement": [measurement_tensor_path, measurement_nonexpansive, measurement_idempotent, measurement_affinity],
    "inversion": [inversion_gradient, inversion_descent],
    "manufactured": [manufactured_laplacian],
}


def run_suites(names=None, seed=0):
    names = names or list(SUITES)
    results = []
    for name in names:
        if name not in SUITES:
            raise ConfigurationError(f"unknown suite {name!r}; valid names: {', '.join(SUITES)}")
        for check in SUITES[name]:
            results.append(check(seed))
    return results
