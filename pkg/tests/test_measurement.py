import numpy as np
import pytest

from paramrom import InvalidArgument
from paramrom.fem import assemble_load, build_mesh
from paramrom.measurement import (
    Observation,
    add_noise,
    build_pixels,
    centered_mask,
    measure,
    pixel_sampler,
    precompute_tensor,
    project,
    read_observation_csv,
    write_observation_csv,
)
from paramrom.potentials import ConstantPotential, GaussianPotential, evaluate_potential


def test_pixel_partition_geometry():
    px = build_pixels(25)
    assert px.n_pixels == 625
    assert px.pixel_area == pytest.approx((2 / 25) ** 2)
    assert px.n_pixels * px.pixel_area == pytest.approx(4.0)
    c = px.centers()
    assert c[0] == pytest.approx([-1 + 1 / 25, -1 + 1 / 25])
    assert c[1, 0] > c[0, 0] and c[1, 1] == c[0, 1]


def test_locate_half_open_and_top_edge():
    px = build_pixels(4)
    pts = np.array([[-0.5, -1.0], [1.0, 1.0], [-1.0, 0.0], [0.49999, 0.5]])
    assert list(px.locate(pts)) == [1, 15, 8, 14]


def test_empty_mask_rejected():
    with pytest.raises(InvalidArgument):
        build_pixels(3, mask=np.zeros(9, dtype=bool))
    with pytest.raises(InvalidArgument):
        build_pixels(0)


@pytest.mark.parametrize("fraction,side", [(1.0, 25), (0.5776, 19), (0.36, 15), (0.1936, 11)])
def test_centered_masks(fraction, side):
    m = centered_mask(25, 25, fraction).reshape(25, 25)
    assert m.sum() == side * side
    rows = np.where(m.any(axis=1))[0]
    assert rows[0] == (25 - side) // 2 and rows[-1] == rows[0] + side - 1
    assert build_pixels(25, mask=fraction).coverage == pytest.approx(side * side / 625)


@pytest.mark.parametrize("method", ["clip", "bin"])
def test_project_constant(method):
    mesh = build_mesh(7)
    q = project(mesh, build_pixels(5), lambda x: np.full(len(x), 3.25), method=method)
    assert np.abs(q - 3.25).max() <= 1e-12


def test_single_pixel_linear_field_gives_center_value():
    mesh = build_mesh(6)
    q = project(mesh, build_pixels(1), lambda x: 2 + 3 * x[:, 0] - x[:, 1])
    assert q[0] == pytest.approx(2.0, abs=1e-12)


def test_clip_is_exact_for_smooth_separable_field():
    mesh = build_mesh(9)
    px = build_pixels(7)
    xs = -1 + np.arange(8) * px.width
    exact = np.outer(np.diff(np.sin(2 * xs) / 2), np.diff(np.exp(xs))).ravel() / px.pixel_area
    q = project(mesh, px, lambda x: np.exp(x[:, 0]) * np.cos(2 * x[:, 1]))
    assert np.abs(q - exact).max() < 1e-6
    qb = project(mesh, px, lambda x: np.exp(x[:, 0]) * np.cos(2 * x[:, 1]), subdivision=4, method="bin")
    assert np.abs(qb - exact).max() > np.abs(q - exact).max()


def test_sampler_pixel_weights_are_areas():
    mesh = build_mesh(11)
    px = build_pixels(6)
    s = pixel_sampler(mesh, px)
    assert np.abs(s.pixel_weight - px.pixel_area).max() < 1e-14
    assert np.abs(s.basis.sum(axis=1) - 1).max() < 1e-13


def test_unknown_method():
    with pytest.raises(InvalidArgument):
        project(build_mesh(3), build_pixels(2), lambda x: x[:, 0], method="magic")


def _setup(n=8, npx=4):
    mesh = build_mesh(n)
    pots = [ConstantPotential(1.0), GaussianPotential(5.0, 0.3, (0.2, -0.3)), GaussianPotential(8.0, 0.25, (-0.4, 0.4))]
    return mesh, pots, build_pixels(npx)


def test_tensor_load_vector_oracle():
    mesh = build_mesh(8)
    tensor = precompute_tensor(mesh, build_pixels(1), [ConstantPotential(1.0)])
    expected = assemble_load(mesh, 1.0) / mesh.area
    assert np.abs(tensor.Q[0, :, 0] - expected).max() < 1e-14


def test_tensor_disjoint_support_and_linearity():
    mesh, pots, px = _setup(9, 4)
    tensor = precompute_tensor(mesh, px, pots)
    # corner node (0) touches only the bottom-left pixel
    assert np.count_nonzero(tensor.Q[0, 0]) == 1
    doubled = precompute_tensor(mesh, px, [ConstantPotential(2.0)] + pots[1:])
    assert np.allclose(doubled.Q[0], 2 * tensor.Q[0], rtol=0, atol=1e-15)


def test_measure_examples():
    mesh, pots, px = _setup()
    tensor = precompute_tensor(mesh, px, pots)
    u = np.random.default_rng(0).standard_normal(mesh.n_nodes)
    assert np.array_equal(measure(tensor, [0.3, 0.6], np.zeros(mesh.n_nodes)), np.zeros(px.n_pixels))
    assert np.allclose(measure(tensor, [0.0, 0.0], u), u @ tensor.Q[0])
    with pytest.raises(InvalidArgument):
        measure(tensor, [0.1], u)
    with pytest.raises(InvalidArgument):
        measure(tensor, [0.1, 0.2], u[:-1])


@pytest.mark.parametrize("method", ["clip", "bin"])
def test_measure_matches_direct_projection(method):
    mesh, pots, px = _setup(10, 5)
    tensor = precompute_tensor(mesh, px, pots, method=method)
    rng = np.random.default_rng(1)
    for _ in range(50):
        t, u = rng.random(2), rng.standard_normal(mesh.n_nodes)
        direct = project(mesh, px, lambda x: evaluate_potential(pots, x, t) * mesh.evaluate(u, x), method=method)
        assert np.abs(measure(tensor, t, u) - direct).max() <= 1e-9 * np.abs(direct).max()


def test_noise_zero_is_exact():
    q = np.linspace(1, 2, 7)
    obs = add_noise(q, 0.0, 1)
    assert np.array_equal(obs.q, q)
    assert np.array_equal(obs.covariance_diag, np.zeros(7))
    with pytest.raises(InvalidArgument):
        add_noise(q, -0.1, 0)


def test_noise_statistics():
    rho, n = 0.05, 100_000
    q = np.full(n, 3.0)
    obs = add_noise(q, rho, 123)
    rel = (obs.q - q) / q
    se_mean = rho / np.sqrt(n)
    se_std = rho / np.sqrt(2 * (n - 1))
    assert abs(rel.mean()) <= 3 * se_mean
    assert abs(rel.std(ddof=1) - rho) <= 3 * se_std
    assert np.allclose(obs.covariance_diag, (rho * q) ** 2)


def test_noise_is_seeded():
    q = np.arange(1.0, 6.0)
    assert np.array_equal(add_noise(q, 0.1, 7).q, add_noise(q, 0.1, 7).q)
    assert not np.array_equal(add_noise(q, 0.1, 7).q, add_noise(q, 0.1, 8).q)


def test_observation_csv_roundtrip(tmp_path):
    px = build_pixels(3, mask=0.36)
    obs = add_noise(np.arange(1.0, 10.0), 0.1, 0, mask=px.coverage_mask)
    path = tmp_path / "obs.csv"
    write_observation_csv(path, obs, px)
    back = read_observation_csv(path, 0.1)
    assert np.array_equal(back.q, obs.q)
    assert np.array_equal(back.covariance_diag, obs.covariance_diag)
    assert np.array_equal(back.mask, obs.mask)
    header = path.read_text().splitlines()[0]
    assert header == "pixel_index,x_center,y_center,value,variance,observed_flag"
    # without covariance the variance column is empty-valued
    write_observation_csv(path, Observation(q=np.ones(9)), px)
    assert read_observation_csv(path).covariance_diag is None
