import numpy as np
import pytest

from lagrangian_euler.fields import (
    Form,
    FormPair,
    band_limit,
    curl,
    direct_mode_sum,
    divergence,
    get_grid,
    gradient,
    interpolate,
    inverse_transform,
    partial_derivative,
    random_field,
    read_snapshot,
    spectral_transform,
    wedge_residual_full,
    write_snapshot,
)

N = 16


@pytest.fixture
def grid():
    return get_grid(N)


class TestGrid:
    @pytest.mark.parametrize("n", [4, 6, 0])
    def test_rejects_small_or_odd(self, n):
        with pytest.raises(ValueError):
            get_grid(n)

    def test_cutoff_and_points(self, grid):
        assert grid.cutoff == (N - 1) // 3
        assert grid.points.shape == (3, N, N, N)
        assert grid.points[0, 1, 0, 0] == pytest.approx(2 * np.pi / N)


class TestTransforms:
    def test_constant_lands_on_zero_mode(self, grid):
        u_hat = spectral_transform(np.ones(grid.shape))
        assert u_hat[0, 0, 0] == pytest.approx(1.0)
        u_hat[0, 0, 0] = 0
        assert np.abs(u_hat).max() < 1e-15

    def test_cosine_has_half_amplitude(self, grid):
        u_hat = spectral_transform(np.cos(grid.points[0]))
        assert u_hat[1, 0, 0] == pytest.approx(0.5)
        assert u_hat[-1, 0, 0] == pytest.approx(0.5)

    @pytest.mark.parametrize("components", [1, 3])
    def test_round_trip(self, rng, components):
        u = rng.standard_normal((components, N, N, N) if components > 1 else (N, N, N))
        back = inverse_transform(spectral_transform(u), N)
        assert np.abs(back - u).max() <= 1e-12 * np.abs(u).max()

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            spectral_transform(np.zeros((8, 8, 10)))


class TestDerivatives:
    def test_sine(self, grid):
        lam = grid.points
        assert np.abs(partial_derivative(np.sin(lam[0]), 0) - np.cos(lam[0])).max() < 1e-13

    def test_constant(self, grid):
        assert np.abs(partial_derivative(np.full(grid.shape, 3.0), 2)).max() < 1e-14

    def test_product_against_symbolic(self, grid):
        import sympy as sp

        a, b = sp.symbols("a b")
        expr = sp.diff(sp.sin(a) * sp.sin(b), b)
        f = sp.lambdify((a, b), expr, "numpy")
        lam = grid.points
        got = partial_derivative(np.sin(lam[0]) * np.sin(lam[1]), 1)
        assert np.abs(got - f(lam[0], lam[1])).max() < 1e-13

    def test_curl_of_gradient_and_div_of_curl(self, rng):
        phi = random_field(N, rng, components=1)
        v = random_field(N, rng)
        assert np.abs(curl(gradient(phi))).max() < 1e-12
        assert np.abs(divergence(curl(v))).max() < 1e-12


class TestInterpolation:
    def test_cosine_value(self, grid):
        val = interpolate(np.cos(grid.points[0]), np.array([[np.pi / 3, 0, 0]]))
        assert val[0] == pytest.approx(0.5, abs=1e-14)

    def test_grid_points_reproduce_samples(self, rng, grid):
        u = rng.standard_normal(grid.shape)
        pts = grid.points.reshape(3, -1).T[::37]
        assert np.abs(interpolate(u, pts) - u.reshape(-1)[::37]).max() < 1e-12

    def test_matches_direct_mode_sum(self, rng, grid):
        band = 3
        modes = {}
        for k in np.ndindex(2 * band + 1, 2 * band + 1, 2 * band + 1):
            k = tuple(int(c) - band for c in k)
            neg = tuple(-c for c in k)
            if neg in modes:
                modes[k] = np.conj(modes[neg])
            elif k == (0, 0, 0):
                modes[k] = complex(rng.standard_normal())
            else:
                modes[k] = complex(*rng.standard_normal(2))
        pts = rng.uniform(0, 2 * np.pi, (50, 3))
        samples = direct_mode_sum(modes, grid.points.reshape(3, -1).T).reshape(grid.shape)
        got = interpolate(samples, pts)
        assert np.abs(got - direct_mode_sum(modes, pts)).max() < 1e-10

    def test_rejects_bad_points(self, grid):
        with pytest.raises(ValueError):
            interpolate(np.zeros(grid.shape), np.zeros((4, 2)))


class TestFormAlgebra:
    def test_wedge_is_antisymmetric(self, rng):
        a = Form.one_form(rng.standard_normal(3))
        b = Form.one_form(rng.standard_normal(3))
        ab, ba = a.wedge(b), b.wedge(a)
        for idx in ab.components:
            assert ab.components[idx] == pytest.approx(-ba.components[idx])

    def test_axial_round_trip(self, rng):
        a = rng.standard_normal(3)
        assert np.allclose(Form.from_axial(a).to_axial(0.0), a)

    def test_volume_form(self):
        e = [Form.one_form(np.eye(3)[i]) for i in range(3)]
        assert e[0].wedge(e[1]).wedge(e[2]).to_scalar(0.0) == pytest.approx(1.0)


class TestWedgeOracle:
    def test_zero(self, grid):
        z = np.zeros((3,) + grid.shape)
        res = wedge_residual_full(z, z, z)
        assert res.max_abs() == 0.0

    def test_shear_mode(self, grid):
        lam = grid.points
        z = np.zeros_like(lam)
        v = np.stack([z[0], np.sin(lam[0]), z[0]])
        om = np.stack([z[0], z[0], np.cos(lam[0])])
        assert wedge_residual_full(v, z, om).max_abs() < 1e-13

    def test_identity_labels_give_curl_and_divergence(self, rng):
        v = random_field(N, rng)
        z = np.zeros_like(v)
        res = wedge_residual_full(v, z, z)
        assert np.abs(res.two_form - curl(v)).max() < 1e-12
        assert np.abs(res.three_form - 2 * divergence(v)).max() < 1e-12

    def test_multilinear_in_velocity_and_vorticity(self, rng):
        y = random_field(N, rng, amplitude=0.05)
        v1, v2, o1, o2 = (random_field(N, rng) for _ in range(4))
        a, b = rng.standard_normal(2)
        lhs = wedge_residual_full(a * v1 + b * v2, y, a * o1 + b * o2)
        rhs = wedge_residual_full(v1, y, o1) * a + wedge_residual_full(v2, y, o2) * b
        assert (lhs - rhs).max_abs() < 1e-12


class TestFormPair:
    def test_shape_check(self):
        with pytest.raises(ValueError):
            FormPair(np.zeros((2, 4)), np.zeros(4))

    def test_arithmetic(self, rng):
        p = FormPair(rng.standard_normal((3, 4)), rng.standard_normal(4))
        assert (p + p - 2 * p).max_abs() == 0.0
        assert (-p).stacked().shape == (4, 4)


class TestSnapshots:
    @pytest.mark.parametrize("components", [1, 3])
    def test_round_trip(self, tmp_path, rng, components):
        u = random_field(8, rng, components=components)
        path = tmp_path / "u.lefs"
        write_snapshot(path, u, time=0.25)
        back, t = read_snapshot(path)
        assert t == 0.25
        assert np.array_equal(back, u)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.lefs"
        path.write_bytes(b"nope" + bytes(40))
        with pytest.raises(ValueError):
            read_snapshot(path)


def test_band_limit_removes_high_modes(rng):
    u = band_limit(rng.standard_normal((N, N, N)), 2)
    u_hat = spectral_transform(u)
    assert np.abs(u_hat[3:-2]).max() < 1e-14
