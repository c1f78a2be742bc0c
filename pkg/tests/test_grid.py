import math

import numpy as np
import pytest

from nonloclab.grid import (
    Field,
    UniformGrid,
    field_to_csv,
    hminus1_norm,
    integrate,
    l2_norm,
    load_field,
    lp_norm,
    sample,
    save_field,
    sobolev_norm,
)


@pytest.fixture
def neumann_grid():
    return UniformGrid((1.0,), (256,), "neumann")


class TestGridBasics:
    def test_cell_centers(self):
        g = UniformGrid((1.0,), (4,))
        f = sample(g, lambda x: x)
        assert np.array_equal(f.values, [0.125, 0.375, 0.625, 0.875])

    def test_constant_sample(self, neumann_grid):
        f = sample(neumann_grid, lambda x: np.ones_like(x))
        assert np.all(f.values == 1.0)

    def test_cosine_has_zero_mean(self, neumann_grid):
        f = sample(neumann_grid, lambda x: np.cos(np.pi * x))
        assert abs(integrate(f)) < 1e-13

    def test_validation(self):
        with pytest.raises(ValueError):
            UniformGrid((1.0,), (0,))
        with pytest.raises(ValueError):
            UniformGrid((-1.0,), (8,))
        with pytest.raises(ValueError):
            UniformGrid((1.0, 1.0, 1.0), (4, 4, 4))
        with pytest.raises(ValueError):
            UniformGrid((1.0,), (8,), "dirichlet")
        with pytest.raises(ValueError):
            UniformGrid((1.0, 2.0), (4,))

    def test_field_validation(self, neumann_grid):
        with pytest.raises(ValueError):
            Field(neumann_grid, np.zeros(7))
        bad = np.zeros(neumann_grid.shape)
        bad[3] = np.inf
        with pytest.raises(ValueError):
            Field(neumann_grid, bad)

    def test_field_arithmetic_requires_same_grid(self, neumann_grid):
        other = UniformGrid((1.0,), (128,), "neumann")
        f = sample(neumann_grid, lambda x: x)
        g = sample(other, lambda x: x)
        with pytest.raises(ValueError):
            f + g


class TestNorms:
    def test_constant_norms(self):
        g = UniformGrid((1.0,), (64,))
        one = sample(g, lambda x: np.ones_like(x))
        assert integrate(one) == pytest.approx(1.0, rel=1e-14)
        assert l2_norm(one) == pytest.approx(1.0, rel=1e-14)

    def test_cosine_l2(self, neumann_grid):
        f = sample(neumann_grid, lambda x: np.cos(np.pi * x))
        assert l2_norm(f) == pytest.approx(1 / math.sqrt(2), rel=1e-12)

    def test_lp_equals_l2_at_two(self, neumann_grid):
        rng = np.random.default_rng(3)
        f = Field(neumann_grid, rng.standard_normal(neumann_grid.shape))
        assert lp_norm(f, 2) == l2_norm(f)  # exact, same code path

    def test_lp_rejects_small_p(self, neumann_grid):
        f = sample(neumann_grid, lambda x: x)
        with pytest.raises(ValueError):
            lp_norm(f, 0.5)

    def test_midpoint_rule_is_second_order(self):
        exact = math.e - 1.0
        errors = []
        for n in (16, 32, 64, 128):
            g = UniformGrid((1.0,), (n,))
            errors.append(abs(integrate(sample(g, np.exp)) - exact))
        rates = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
        assert all(abs(r - 2.0) < 0.05 for r in rates)


class TestSobolevNorms:
    @pytest.mark.parametrize("boundary", ["neumann", "periodic"])
    def test_parseval(self, boundary):
        g = UniformGrid((1.0,), (128,), boundary)
        rng = np.random.default_rng(7)
        f = Field(g, rng.standard_normal(g.shape))
        assert sobolev_norm(f, 0.0) == pytest.approx(l2_norm(f), abs=1e-12)

    def test_single_mode_negative_order(self, neumann_grid):
        # one eigenmode: the norm is the plain norm times the analytic weight
        f = sample(neumann_grid, lambda x: np.cos(np.pi * x))
        expected = (1 + math.pi**2) ** -0.5 / math.sqrt(2)
        assert sobolev_norm(f, -1.0) == pytest.approx(expected, rel=1e-12)

    def test_second_order_matches_laplacian_combination(self, neumann_grid):
        from nonloclab.local_ops import dirichlet_energy, laplacian

        f = sample(neumann_grid, lambda x: np.cos(np.pi * x) + 0.3 * np.cos(3 * np.pi * x))
        lap = laplacian(f)
        combo = l2_norm(f) ** 2 + 4 * dirichlet_energy(f) + l2_norm(lap) ** 2
        assert sobolev_norm(f, 2.0) ** 2 == pytest.approx(combo, rel=1e-11)

    def test_norm_ordering(self, neumann_grid):
        rng = np.random.default_rng(11)
        f = Field(neumann_grid, rng.standard_normal(neumann_grid.shape))
        orders = [-1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0]
        values = [sobolev_norm(f, s) for s in orders]
        assert all(a <= b * (1 + 1e-12) for a, b in zip(values, values[1:]))

    def test_range_check(self, neumann_grid):
        f = sample(neumann_grid, lambda x: x)
        with pytest.raises(ValueError):
            sobolev_norm(f, 3.5)
        with pytest.raises(ValueError):
            sobolev_norm(f, -1.2)


class TestDualNorm:
    def test_cosine_oracle(self, neumann_grid):
        # solving the zero-flux problem for one cosine mode divides by pi^2,
        # and the gradient brings one power back
        f = sample(neumann_grid, lambda x: np.cos(np.pi * x))
        assert hminus1_norm(f) == pytest.approx(1 / (math.pi * math.sqrt(2)), rel=1e-12)

    def test_zero_field(self, neumann_grid):
        assert hminus1_norm(Field(neumann_grid, np.zeros(neumann_grid.shape))) == 0.0

    def test_homogeneity(self, neumann_grid):
        rng = np.random.default_rng(5)
        f = Field(neumann_grid, rng.standard_normal(neumann_grid.shape))
        assert hminus1_norm(2.0 * f) == pytest.approx(2.0 * hminus1_norm(f), rel=1e-12)

    def test_mean_handled_additively(self):
        g = UniformGrid((2.0,), (64,))
        const = Field(g, np.full(g.shape, 0.3))
        assert hminus1_norm(const) == pytest.approx(0.3 * math.sqrt(2.0), rel=1e-12)

    def test_periodic_single_mode_oracle(self):
        g = UniformGrid((1.0,), (128,), "periodic")
        f = sample(g, lambda x: np.cos(2 * np.pi * x))
        assert hminus1_norm(f) == pytest.approx(1 / (2 * math.pi * math.sqrt(2)), rel=1e-12)

    def test_2d_single_mode_sobolev(self):
        g = UniformGrid((1.0, 1.0), (64, 64), "neumann")
        f = sample(g, lambda x, y: np.cos(np.pi * x) * np.cos(2 * np.pi * y))
        lam = math.pi**2 + 4 * math.pi**2
        assert sobolev_norm(f, -1.0) == pytest.approx((1 + lam) ** -0.5 * 0.5, rel=1e-12)


class TestSerialization:
    def test_binary_roundtrip(self, tmp_path):
        g = UniformGrid((1.0, 2.0), (16, 32), "periodic")
        rng = np.random.default_rng(1)
        f = Field(g, rng.standard_normal(g.shape))
        path = tmp_path / "field.bin"
        save_field(f, path)
        back = load_field(path)
        assert back.grid == g
        assert np.array_equal(back.values, f.values)

    def test_binary_rejects_garbage(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError):
            load_field(path)

    def test_csv_1d(self, tmp_path):
        g = UniformGrid((1.0,), (4,))
        f = sample(g, lambda x: x)
        path = tmp_path / "f.csv"
        field_to_csv(f, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "x,value"
        assert lines[1].startswith("0.125,")
        assert len(lines) == 5

    def test_csv_2d(self, tmp_path):
        g = UniformGrid((1.0, 1.0), (2, 2))
        f = sample(g, lambda x, y: x + y)
        path = tmp_path / "f2.csv"
        field_to_csv(f, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "x,y,value"
        assert len(lines) == 5
