import math

import numpy as np
import pytest

from nonloclab.grid import Field, UniformGrid, l2_norm, sample
from nonloclab.kernels import make_kernel
from nonloclab.potentials import DoubleWell, LogarithmicPotential
from nonloclab.solvers import (
    SolverConfig,
    SolverDivergedError,
    TrajectoryRecord,
    explicit_tau_bound,
    reference_config,
    resolve_stabilization,
    run,
    step_local_ac,
    step_local_ch,
    step_nonlocal_ac,
    step_nonlocal_ch,
)


@pytest.fixture
def grid():
    return UniformGrid((1.0,), (128,), "neumann")


@pytest.fixture
def pot():
    return DoubleWell(K=1.0)


SMALL = SolverConfig(tau=1e-4, t_final=1e-3)


class TestFixedPoints:
    def test_constants_are_fixed_for_conserved_flows(self, grid, pot):
        c = Field(grid, np.full(grid.shape, 0.37))
        out = step_local_ch(c, SMALL, pot)
        assert np.max(np.abs(out.values - 0.37)) < 1e-13
        k = make_kernel(1, 0.1)
        out = step_nonlocal_ch(c, SMALL, pot, k)
        assert np.max(np.abs(out.values - 0.37)) < 1e-13

    def test_wells_are_fixed_for_nonconserved_flows(self, grid, pot):
        k = make_kernel(1, 0.1)
        for value in (1.0, -1.0):
            c = Field(grid, np.full(grid.shape, value))
            assert np.max(np.abs(step_local_ac(c, SMALL, pot).values - value)) < 1e-13
            assert np.max(np.abs(step_nonlocal_ac(c, SMALL, pot, k).values - value)) < 1e-13

    def test_zero_data_stays_zero(self, grid, pot):
        zero = Field(grid, np.zeros(grid.shape))
        cfg = SolverConfig(tau=1e-4, t_final=1e-2, record_every=10)
        rec = run(zero, cfg, pot, "local-ch")
        assert np.all(rec.mass == 0.0)
        assert float(np.max(np.abs(rec.energy - rec.energy[0]))) < 1e-14


class TestConservation:
    @pytest.mark.parametrize("equation", ["local-ch", "nonlocal-ch"])
    def test_mass_constant_along_run(self, grid, pot, equation):
        rng = np.random.default_rng(0)
        init = Field(grid, 0.1 + 0.05 * rng.standard_normal(grid.shape))
        kernel = make_kernel(1, 0.1) if equation.startswith("nonlocal") else None
        cfg = SolverConfig(tau=1e-5, t_final=2e-2, record_every=100)
        rec = run(init, cfg, pot, equation, kernel)
        assert np.max(np.abs(rec.mass - rec.mass[0])) <= 1e-10 * grid.volume

    def test_nonconserved_flow_moves_mass(self, grid, pot):
        init = Field(grid, np.full(grid.shape, 0.3))
        cfg = SolverConfig(tau=1e-4, t_final=0.1, record_every=100)
        rec = run(init, cfg, pot, "local-ac")
        assert abs(rec.mass[-1] - rec.mass[0]) > 1e-3


class TestEnergyDissipation:
    @pytest.mark.parametrize("equation", ["local-ch", "nonlocal-ch", "local-ac", "nonlocal-ac"])
    def test_energy_non_increasing(self, grid, pot, equation):
        rng = np.random.default_rng(1)
        init = Field(grid, 0.05 * rng.standard_normal(grid.shape))
        kernel = make_kernel(1, 0.1) if equation.startswith("nonlocal") else None
        cfg = SolverConfig(tau=2e-5, t_final=5e-3, record_every=25)
        rec = run(init, cfg, pot, equation, kernel)
        assert np.all(np.diff(rec.energy) <= 1e-10)

    def test_logarithmic_potential_run(self, grid):
        pot = LogarithmicPotential(theta=0.8, theta_c=1.0)
        rng = np.random.default_rng(2)
        init = Field(grid, 0.1 * rng.standard_normal(grid.shape))
        cfg = SolverConfig(tau=2e-5, t_final=5e-3, record_every=25)
        rec = run(init, cfg, pot, "local-ch")
        assert np.all(np.diff(rec.energy) <= 1e-10)
        assert np.max(np.abs(rec.mass - rec.mass[0])) < 1e-12


class TestAgainstAnalyticDynamics:
    def test_spinodal_growth_rate(self, pot):
        # linearized conserved dynamics around zero: one Fourier mode grows
        # like exp(lam (4K - lam) t); mode one on a 2 pi box has lam = 1
        g = UniformGrid((2 * math.pi,), (128,), "periodic")
        amp = 1e-6
        init = sample(g, lambda x: amp * np.cos(x))
        cfg = SolverConfig(tau=1e-6, t_final=1e-2, record_every=10000, keep_fields=True)
        rec = run(init, cfg, pot, "local-ch")
        growth = math.log(l2_norm(rec_field(rec, -1)) / l2_norm(rec_field(rec, 0)))
        rate = growth / rec.times[-1]
        assert rate == pytest.approx(3.0, rel=0.02)

    def test_stable_mode_decays(self, pot):
        g = UniformGrid((2 * math.pi,), (128,), "periodic")
        init = sample(g, lambda x: 1e-6 * np.cos(3 * x))
        cfg = SolverConfig(tau=1e-6, t_final=1e-3, record_every=1000, keep_fields=True)
        rec = run(init, cfg, pot, "local-ch")
        rate = math.log(l2_norm(rec_field(rec, -1)) / l2_norm(rec_field(rec, 0))) / rec.times[-1]
        assert rate == pytest.approx(9.0 * (4.0 - 9.0), rel=0.05)

    def test_homogeneous_relaxation_matches_closed_form(self, pot):
        # spatially flat data reduces the non-conserved flow to a scalar
        # equation whose square obeys a logistic law
        g = UniformGrid((1.0,), (8,), "neumann")
        c0 = 0.3
        init = Field(g, np.full(g.shape, c0))
        cfg = SolverConfig(tau=1e-5, t_final=0.5, record_every=5000)
        rec = run(init, cfg, pot, "local-ac")
        t = rec.times[-1]
        y = c0**2 * math.exp(8 * t) / (1 + c0**2 * (math.exp(8 * t) - 1))
        assert rec.mass[-1] == pytest.approx(math.sqrt(y), rel=1e-3)
        assert np.all(np.diff(rec.mass) > 0)  # monotone climb toward the well


def rec_field(record, idx):
    if record.fields is None:
        raise AssertionError("run was not configured to keep fields")
    return record.fields[idx]


class TestSchemeProperties:
    def test_first_order_in_time(self, pot):
        g = UniformGrid((1.0,), (64,), "periodic")
        init = sample(g, lambda x: 0.2 * np.sin(2 * np.pi * x))
        taus = (4e-5, 2e-5, 1e-5)

        def final_state(tau):
            cfg = SolverConfig(tau=tau, t_final=4e-3, record_every=10**6, keep_fields=True)
            return run(init, cfg, pot, "local-ch").fields[-1]

        ref_field = final_state(1.25e-6)
        errors = [l2_norm(final_state(t) - ref_field) for t in taus]
        slopes = [math.log(a / b) / math.log(2) for a, b in zip(errors, errors[1:])]
        assert all(abs(s - 1.0) <= 0.15 for s in slopes)

    def test_explicit_scheme_agrees_as_tau_shrinks(self, pot):
        # the two schemes are different first-order discretizations of the
        # same flow, so their gap at a fixed final time is linear in the step
        g = UniformGrid((1.0,), (32,), "neumann")
        init = sample(g, lambda x: 0.1 * np.cos(np.pi * x))
        k = make_kernel(1, 0.25)
        bound = explicit_tau_bound("nonlocal-ch", g, 1.0, k)
        t_final = 64 * bound / 8

        def gap(tau):
            steps = int(round(t_final / tau))
            cfg_i = SolverConfig(tau=tau, t_final=t_final, record_every=steps,
                                 keep_fields=True)
            cfg_e = SolverConfig(tau=tau, t_final=t_final, record_every=steps,
                                 keep_fields=True, scheme="explicit")
            out_i = run(init, cfg_i, pot, "nonlocal-ch", k).fields[-1]
            out_e = run(init, cfg_e, pot, "nonlocal-ch", k).fields[-1]
            return l2_norm(out_i - out_e)

        g1, g2 = gap(bound / 8), gap(bound / 16)
        assert g1 / g2 == pytest.approx(2.0, rel=0.3)

    def test_explicit_tau_guard(self, grid, pot):
        k = make_kernel(1, 0.1)
        bound = explicit_tau_bound("nonlocal-ch", grid, 1.0, k)
        cfg = SolverConfig(tau=10 * bound, t_final=1.0, scheme="explicit")
        init = sample(grid, lambda x: 0.1 * np.cos(np.pi * x))
        with pytest.raises(ValueError, match="stability bound"):
            run(init, cfg, pot, "nonlocal-ch", k)
        cfg_ok = SolverConfig(tau=10 * bound, t_final=10 * bound * 5, scheme="explicit",
                              allow_unstable_tau=True)
        with pytest.warns(UserWarning, match="stability bound"):
            run(init, cfg_ok, pot, "nonlocal-ch", k)

    def test_divergence_detector(self, grid, pot):
        # a wildly unstable explicit step must abort with a diagnostic
        bound = explicit_tau_bound("local-ch", grid, 1.0)
        cfg = SolverConfig(tau=bound * 1e4, t_final=bound * 1e6, scheme="explicit",
                           allow_unstable_tau=True, record_every=10)
        rng = np.random.default_rng(3)
        init = Field(grid, 0.1 * rng.standard_normal(grid.shape))
        with pytest.warns(UserWarning):
            with pytest.raises(SolverDivergedError, match="diverged"):
                run(init, cfg, pot, "local-ch")

    def test_stabilization_floor_enforced(self, grid, pot):
        cfg = SolverConfig(tau=1e-4, t_final=1e-3, stabilization=1.0)
        init = sample(grid, lambda x: 0.1 * np.cos(np.pi * x))
        with pytest.raises(ValueError, match="curvature bound"):
            run(init, cfg, pot, "local-ch")
        assert resolve_stabilization(SolverConfig(tau=1e-4, t_final=1e-3), pot) == pot.alpha

    def test_kernel_required_for_nonlocal(self, grid, pot):
        init = sample(grid, lambda x: 0.1 * np.cos(np.pi * x))
        with pytest.raises(ValueError, match="kernel"):
            run(init, SMALL, pot, "nonlocal-ch")

    def test_unknown_equation(self, grid, pot):
        init = sample(grid, lambda x: x)
        with pytest.raises(ValueError, match="equation"):
            run(init, SMALL, pot, "heat")


class TestTwoDimensional:
    def test_nonlocal_ch_2d_structure(self):
        g = UniformGrid((1.0, 1.0), (32, 32), "neumann")
        k = make_kernel(2, 0.2)
        pot = DoubleWell(K=1.0)
        rng = np.random.default_rng(6)
        init = Field(g, 0.05 * rng.standard_normal(g.shape))
        cfg = SolverConfig(tau=2e-5, t_final=2e-3, record_every=20)
        rec = run(init, cfg, pot, "nonlocal-ch", k)
        assert np.max(np.abs(rec.mass - rec.mass[0])) <= 1e-12
        assert np.all(np.diff(rec.energy) <= 1e-10)

    def test_local_ch_2d_fixed_point(self):
        g = UniformGrid((1.0, 2.0), (16, 32), "neumann")
        c = Field(g, np.full(g.shape, -0.2))
        out = step_local_ch(c, SMALL, DoubleWell())
        assert np.max(np.abs(out.values + 0.2)) < 1e-13


class TestRecords:
    def test_reference_config_aligns_times(self, grid, pot):
        init = sample(grid, lambda x: 0.1 * np.cos(np.pi * x))
        cfg = SolverConfig(tau=1e-4, t_final=1e-2, record_every=10, keep_fields=True)
        rec = run(init, cfg, pot, "local-ch")
        ref = run(init, reference_config(cfg), pot, "local-ch")
        assert rec.times.shape == ref.times.shape
        assert np.allclose(rec.times, ref.times, rtol=1e-12, atol=1e-15)

    def test_csv_output(self, grid, pot, tmp_path):
        init = sample(grid, lambda x: 0.1 * np.cos(np.pi * x))
        cfg = SolverConfig(tau=1e-4, t_final=1e-3, record_every=5)
        rec = run(init, cfg, pot, "local-ch")
        path = tmp_path / "traj.csv"
        rec.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,mass,energy"
        assert len(lines) == len(rec.times) + 1

    def test_record_validation(self):
        with pytest.raises(ValueError, match="increasing"):
            TrajectoryRecord("local-ch", np.asarray([0.0, 0.0]),
                             np.zeros(2), np.zeros(2))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(tau=0.0, t_final=1.0)
        with pytest.raises(ValueError):
            SolverConfig(tau=1.0, t_final=0.5)
        with pytest.raises(ValueError):
            SolverConfig(tau=1e-3, t_final=1.0, scheme="leapfrog")
        with pytest.raises(ValueError):
            SolverConfig(tau=1e-3, t_final=1.0, record_every=0)
