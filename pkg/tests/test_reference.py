import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conspinn.collocation import QuadGrid
from conspinn.diffnet import NetSpec, init_params
from conspinn.errors import ConfigError, InvalidInputError
from conspinn.kinetic import FP_TEST1, FP_TEST2, FPConfig, bkw
from conspinn.reference import (FDGrid, conservation_traces, eval_error, fd_solve_fp, fd_stable_dt, load_fdgrid,
                                save_fdgrid)


@pytest.fixture(scope="module")
def test1_grid():
    return fd_solve_fp(FP_TEST1, 64, 128)


@pytest.fixture(scope="module")
def test2_grid():
    return fd_solve_fp(FP_TEST2, 64, 128)


def fp_quad(V=5.0):
    return QuadGrid.build((12, 24), ((0.0, 1.0), (-V, V)))


def bz_quad(n=48, V=5.0):
    return QuadGrid.build((n, n), ((-V, V), (-V, V)))


def block_average(f, factor):
    nx, nv = f.shape
    return f.reshape(nx // factor, factor, nv // factor, factor).mean(axis=(1, 3))


class TestFDSolver:
    @pytest.mark.parametrize("name", ["test1_grid", "test2_grid"])
    def test_mass_conserved(self, name, request):
        mass = request.getfixturevalue(name).mass()
        assert np.abs(mass - mass[0]).max() <= 1e-10

    @pytest.mark.parametrize("name", ["test1_grid", "test2_grid"])
    def test_positive(self, name, request):
        assert request.getfixturevalue(name).values.min() >= -1e-8

    @pytest.mark.parametrize("cfg", [FP_TEST1, FP_TEST2])
    def test_equilibrium_stationary(self, cfg):
        n_x, n_v = 32, 64
        v = -cfg.V + (np.arange(n_v) + 0.5) * 2 * cfg.V / n_v
        eq = np.tile(np.exp(-cfg.p * v**2 / (2 * cfg.q)), (n_x, 1))
        eq /= eq.sum() * (1 / n_x) * (2 * cfg.V / n_v)
        g = fd_solve_fp(cfg, n_x, n_v, initial=eq, frame_spacing=None)
        steps = max(g.n_t, 1)
        assert np.abs(g.values[-1] - eq).max() / steps <= 1e-10
        assert np.abs(g.values[-1] - eq).max() <= 1e-10

    def test_random_initial_mass(self):
        rng = np.random.default_rng(5)
        f0 = rng.uniform(0, 1, size=(32, 64))
        g = fd_solve_fp(FPConfig(q=0.5, p=0.2, T=0.2), 32, 64, initial=f0)
        assert np.abs(g.mass() - g.mass()[0]).max() <= 1e-10

    def test_self_convergence(self):
        levels = [fd_solve_fp(FP_TEST1, 32 * k, 64 * k, frame_spacing=None).values[-1] for k in (1, 2, 4)]
        fine = levels[-1]
        dxdv = (1 / 32) * (10 / 64)
        coarse = np.sqrt(np.sum((levels[0] - block_average(fine, 4)) ** 2) * dxdv)
        mid = np.sqrt(np.sum((block_average(levels[1], 2) - block_average(fine, 4)) ** 2) * dxdv)
        assert coarse / mid >= 1.7

    def test_double_resolution_close(self, test1_grid):
        fine = fd_solve_fp(FP_TEST1, 128, 256, frame_spacing=None).values[-1]
        diff = test1_grid.values[-1] - block_average(fine, 2)
        assert np.sqrt(np.sum(diff**2) * test1_grid.dx * test1_grid.dv) <= 2e-2

    def test_too_coarse(self):
        with pytest.raises(ConfigError):
            fd_solve_fp(FP_TEST1, 16, 128)

    def test_unstable_step(self):
        with pytest.raises(ConfigError):
            fd_solve_fp(FP_TEST1, 64, 128, n_t=10)

    def test_stable_dt_below_spec_bound(self):
        dx, dv = 1 / 64, 10 / 128
        assert fd_stable_dt(FP_TEST1, 64, 128) <= 0.9 * min(dx / 5, dv**2 / 2)

    def test_frames_cover_range(self, test2_grid):
        assert test2_grid.times[0] == 0 and test2_grid.times[-1] == pytest.approx(FP_TEST2.T)
        assert np.diff(test2_grid.times).max() <= 2e-3 + 1e-12


class TestFDGrid:
    def test_interp_at_cell_centres(self, test1_grid):
        g = test1_grid
        X, Vv = np.meshgrid(g.x, g.v, indexing="ij")
        np.testing.assert_allclose(g.interp(0.5, X, Vv), g.values[g.frame_index(0.5)], rtol=1e-13)

    def test_interp_periodic(self, test2_grid):
        v = np.linspace(-2, 2, 5)
        np.testing.assert_allclose(test2_grid.interp(1.0, 0 * v, v), test2_grid.interp(1.0, 0 * v + 1, v),
                                   rtol=1e-13)

    def test_out_of_range(self, test1_grid):
        with pytest.raises(InvalidInputError):
            test1_grid.frame_index(1.5)

    def test_snapping_too_coarse(self):
        g = fd_solve_fp(FP_TEST1, 32, 64, frame_spacing=None)
        with pytest.raises(InvalidInputError):
            g.frame_index(0.5)

    def test_round_trip(self, tmp_path, test1_grid):
        save_fdgrid(test1_grid, tmp_path / "g.bin")
        back = load_fdgrid(tmp_path / "g.bin")
        assert back.cfg == test1_grid.cfg and back.n_t == test1_grid.n_t
        np.testing.assert_array_equal(back.values, test1_grid.values)
        np.testing.assert_array_equal(back.times, test1_grid.times)


class TestEvalError:
    def test_identity(self, test1_grid):
        q = fp_quad()
        times = np.linspace(0, 1, 5)
        ref = lambda pts: np.array([test1_grid.interp(t, x, v) for t, x, v in pts])
        assert eval_error(ref, test1_grid, times, q).linf_l2 == 0.0

    def test_constant_offset_unit_domain(self):
        q = QuadGrid.build((6, 6), ((0.0, 1.0), (-0.5, 0.5)))
        ref = lambda pts: np.sin(pts[:, 1]) + pts[:, 0]
        rep = eval_error(lambda pts: ref(pts) + 0.3, ref, [0.0, 0.5, 1.0], q)
        np.testing.assert_allclose(rep.per_time_l2, 0.3, rtol=1e-13)
        assert rep.linf_l2 == rep.per_time_l2.max()

    def test_network_against_bkw_recomputed(self):
        params = init_params(NetSpec(3, [8, 8]), 2)
        q = bz_quad(16)
        times = np.linspace(0, 1, 4)
        ref = lambda pts: bkw(pts[:, 0], pts[:, 1], pts[:, 2])
        rep = eval_error(params, ref, times, q)

        from oracles import mlp_np
        nodes, w = q.points(), q.flat_weights()
        expected = []
        for t in times:
            pts = np.column_stack([np.full(len(nodes), t), nodes])
            net = mlp_np(params.values[None, :], params.spec.layer_sizes, pts)[0]
            expected.append(np.sqrt(np.sum(w * (net - ref(pts)) ** 2)))
        assert rep.linf_l2 == pytest.approx(max(expected), rel=1e-12)

    def test_outside_reference(self, test1_grid):
        with pytest.raises(InvalidInputError):
            eval_error(lambda p: 0 * p[:, 0], test1_grid, [1.2], fp_quad())

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.floats(-2, 2), min_size=9, max_size=9))
    def test_triangle(self, c):
        q = QuadGrid.build((5, 5), ((0, 1), (-5, 5)))
        mk = lambda a, b, d: (lambda pts: a + b * pts[:, 1] + d * np.cos(pts[:, 2]))
        f, g, r = mk(*c[:3]), mk(*c[3:6]), mk(*c[6:])
        times = [0.0, 0.5]
        e = lambda a, b: eval_error(a, b, times, q).linf_l2
        assert e(f, r) <= e(f, g) + e(g, r) + 1e-12


class TestTraces:
    def test_bkw(self):
        ts = np.linspace(0, 3, 13)
        tr = conservation_traces(lambda p: bkw(p[:, 0], p[:, 1], p[:, 2]), "boltzmann_bkw", ts, bz_quad())
        np.testing.assert_allclose(tr["mass"], 1.0, atol=1e-6)
        np.testing.assert_allclose(tr["energy"], 1.0, atol=1e-5)
        np.testing.assert_allclose(tr["momentum_x"], 0.0, atol=1e-12)
        np.testing.assert_allclose(tr["momentum_y"], 0.0, atol=1e-12)

    def test_zero(self):
        tr = conservation_traces(lambda p: 0 * p[:, 0], "boltzmann_bkw", [0.0, 1.0], bz_quad(8))
        for key in ("mass", "momentum_x", "momentum_y", "energy"):
            np.testing.assert_array_equal(tr[key], 0.0)

    def test_fp_equilibrium(self):
        cfg = FP_TEST1
        eq = lambda p: np.exp(-cfg.p * p[:, 2] ** 2 / (2 * cfg.q))
        tr = conservation_traces(eq, "fp_test1", np.linspace(0, 1, 11), fp_quad())
        assert np.ptp(tr["mass"]) <= 1e-12
        assert set(tr) == {"t", "mass"}
