import numpy as np
import pytest

from gravhartree import (GroundState, RadialGrid, evaluate_Q_3d,
                         newtonian_potential_radial, solve_ground_state)
from gravhartree.errors import UnsupportedOrderError


class TestGroundStateInvariants:
    def test_positivity_monotonicity(self, gs):
        assert np.all(gs.q > 0)
        assert np.all(np.diff(gs.q) < 0)
        assert np.all(gs.phi < 0)

    def test_pohozaev(self, gs):
        assert abs(gs.pohozaev_defect()) < 1e-6

    def test_lambda_q_inner_product(self, gs):
        # (Lambda Q, Q) = mass_sq / 2 by integration by parts
        rel = gs.inner_lambda_q() / (0.5 * gs.mass_sq) - 1.0
        assert abs(rel) < 1e-6

    def test_mass_cross_solver(self, gs, gs_flow):
        rel = abs(gs.mass_sq - gs_flow.mass_sq) / gs.mass_sq
        assert rel < 1e-6

    def test_far_field_monopole(self, gs):
        r = gs.grid.r[-1]
        assert abs(r * gs.phi[-1] / (-gs.mass_sq / (4 * np.pi)) - 1) < 1e-4

    def test_tail_slope_stabilizes(self, gs):
        # log q asymptotically linear: local slope drift shrinks with r
        r = gs.grid.r
        logq = np.log(gs.q)
        win1 = (r > 8) & (r < 11)
        win2 = (r > 14) & (r < 17)
        s1 = np.polyfit(r[win1], logq[win1], 1)[0]
        s2 = np.polyfit(r[win2], logq[win2], 1)[0]
        assert s1 < -0.8 and s2 < -0.8
        assert abs(s2 - s1) < 0.05

    def test_residual_reported(self, gs):
        assert gs.residual < 1e-9

    def test_equation_residual_refines(self):
        # FD residual of the equation decreases at the discretization order
        defects = []
        for n in (1024, 2048):
            grid = RadialGrid.make("uniform", n, 20.0)
            s = solve_ground_state(grid, 1e-6)
            r, q = grid.r[1:-1], s.q
            lap = (q[2:] - 2 * q[1:-1] + q[:-2]) / np.diff(grid.r)[0] ** 2 \
                + (q[2:] - q[:-2]) / (np.diff(grid.r)[0] * r)
            res = lap - (1.0 + s.phi[1:-1]) * q[1:-1]
            defects.append(np.max(np.abs(res[r < 15])))
        assert defects[1] < 0.3 * defects[0]


class TestSolverValidation:
    def test_bad_tol(self, gs):
        with pytest.raises(ValueError):
            solve_ground_state(gs.grid, tol=-1.0)

    def test_short_grid_rejected(self):
        grid = RadialGrid.make("log", 512, 20.0)
        r = grid.r * (10.0 / 20.0)
        with pytest.raises(ValueError):
            solve_ground_state(RadialGrid(r=r, kind="log"), 1e-8)

    def test_grid_invariants(self):
        with pytest.raises(ValueError):
            RadialGrid(r=np.linspace(1, 0, 300))
        with pytest.raises(ValueError):
            RadialGrid(r=np.linspace(0.1, 10, 100))


class TestNewtonianPotential:
    def test_zero_density(self, gs):
        out = newtonian_potential_radial(np.zeros_like(gs.q), 0, gs.grid)
        assert np.all(out == 0)

    def test_q_squared_matches_stored(self, gs):
        phi = newtonian_potential_radial(gs.q ** 2, 0, gs.grid)
        assert np.max(np.abs(phi - gs.phi)) < 1e-8

    def test_gaussian_against_3d_quadrature(self, gs):
        # independent oracle: direct 3D convolution with value+gradient
        # singularity subtraction; int exp(-d^2/w^2)/d dy = 2 pi w^2 and the
        # gradient term integrates to zero by parity
        from scipy.interpolate import CubicSpline

        grid = gs.grid
        rho = np.exp(-grid.r ** 2)
        phi = newtonian_potential_radial(rho, 0, grid)
        phi_spl = CubicSpline(grid.r, phi)

        h = 0.15
        half = 7.0
        ax = np.arange(-half, half + h / 2, h)
        X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
        rho3d = np.exp(-(X ** 2 + Y ** 2 + Z ** 2))
        w = 5 * h
        for r0 in (0.5, 1.5, 3.0):
            d2 = (X - r0) ** 2 + Y ** 2 + Z ** 2
            d = np.sqrt(d2)
            rho0 = np.exp(-r0 ** 2)
            grad0 = -2 * r0 * rho0
            model = (rho0 + grad0 * (X - r0)) * np.exp(-d2 / w ** 2)
            with np.errstate(divide="ignore", invalid="ignore"):
                sm = np.where(d > 0, (rho3d - model) / d, 0.0)
            val = -(np.sum(sm) * h ** 3 + rho0 * 2 * np.pi * w ** 2) / (4 * np.pi)
            assert abs(phi_spl(r0) - val) < 1e-5

    def test_higher_degree_solves_radial_ode(self, gs):
        # phi_l'' + 2 phi_l'/r - l(l+1) phi_l / r^2 = rho
        grid = RadialGrid.make("uniform", 4096, 20.0)
        r = grid.r
        for ell in (1, 2):
            rho = r ** ell * np.exp(-r ** 2)
            phi = newtonian_potential_radial(rho, ell, grid)
            h = r[1] - r[0]
            lap = (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / h ** 2 \
                + (phi[2:] - phi[:-2]) / (h * r[1:-1]) \
                - ell * (ell + 1) * phi[1:-1] / r[1:-1] ** 2
            err = np.max(np.abs(lap - rho[1:-1])[(r[1:-1] > 0.5) & (r[1:-1] < 10)])
            assert err < 5e-5

    def test_unsupported_degree(self, gs):
        with pytest.raises(UnsupportedOrderError):
            newtonian_potential_radial(gs.q ** 2, 5, gs.grid)

    def test_non_decaying_density_rejected(self, gs):
        with pytest.raises(ValueError):
            newtonian_potential_radial(np.ones_like(gs.q), 0, gs.grid)


class TestEvaluate3D:
    def test_origin_and_last_node(self, gs):
        out = evaluate_Q_3d(gs, np.array([[0.0, 0.0, 0.0]]))
        assert abs(out[0] - gs.q[0]) < 1e-5 * gs.q[0]
        out = evaluate_Q_3d(gs, np.array([[gs.grid.r_max, 0.0, 0.0]]))
        assert abs(out[0] - gs.q[-1]) < 1e-12

    def test_between_nodes_vs_refined_grid(self, gs, rng):
        fine = solve_ground_state(RadialGrid.make("log", 4096, 20.0), 1e-10)
        radii = rng.uniform(0.05, 15.0, size=40)
        pts = np.zeros((40, 3))
        pts[:, 0] = radii
        coarse_vals = evaluate_Q_3d(gs, pts)
        fine_vals = evaluate_Q_3d(fine, pts)
        assert np.max(np.abs(coarse_vals - fine_vals)) < 1e-8

    def test_tail_extrapolation_defined(self, gs):
        out = evaluate_Q_3d(gs, np.array([[30.0, 0.0, 0.0]]))
        assert out[0] > 0 and out[0] < gs.q[-1]


class TestSerialization:
    def test_gsq1_roundtrip(self, gs, tmp_path):
        p = tmp_path / "state.gsq1"
        gs.save_binary(p)
        back = GroundState.load_binary(p)
        assert back.mass_sq == gs.mass_sq
        assert np.array_equal(back.q, gs.q)
        assert np.array_equal(back.phi, gs.phi)
        assert np.array_equal(back.grid.r, gs.grid.r)

    def test_magic_guard(self, tmp_path):
        p = tmp_path / "junk.bin"
        p.write_bytes(b"NOPE" + b"\0" * 64)
        with pytest.raises(ValueError):
            GroundState.load_binary(p)

    def test_csv(self, gs, tmp_path):
        p = tmp_path / "state.csv"
        gs.save_csv(p)
        header = p.read_text().splitlines()[0]
        assert header == "r,q,phi"
        data = np.loadtxt(p, delimiter=",", skiprows=1)
        assert data.shape == (gs.grid.n_points, 3)
