import numpy as np
import pytest

from gravhartree.errors import (CollisionError, InvalidConfigurationError,
                                RangeError)
from gravhartree.nbody import (BodyConfig, fit_asymptotic_rates, integrate,
                               make_asymptotic_initial_data, rhs)

M0 = 44.0492721690  # ground-state squared norm (session value, see conftest)


def two_body_circular(d=10.0):
    lam = np.array([1.0, 1.0])
    mu = M0 / (4 * np.pi * lam)
    om = np.sqrt(2 * (mu[0] + mu[1]) / d ** 3)
    alpha0 = np.array([[d / 2, 0, 0], [-d / 2, 0, 0]])
    v = om * d / 2
    beta0 = np.array([[0, v / 2, 0], [0, -v / 2, 0]])
    return BodyConfig(lambdas=lam, alpha0=alpha0, beta0=beta0, mass_sq=M0), om


class TestRhs:
    def test_antisymmetry_two_body(self):
        cfg, _ = two_body_circular()
        state = np.concatenate([cfg.alpha0.ravel(), cfg.beta0.ravel()])
        d = rhs(state, cfg)
        dbeta = d[6:].reshape(2, 3)
        assert np.allclose(dbeta[0], -dbeta[1])

    def test_single_body_free(self):
        cfg = BodyConfig(lambdas=np.array([2.0]),
                         alpha0=np.array([[1.0, 2.0, 3.0]]),
                         beta0=np.array([[0.5, 0.0, 0.0]]), mass_sq=M0)
        d = rhs(np.concatenate([cfg.alpha0.ravel(), cfg.beta0.ravel()]), cfg)
        assert np.allclose(d[:3], 2 * cfg.beta0[0])
        assert np.allclose(d[3:], 0)

    def test_equilateral_points_to_centroid(self):
        # direct formula oracle: for equal masses, the force on each vertex
        # of an equilateral triangle is mu * sum of two unit edges / d^2
        lam = np.ones(3)
        mu = M0 / (4 * np.pi)
        d = 7.0
        ang = np.array([0, 2 * np.pi / 3, 4 * np.pi / 3])
        alpha0 = d / np.sqrt(3) * np.column_stack([np.cos(ang), np.sin(ang), 0 * ang])
        cfg = BodyConfig(lambdas=lam, alpha0=alpha0,
                         beta0=np.zeros((3, 3)), mass_sq=M0)
        out = rhs(np.concatenate([alpha0.ravel(), np.zeros(9)]), cfg)
        dbeta = out[9:].reshape(3, 3)
        expected_mag = 2 * mu / d ** 2 * np.cos(np.pi / 6)
        for j in range(3):
            to_centroid = -alpha0[j] / np.linalg.norm(alpha0[j])
            assert np.allclose(dbeta[j], expected_mag * to_centroid, rtol=1e-12)

    def test_collision_raises(self):
        cfg, _ = two_body_circular()
        state = np.concatenate([np.zeros(6), cfg.beta0.ravel()])
        with pytest.raises(InvalidConfigurationError):
            BodyConfig(lambdas=cfg.lambdas, alpha0=np.zeros((2, 3)),
                       beta0=cfg.beta0, mass_sq=M0)
        with pytest.raises(CollisionError):
            rhs(state, cfg)


class TestIntegrate:
    def test_circular_orbit_period(self):
        # Kepler relation derived from alpha-dot = 2 beta:
        # relative coordinate obeys r'' = -2(mu1+mu2) r/|r|^3
        cfg, om = two_body_circular()
        T = 2 * np.pi / om
        path = integrate(cfg, 0.0, 2 * T, tol=1e-12)
        a, _ = path.at([T, 2 * T])
        assert np.max(np.abs(a - cfg.alpha0[None])) < 1e-6 * 10.0

    def test_energy_conservation_1000_units(self):
        cfg, om = two_body_circular()
        path = integrate(cfg, 0.0, 1000.0, tol=1e-12)
        E = path.energy()
        assert np.max(np.abs(E - E[0])) / abs(E[0]) < 1e-9

    def test_weighted_momentum_conserved(self):
        lam = np.array([1.0, 2.0, 0.7])
        alpha0 = np.array([[4, 0, 0], [-3, 2, 0], [0, -4, 1.0]])
        beta0 = np.array([[0.5, 0.2, 0], [-0.1, -0.4, 0.1], [0.0, 0.3, -0.2]])
        cfg = BodyConfig(lambdas=lam, alpha0=alpha0, beta0=beta0, mass_sq=M0)
        path = integrate(cfg, 0.0, 5.0, tol=1e-12)
        P = path.weighted_momentum()
        assert np.max(np.abs(P - P[0])) < 1e-10

    def test_time_reversal(self):
        cfg, om = two_body_circular()
        path = integrate(cfg, 0.0, 37.0, tol=1e-13)
        a1, b1 = path.at(37.0)
        back = BodyConfig(lambdas=cfg.lambdas, alpha0=a1[0], beta0=-b1[0],
                          mass_sq=M0)
        path2 = integrate(back, 0.0, 37.0, tol=1e-13)
        a2, b2 = path2.at(37.0)
        assert np.max(np.abs(a2[0] - cfg.alpha0)) < 1e-8
        assert np.max(np.abs(b2[0] + cfg.beta0)) < 1e-8

    def test_parabolic_escape_exponent(self):
        lam = np.array([1.0, 1.0])
        b = np.array([[0.5, 0, 0], [-0.5, 0, 0]])
        cfg = make_asymptotic_initial_data("parabolic", b, lam, 1.0, M0)
        path = integrate(cfg, 1.0, 1e4, tol=1e-12)
        fit = fit_asymptotic_rates(path)
        assert abs(fit.slopes[(0, 1)] - 2.0 / 3.0) < 0.01

    def test_collision_detected_with_time(self):
        lam = np.array([1.0, 1.0])
        alpha0 = np.array([[2.0, 0, 0], [-2.0, 0, 0]])
        beta0 = np.zeros((2, 3))  # head-on free fall
        cfg = BodyConfig(lambdas=lam, alpha0=alpha0, beta0=beta0, mass_sq=M0)
        with pytest.raises(CollisionError) as err:
            integrate(cfg, 0.0, 50.0, tol=1e-10)
        assert err.value.time is not None and err.value.time > 0


class TestAsymptoticData:
    def test_hyperbolic_leading_term(self):
        a = np.array([[1, 0, 0], [-1, 0, 0.0]])
        cfg = make_asymptotic_initial_data("hyperbolic", a, np.ones(2), 5.0, M0)
        assert np.allclose(cfg.alpha0, a * 5.0)
        assert np.allclose(cfg.beta0, a / 2.0)

    def test_parabolic_prefactor_consistency(self):
        # separation of the exact self-similar solution: (9(mu1+mu2))^{1/3} t^{2/3}
        lam = np.array([1.0, 1.0])
        mu = M0 / (4 * np.pi * lam)
        b = np.array([[0.5, 0, 0], [-0.5, 0, 0]])
        cfg = make_asymptotic_initial_data("parabolic", b, lam, 1.0, M0)
        sep = np.linalg.norm(cfg.alpha0[0] - cfg.alpha0[1])
        assert abs(sep - (9 * (mu[0] + mu[1])) ** (1 / 3)) < 1e-12

    def test_mixed_cluster_map(self):
        a = np.array([[1.0, 0, 0], [1.0, 0, 0], [-1.0, 0, 0], [-1.0, 0, 0]])
        b = np.array([[0, 0.5, 0], [0, -0.5, 0], [0, 0.3, 0], [0, -0.3, 0]])
        cfg = make_asymptotic_initial_data("mixed", a, np.ones(4), 50.0, M0,
                                           b_targets=b)
        assert cfg.cluster_map == ((0, 1), (2, 3))

    def test_coincident_targets_rejected(self):
        a = np.array([[1, 0, 0], [1, 0, 0.0]])
        with pytest.raises(InvalidConfigurationError):
            make_asymptotic_initial_data("hyperbolic", a, np.ones(2), 5.0, M0)

    def test_non_central_configuration_rejected(self):
        b = np.array([[0.5, 0, 0], [-0.25, 0, 0.0]])  # not mass-centered
        with pytest.raises(InvalidConfigurationError):
            make_asymptotic_initial_data("parabolic", b, np.ones(2), 5.0, M0)


class TestRateFits:
    def test_insufficient_span(self):
        cfg, _ = two_body_circular()
        path = integrate(cfg, 1.0, 5.0, tol=1e-10)
        with pytest.raises(RangeError):
            fit_asymptotic_rates(path)

    def test_three_generators(self):
        lam2 = np.ones(2)
        a = np.array([[1.25, 0.25, 0], [-1.25, -0.25, 0]])
        cfg = make_asymptotic_initial_data("hyperbolic", a, lam2, 10.0, M0)
        fit = fit_asymptotic_rates(integrate(cfg, 10.0, 1e4, tol=1e-12))
        assert fit.kind == "hyperbolic"
        assert abs(fit.slopes[(0, 1)] - 1.0) < 0.02

        b = np.array([[0.5, 0, 0], [-0.5, 0, 0]])
        cfg = make_asymptotic_initial_data("parabolic", b, lam2, 1.0, M0)
        fit = fit_asymptotic_rates(integrate(cfg, 1.0, 1e4, tol=1e-12))
        assert fit.kind == "parabolic"
        assert abs(fit.slopes[(0, 1)] - 2 / 3) < 0.02

        a4 = np.array([[1.5, 0, 0], [1.5, 0, 0], [-1.5, 0, 0], [-1.5, 0, 0]])
        b4 = np.array([[0, 0.5, 0], [0, -0.5, 0], [0, 0.4, 0], [0, -0.4, 0]])
        cfg = make_asymptotic_initial_data("mixed", a4, np.ones(4), 300.0, M0,
                                           b_targets=b4)
        fit = fit_asymptotic_rates(integrate(cfg, 300.0, 3e5, tol=1e-11))
        assert fit.kind == "mixed"
        assert sorted(map(sorted, fit.cluster_map)) == [[0, 1], [2, 3]]

    def test_csv_and_json_exports(self, tmp_path):
        lam2 = np.ones(2)
        b = np.array([[0.5, 0, 0], [-0.5, 0, 0]])
        cfg = make_asymptotic_initial_data("parabolic", b, lam2, 1.0, M0)
        path = integrate(cfg, 1.0, 1e3, tol=1e-10)
        p = tmp_path / "path.csv"
        path.save_csv(p)
        head = p.read_text().splitlines()[0].split(",")
        assert head[0] == "t" and "alpha0x" in head and "beta1z" in head
        fit = fit_asymptotic_rates(path)
        j = tmp_path / "rates.json"
        fit.to_json(j)
        assert '"kind": "parabolic"' in j.read_text()
