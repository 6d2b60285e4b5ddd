import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from logvlasov.gaussian_dynamics import (
    GammaState,
    GaussianParams,
    asymptotic_gamma,
    energy_residual,
    exact_blowup_time,
    gamma_from_time,
    gaussian_euler_fields,
    gaussian_euler_time_derivatives,
    implicit_time,
    implicit_time_dawson,
    integrate_gamma,
    residual_isen1,
)

from oracles.gamma_rk4 import rk4_gamma

# tests/oracles/gamma_rk4.py at dt = 1e-5 (dt = 2e-5 agrees to 2e-12)
RK4_GAMMA_10 = 29.706705359585584
RK4_GAMMA_DOT_10 = 3.683136049623568


def test_params_validation():
    with pytest.raises(ValueError, match="sigma0"):
        GaussianParams(sigma0=-1.0)
    with pytest.raises(ValueError, match="rho_star"):
        GaussianParams(rho_star=0.0)
    with pytest.raises(ValueError, match="lam"):
        GaussianParams(lam=0.0)


def test_energy_residual_initial_state_is_zero():
    p = GaussianParams(omega0=0.7, lam=2.0)
    assert energy_residual(GammaState(0.0, 1.0, 0.7), p) == 0.0
    assert energy_residual(GammaState(0.0, 1.0, 0.7), p, eps=0.3) == 0.0
    traj = integrate_gamma(p, 0.0, 1.0, 1e-10)
    assert traj.energy_residuals()[0] == 0.0


def test_energy_residual_perturbation_identity():
    p = GaussianParams(omega0=0.4)
    s = GammaState(1.0, 1.7, 0.9)
    base = energy_residual(s, p)
    bumped = energy_residual(GammaState(1.0, 1.7, 1.9), p)
    assert bumped - base == pytest.approx(2 * 0.9 + 1, abs=1e-14)


def test_gamma_matches_fixed_step_rk4():
    traj = integrate_gamma(GaussianParams(), 0.0, 10.0, 1e-12)
    assert traj.status == "completed"
    assert traj.t[-1] == 10.0
    assert abs(traj.gamma[-1] - RK4_GAMMA_10) <= 1e-6
    assert abs(traj.gamma_dot[-1] - RK4_GAMMA_DOT_10) <= 1e-6


def test_gamma_matches_live_rk4_with_eps():
    g, gd = rk4_gamma(t_end=2.0, dt=1e-3, eps=0.3, omega0=0.5)
    traj = integrate_gamma(GaussianParams(omega0=0.5), 0.3, 2.0, 1e-12)
    assert traj.gamma[-1] == pytest.approx(g, abs=1e-9)
    assert traj.gamma_dot[-1] == pytest.approx(gd, abs=1e-9)


@pytest.mark.parametrize("omega0", [0.0, 1.0, -0.5])
def test_energy_conserved_and_lower_bound(omega0):
    p = GaussianParams(omega0=omega0, sigma0=1.3, lam=0.8)
    traj = integrate_gamma(p, 0.0, 50.0, 1e-10)
    assert np.max(np.abs(traj.energy_residuals())) <= 1e-8
    gmin = math.exp(-omega0**2 / (4 * p.lam * p.sigma0))
    assert np.all(traj.gamma >= gmin * (1 - 1e-9))
    assert np.all(np.diff(traj.t) > 0)


def test_eps_trajectory_positive_and_energy_conserved():
    p = GaussianParams(omega0=-1.0)
    traj = integrate_gamma(p, 0.2, 20.0, 1e-10)
    assert np.all(traj.gamma > 0)
    assert np.max(np.abs(traj.energy_residuals())) <= 1e-8


def test_eps_correction_is_second_order():
    # gamma^eps - gamma is driven by eps^2; fitted slope should be ~2
    p = GaussianParams()
    tgrid = np.linspace(0.0, 10.0, 101)[1:]
    ref = integrate_gamma(p, 0.0, 10.0, 1e-12, t_eval=tgrid)
    epss = [0.2, 0.1, 0.05, 0.025]
    gaps, dgaps = [], []
    for eps in epss:
        tr = integrate_gamma(p, eps, 10.0, 1e-12, t_eval=tgrid)
        a = np.array([tr.at(t).gamma - ref.at(t).gamma for t in tgrid])
        b = np.array([tr.at(t).gamma_dot - ref.at(t).gamma_dot for t in tgrid])
        gaps.append(np.max(np.abs(a)))
        dgaps.append(np.max(np.abs(b)))
    slope = np.polyfit(np.log(epss), np.log(gaps), 1)[0]
    dslope = np.polyfit(np.log(epss), np.log(dgaps), 1)[0]
    assert slope >= 1.9 and dslope >= 1.9


def test_negative_lambda_blows_up():
    p = GaussianParams(lam=-1.0)
    traj = integrate_gamma(p, 0.0, 5.0, 1e-10)
    assert traj.status == "blowup"
    assert math.isfinite(traj.t_blow)
    # floor crossing just before the closed-form singular time sqrt(pi)/2
    assert 0.0 < exact_blowup_time(p) - traj.t_blow < 1e-6
    assert np.all(traj.gamma > 0)
    assert traj.blowup_report()["status"] == "blowup"


def test_blowup_time_stable_under_tolerance():
    p = GaussianParams(lam=-2.0, sigma0=0.5, omega0=0.3)
    a = integrate_gamma(p, 0.0, 5.0, 1e-8).t_blow
    b = integrate_gamma(p, 0.0, 5.0, 1e-10).t_blow
    assert abs(a - b) < 1e-4


def test_blowup_time_against_bisection_on_rk4_oracle():
    # fixed-step RK4 marched until gamma < 1e-6, last step refined by halving
    lam, dt = -1.0, 1e-3
    g, gd, t = 1.0, 0.0, 0.0

    def step(g, gd, h):
        acc = lambda x: 2 * lam / x
        k1g, k1v = gd, acc(g)
        g2 = g + 0.5 * h * k1g
        if g2 <= 0:
            return None
        k2g, k2v = gd + 0.5 * h * k1v, acc(g2)
        g3 = g + 0.5 * h * k2g
        if g3 <= 0:
            return None
        k3g, k3v = gd + 0.5 * h * k2v, acc(g3)
        g4 = g + h * k3g
        if g4 <= 0:
            return None
        k4g, k4v = gd + h * k3v, acc(g4)
        return (g + h / 6 * (k1g + 2 * k2g + 2 * k3g + k4g),
                gd + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v))

    while dt > 1e-12:
        out = step(g, gd, dt)
        if out is not None and out[0] > 1e-6:
            g, gd, t = out[0], out[1], t + dt
        else:
            dt /= 2
    traj = integrate_gamma(GaussianParams(lam=lam), 0.0, 2.0, 1e-10)
    assert traj.t_blow == pytest.approx(t, abs=1e-6)


def test_integration_validates_arguments():
    with pytest.raises(ValueError):
        integrate_gamma(GaussianParams(), 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        integrate_gamma(GaussianParams(), -0.1, 1.0, 1e-8)


def test_hermite_interpolation_accuracy():
    p = GaussianParams(omega0=0.5)
    coarse = integrate_gamma(p, 0.1, 5.0, 1e-11)
    for t in (0.37, 1.234, 4.9):
        fine = integrate_gamma(p, 0.1, 5.0, 1e-12, t_eval=[t])
        i = int(np.searchsorted(fine.t, t))
        assert coarse.at(t).gamma == pytest.approx(fine.gamma[i], abs=1e-8)
        assert coarse.at(t).gamma_dot == pytest.approx(fine.gamma_dot[i], abs=1e-8)


class TestEulerFields:
    def test_initial_data(self):
        p = GaussianParams(rho_star=2.0, sigma0=0.7, omega0=0.3, p0=-0.4)
        rho, v = gaussian_euler_fields(GammaState(0.0, 1.0, 0.3), p)
        x = np.linspace(-3, 3, 13)
        np.testing.assert_allclose(rho(x), 2.0 * np.exp(-0.7 * x**2), rtol=1e-15)
        np.testing.assert_allclose(v(x), 0.3 * x - 0.4, rtol=1e-15, atol=1e-15)

    def test_mass_conservation(self):
        p = GaussianParams(rho_star=1.5, sigma0=2.0, omega0=0.2, p0=0.8)
        traj = integrate_gamma(p, 0.0, 6.0, 1e-10)
        for s in traj.samples[:: max(1, len(traj) // 5)]:
            rho, _ = gaussian_euler_fields(s, p)
            m, _ = integrate.quad(rho, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)
            assert m == pytest.approx(p.mass, abs=1e-8)

    def test_constant_state_zero_residual(self):
        x = np.linspace(0, 1, 32)
        rho = np.full_like(x, 1.3)
        v = np.full_like(x, 0.4)
        r1, r2 = residual_isen1(rho, v, (np.zeros_like(x), np.zeros_like(x)), x[1] - x[0])
        assert r1 <= 1e-13 and r2 <= 1e-13

    def test_small_grid_rejected(self):
        with pytest.raises(ValueError):
            residual_isen1(np.ones(5), np.ones(5), (np.zeros(5), np.zeros(5)), 0.1)

    def test_residual_second_order(self):
        p = GaussianParams(omega0=0.5, p0=0.7, sigma0=1.2, lam=0.9)
        traj = integrate_gamma(p, 0.0, 1.5, 1e-12)
        s = traj.samples[-1]
        rho_f, v_f = gaussian_euler_fields(s, p)
        res = []
        for n in (201, 401, 801):
            x = np.linspace(-8, 10, n)
            dt = gaussian_euler_time_derivatives(s, p, x)
            res.append(residual_isen1(rho_f(x), v_f(x), dt, x[1] - x[0], lam=p.lam))
        res = np.array(res)
        ratios = res[:-1] / res[1:]
        assert np.all(ratios > 3.6) and np.all(ratios < 4.4)

    def test_uncentred_velocity_is_not_a_solution(self):
        p = GaussianParams(omega0=0.5, p0=0.7)
        traj = integrate_gamma(p, 0.0, 1.0, 1e-12)
        s = traj.samples[-1]
        rho_f, _ = gaussian_euler_fields(s, p)
        x = np.linspace(-8, 10, 801)
        v_bad = s.gamma_dot / s.gamma * x + p.p0
        drho, _ = gaussian_euler_time_derivatives(s, p, x)
        rho = rho_f(x)
        # continuity residual with the uncentred field stays O(1)
        r1 = np.max(np.abs(drho + np.gradient(rho * v_bad, x[1] - x[0], edge_order=2)))
        assert r1 > 1e-2

    def test_time_derivatives_against_finite_difference(self):
        p = GaussianParams(omega0=0.5, p0=0.7)
        t0, h = 1.0, 1e-4
        tr = integrate_gamma(p, 0.0, 2.0, 1e-13, t_eval=[t0 - h, t0, t0 + h])
        x = np.linspace(-4, 5, 50)
        fields = [gaussian_euler_fields(tr.at(t), p) for t in (t0 - h, t0 + h)]
        fd_rho = (fields[1][0](x) - fields[0][0](x)) / (2 * h)
        mom = [r(x) * v(x) for r, v in fields]
        fd_mom = (mom[1] - mom[0]) / (2 * h)
        drho, dmom = gaussian_euler_time_derivatives(tr.at(t0), p, x)
        np.testing.assert_allclose(drho, fd_rho, atol=1e-7)
        np.testing.assert_allclose(dmom, fd_mom, atol=1e-7)


class TestImplicitTime:
    def test_identity_at_one(self):
        assert implicit_time(1.0, GaussianParams(omega0=0.3)) == 0.0

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            implicit_time(2.0, GaussianParams(lam=-1.0))

    def test_round_trip(self):
        p = GaussianParams(omega0=1.0)
        traj = integrate_gamma(p, 0.0, 5.0, 1e-12)
        assert abs(implicit_time(traj.gamma[-1], p) - 5.0) <= 1e-6

    def test_round_trip_zero_velocity(self):
        # endpoint singularity of the original integrand
        p = GaussianParams(omega0=0.0, sigma0=0.6, lam=1.7)
        traj = integrate_gamma(p, 0.0, 3.0, 1e-12)
        assert abs(implicit_time(traj.gamma[-1], p) - 3.0) <= 1e-6

    def test_contracting_then_expanding_branch(self):
        p = GaussianParams(omega0=-1.0)
        traj = integrate_gamma(p, 0.0, 4.0, 1e-12)
        assert traj.gamma[-1] > 1
        assert abs(implicit_time(traj.gamma[-1], p) - 4.0) <= 1e-6

    @pytest.mark.parametrize("g", [1.0001, 1.5, 30.0, 1e6, 1e12])
    def test_quadrature_matches_dawson_closed_form(self, g):
        p = GaussianParams(omega0=0.8, sigma0=0.5, lam=1.3)
        assert implicit_time(g, p) == pytest.approx(implicit_time_dawson(g, p), rel=1e-11)

    def test_inverse(self):
        p = GaussianParams(omega0=0.2)
        g, gd = gamma_from_time(7.0, p)
        traj = integrate_gamma(p, 0.0, 7.0, 1e-12)
        assert g == pytest.approx(traj.gamma[-1], rel=1e-9)
        assert gd == pytest.approx(traj.gamma_dot[-1], rel=1e-9)


class TestAsymptotics:
    def test_value_at_e(self):
        g, gd = asymptotic_gamma(math.e, GaussianParams())
        assert g == pytest.approx(2 * math.e, rel=1e-15)
        assert gd == pytest.approx(2.0, rel=1e-15)

    def test_domain(self):
        with pytest.raises(ValueError):
            asymptotic_gamma(1.0, GaussianParams())

    def test_ratios_approach_one(self):
        p = GaussianParams()
        ts = np.geomspace(1e3, 1e8, 21)
        ratios = []
        for t in ts:
            g, gd = gamma_from_time(t, p)
            ga, gda = asymptotic_gamma(t, p)
            ratios.append((g / ga, gd / gda))
        ratios = np.array(ratios)
        assert np.all(ratios > 1)
        # gamma_dot ratio decreases over the whole range
        assert np.all(np.diff(ratios[:, 1]) < 0)
        # gamma ratio peaks near t ~ 3e3, then decreases
        late = ts >= 1e4
        assert np.all(np.diff(ratios[late, 0]) < 0)
        i4, i6 = np.argmin(abs(ts - 1e4)), np.argmin(abs(ts - 1e6))
        assert abs(ratios[i6, 1] - 1) < abs(ratios[i4, 1] - 1)


@settings(max_examples=30, deadline=None)
@given(
    omega0=st.floats(-1.5, 1.5),
    sigma0=st.floats(0.2, 3.0),
    lam=st.floats(0.2, 3.0),
)
def test_lower_bound_property(omega0, sigma0, lam):
    p = GaussianParams(omega0=omega0, sigma0=sigma0, lam=lam)
    traj = integrate_gamma(p, 0.0, 10.0, 1e-9)
    gmin = math.exp(-omega0**2 / (4 * lam * sigma0))
    assert np.all(traj.gamma >= gmin * (1 - 1e-6))
    assert np.max(np.abs(traj.energy_residuals())) <= 1e-6
