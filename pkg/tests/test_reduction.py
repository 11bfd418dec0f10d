import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import magnetic_circle

from ssmscatter import gallery
from ssmscatter.errors import EnergyMismatch, MomentumMismatch
from ssmscatter.flow import SpacetimeState, geodesic_rhs, integrate_geodesic
from ssmscatter.reduction import (
    integrate_mp,
    lift,
    mass_energy_check,
    mp_residual,
    mp_rhs,
    project,
    reduce,
    rescale_momentum,
)


def _state(spec, x, rho, m, direction):
    lam = float(spec.lam(x))
    d = np.asarray(direction, dtype=float)
    d = d / np.sqrt(d @ spec.h(x) @ d)
    v = np.sqrt(rho * rho / lam - m * m) * d
    return SpacetimeState(0.0, np.asarray(x, dtype=float), -rho / lam + float(spec.omega(x) @ v), v)


def test_flat_reduction_has_no_force_and_constant_potential():
    sys_ = reduce(gallery.flat_disk(), -2.0)
    x = np.random.default_rng(0).uniform(-0.5, 0.5, (10, 2))
    assert np.all(sys_.lorentz_force(x) == 0)
    assert np.allclose(sys_.U(x), -2.0)


def test_swirl_magnetic_form():
    spec = gallery.bumpy_lambda(eps=0.0, swirl=0.1)
    sys_ = reduce(spec, -3.0)
    x = np.array([0.2, -0.4])
    omega = sys_.magnetic_form(x)
    assert np.allclose(omega, -3.0 * 0.2 * np.array([[0, 1], [-1, 0]]))
    assert np.allclose(sys_.lorentz_force(x), -omega)


@pytest.mark.parametrize("spec", gallery.all_specs(), ids=lambda s: s.name)
def test_lorentz_force_is_h_antisymmetric(spec):
    sys_ = reduce(spec, 2.5)
    x = np.random.default_rng(1).uniform(-0.6, 0.6, (500, 2))
    hy = np.einsum("pij,pjk->pik", sys_.h(x), sys_.lorentz_force(x))
    assert np.max(np.abs(hy + np.swapaxes(hy, -1, -2))) <= 1e-10


@pytest.mark.parametrize("rho", [-2.0, 2.5])
def test_mp_rhs_is_spatial_part_of_geodesic_rhs(rho):
    spec = gallery.warped_disk()
    sys_ = reduce(spec, rho)
    rng = np.random.default_rng(2)
    for _ in range(10):
        x = rng.uniform(-0.6, 0.6, 2)
        v = rng.normal(size=2)
        v0 = -rho / float(spec.lam(x)) + float(spec.omega(x) @ v)
        full = geodesic_rhs(spec, np.concatenate([[0.0], x, [v0], v]))
        red = mp_rhs(sys_, np.concatenate([x, v]))
        assert np.max(np.abs(full[[1, 2, 4, 5]] - red)) <= 1e-10


def test_magnetic_circle_oracle():
    # x'' = -rho c J x' with J = [[0, 1], [-1, 0]]: circles of radius |v| / |rho c|
    sys_ = reduce(gallery.magnetic_disk(1.0), -2.0, 1.0)
    tr = integrate_mp(sys_, np.array([0.0, 0.0, 0.5, 0.0]), 1.0, rtol=1e-12, atol=1e-12, stop_at_boundary=False)
    s = np.linspace(0, 1, 11)
    assert np.max(np.abs(tr.x(s) - magnetic_circle([0, 0], [0.5, 0], 2.0, s))) < 1e-9


def test_magnetic_period():
    c, rho = 1.0, -2.0
    sys_ = reduce(gallery.magnetic_disk(c), rho)
    period = 2 * np.pi / abs(rho * c)
    y0 = np.array([0.1, 0.0, 0.3, 0.2])
    tr = integrate_mp(sys_, y0, period, rtol=1e-12, atol=1e-12, stop_at_boundary=False)
    assert np.max(np.abs(tr(period) - y0)) < 1e-8


def test_project_matches_integrate_mp():
    spec = gallery.bumpy_lambda()
    rho = -2.5
    st_ = _state(spec, [0.1, 0.2], rho, 1.0, [1.0, -0.5])
    tr = integrate_geodesic(spec, st_, 5.0, rtol=1e-11, atol=1e-11)
    proj = project(tr, rho)
    mp = integrate_mp(reduce(spec, rho), np.concatenate([st_.x, st_.vx]), tr.s_end, rtol=1e-11, atol=1e-11,
                      stop_at_boundary=False)
    s = np.linspace(0, tr.s_end, 50)
    assert np.max(np.abs(proj(s) - mp(s))) <= 1e-6
    assert mp_residual(reduce(spec, rho), proj, s) <= 1e-6


def test_project_rejects_wrong_momentum():
    spec = gallery.flat_disk()
    tr = integrate_geodesic(spec, _state(spec, [0, 0], -2.0, 1.0, [1, 0]), 0.2)
    with pytest.raises(MomentumMismatch):
        project(tr, -3.0)


def test_flat_lift_time_is_linear():
    sys_ = reduce(gallery.flat_disk(), -2.0)
    mp = integrate_mp(sys_, np.array([0.0, 0.0, np.sqrt(3), 0.0]), 0.4)
    up = lift(sys_, mp, t0=1.0)
    s = np.linspace(0, 0.4, 5)
    assert np.allclose(up.t(s), 1.0 + 2 * s, atol=1e-13)


def test_lift_round_trip_and_mass_recovery():
    spec = gallery.acoustic_analogue()
    rho, m = 2.8, 1.3
    st_ = _state(spec, [-0.2, 0.1], rho, m, [0.2, 1])
    tr = integrate_geodesic(spec, st_, 3.0, rtol=1e-11, atol=1e-11)
    sys_ = reduce(spec, rho, m)
    up = lift(sys_, project(tr, rho), t0=0.0)
    s = np.linspace(0, tr.s_end, 40)
    assert np.max(np.abs(up(s) - tr(s))) <= 1e-6
    assert abs(up.H0 + 0.5 * m * m) < 1e-10
    assert up.drift_H < 1e-8


def test_mass_energy_check_examples():
    sys_ = reduce(gallery.flat_disk(), -2.0)
    ok, res = mass_energy_check(sys_, np.array([0.0, 0.0, np.sqrt(3), 0.0]), 1.0)
    assert ok and res < 1e-15
    # doubling gives E = 6 - 2 = 4, hence |E + 1/2| = 4.5
    ok, res = mass_energy_check(sys_, np.array([0.0, 0.0, 2 * np.sqrt(3), 0.0]), 1.0)
    assert not ok and abs(res - 4.5) < 1e-12


@settings(max_examples=30, deadline=None)
@given(lam=st.floats(0.5, 2.0), m=st.floats(0.2, 2.0))
def test_zero_speed_saturates_band(lam, m):
    # |v_x| = 0 is admissible exactly when lam = rho^2 / m^2
    rho = -m * np.sqrt(lam)
    U = rho * rho / (-2 * lam)
    assert abs(U + 0.5 * m * m) < 1e-12


def test_rescale_identity_and_curved_agreement():
    spec = gallery.warped_disk()
    rho, m = -2.2, 1.0
    unit = reduce(spec, 1.0, m / abs(rho))
    x0 = np.array([0.1, -0.2])
    speed1 = float(unit.speed_at_energy(x0))
    T1 = 0.8 * abs(rho)
    e1 = np.array([1.0, 0.0]) / np.sqrt(unit.h(x0)[0, 0])
    sigma = integrate_mp(unit, np.concatenate([x0, speed1 * e1]), T1, rtol=1e-12, atol=1e-12,
                         stop_at_boundary=False)
    same = rescale_momentum(sigma, 1.0)
    assert np.allclose(same(np.linspace(0, T1, 5)), sigma(np.linspace(0, T1, 5)))
    zeta = rescale_momentum(sigma, rho, m)
    start = zeta(0.0)
    direct = integrate_mp(reduce(spec, rho, m), start, zeta.s_end, rtol=1e-12, atol=1e-12,
                          stop_at_boundary=False)
    s = np.linspace(0, zeta.s_end, 30)
    assert np.max(np.abs(zeta(s) - direct(s))) <= 1e-6
    with pytest.raises(EnergyMismatch):
        rescale_momentum(sigma, rho, 2 * m)


def test_flat_rescale_scales_speed():
    unit = reduce(gallery.flat_disk(), 1.0)
    sigma = integrate_mp(unit, np.array([0.0, 0.0, 0.3, 0.1]), 1.0)
    zeta = rescale_momentum(sigma, -2.0)
    assert np.allclose(np.linalg.norm(zeta(0.1)[2:]), 2 * np.linalg.norm([0.3, 0.1]))
