import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import fd_christoffel_g

from ssmscatter import gallery
from ssmscatter.errors import OutOfDomain
from ssmscatter.flow import (
    SpacetimeState,
    geodesic_rhs,
    geodesic_rhs_christoffel,
    hamiltonian_H,
    integrate_geodesic,
    integrate_geodesic_batch,
    metric_quadratic,
    momentum_J,
)
from ssmscatter.integrate import STATUS_EVENT
from ssmscatter.manifold import christoffel_g

SPECS = gallery.all_specs()
IDS = [s.name for s in SPECS]

# frozen oracle: bumpy-lambda state with J = -2, H = -1/2, advanced to s = 0.5 by the
# fixed-step RK4 oracle with FD Christoffels (2000 steps; 1000 steps agree to 7e-14)
BUMPY_Y0 = np.array([0.0, 0.3, -0.2, 1.9744129051805044, 1.0089551182396617, 1.3452734909862158])
BUMPY_Y_HALF = np.array([0.8955471825626999, 0.7764238269395684, 0.4237019106215012,
                         1.5899865101404642, 0.8603671862256507, 1.1547039602065483])


def _state(spec, x, rho, m, direction):
    lam = float(spec.lam(x))
    d = np.asarray(direction, dtype=float)
    d = d / np.sqrt(d @ spec.h(x) @ d)
    v = np.sqrt(rho * rho / lam - m * m) * d
    return SpacetimeState(0.0, np.asarray(x, dtype=float), -rho / lam + float(spec.omega(x) @ v), v)


def test_state_round_trip():
    st_ = SpacetimeState(1.0, np.array([0.1, 0.2]), 2.0, np.array([0.3, 0.4]))
    back = SpacetimeState.from_array(st_.as_array())
    assert np.array_equal(back.as_array(), st_.as_array())
    assert np.array_equal(st_.velocity, [2.0, 0.3, 0.4])


def test_flat_invariants_trivial():
    spec = gallery.flat_disk()
    y = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 0.0])  # lightlike
    assert hamiltonian_H(spec, y) == 0.0
    assert momentum_J(spec, y) == -1.0


@pytest.mark.parametrize("spec", SPECS, ids=IDS)
def test_rhs_matches_christoffel_form(spec):
    rng = np.random.default_rng(1)
    y = np.concatenate([rng.normal(size=(20, 1)), rng.uniform(-0.6, 0.6, (20, 2)), rng.normal(size=(20, 3))], 1)
    a = geodesic_rhs(spec, y)
    b = geodesic_rhs_christoffel(spec, y, christoffel_g)
    c = geodesic_rhs_christoffel(spec, y, lambda s, x: fd_christoffel_g(s, x))
    assert np.max(np.abs(a - b)) < 1e-12
    assert np.max(np.abs(a - c)) < 1e-7


def test_frozen_rk4_oracle_endpoint():
    spec = gallery.bumpy_lambda()
    tr = integrate_geodesic(spec, BUMPY_Y0, 0.5, rtol=1e-12, atol=1e-12, stop_at_boundary=False)
    assert np.max(np.abs(tr(0.5) - BUMPY_Y_HALF)) < 1e-9


def test_flat_geodesics_are_straight_lines():
    spec = gallery.flat_disk()
    st_ = _state(spec, [0.1, -0.3], -2.0, 1.0, [1.0, 2.0])
    tr = integrate_geodesic(spec, st_, 0.4)
    s = np.linspace(0, 0.4, 5)[:, None]
    assert np.allclose(tr(s[:, 0])[:, :3], st_.as_array()[:3] + s * st_.velocity, atol=1e-12)


@pytest.mark.parametrize("spec", SPECS, ids=IDS)
@settings(max_examples=10, deadline=None)
@given(x=st.tuples(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6)),
       ang=st.floats(0, 2 * np.pi), sign=st.sampled_from([0, 1]))
def test_conservation_of_J_and_H(spec, x, ang, sign):
    rho = gallery.working_momenta(spec)[sign]
    st_ = _state(spec, np.array(x), rho, 1.0, [np.cos(ang), np.sin(ang)])
    tr = integrate_geodesic(spec, st_, 10.0)
    assert abs(tr.J0 - rho) < 1e-12
    assert abs(tr.H0 + 0.5) < 1e-12
    assert tr.drift_J <= 1e-8 * (1 + abs(tr.J0))
    assert tr.drift_H <= 1e-8 * (1 + abs(tr.H0))


def test_stops_on_boundary():
    spec = gallery.bumpy_lambda()
    tr = integrate_geodesic(spec, _state(spec, [0.0, 0.0], -2.0, 1.0, [1, 0]), 50.0)
    assert tr.status == STATUS_EVENT and tr.exited and not tr.grazing
    assert abs(spec.domain.b(tr.x(tr.s_end))) < 1e-10


def test_start_outside_raises():
    spec = gallery.flat_disk()
    with pytest.raises(OutOfDomain):
        integrate_geodesic(spec, np.array([0.0, 2.0, 0.0, 1.0, 0.0, 0.0]), 1.0)


def test_batch_matches_single():
    spec = gallery.warped_disk()
    states = [_state(spec, [0.1 * i, -0.1], 2.5, 1.0, [1, i]) for i in range(3)]
    batch = integrate_geodesic_batch(spec, states, 1.0)
    for s_, tr in zip(states, batch):
        one = integrate_geodesic(spec, s_, 1.0)
        assert abs(one.s_end - tr.s_end) < 1e-12
        assert np.allclose(one(one.s_end), tr(tr.s_end), atol=1e-12)


def test_metric_quadratic_equals_2H():
    spec = gallery.acoustic_analogue()
    st_ = _state(spec, [0.2, 0.4], -3.0, 1.5, [0.3, -1])
    assert abs(metric_quadratic(spec, st_.x, st_.velocity) - 2 * hamiltonian_H(spec, st_)) < 1e-12
    assert abs(metric_quadratic(spec, st_.x, st_.velocity) + 1.5**2) < 1e-12
