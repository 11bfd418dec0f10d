import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import magnetic_circle
from specs import radial_shift, steep_lapse, uniform_shift

from ssmscatter import gallery
from ssmscatter.audit import (
    admissible_band,
    direct_hyperbolic_angle,
    hyperbolic_angle,
    lorentzian_convexity_bridge,
    mp_convexity,
    mp_exponential,
    second_fundamental_form,
    shoot_connect,
    signs_agree,
    simplicity_sweep,
)
from ssmscatter.errors import AngleUndefined, LeftDomain, NotSimple
from ssmscatter.experiments import random_states
from ssmscatter.reduction import reduce


def test_admissible_band_bumpy():
    rep = admissible_band(gallery.bumpy_lambda(), 1.0, -2.0)
    assert abs(rep.A - 1.0) < 1e-12 and abs(rep.B - 1.5) < 1e-3
    assert rep.band_ok and rep.margin > 0
    assert not admissible_band(gallery.bumpy_lambda(), 1.0, 1.1).band_ok
    with pytest.raises(ValueError):
        admissible_band(gallery.flat_disk(), 0.0)


def test_hyperbolic_angle_flat_and_undefined():
    phi, case = hyperbolic_angle(gallery.flat_disk(), np.zeros(2), -2.0, 1.0)
    assert abs(phi - np.arccosh(2.0)) < 1e-15 and case == "same"
    assert hyperbolic_angle(gallery.flat_disk(), np.zeros(2), 2.0, 1.0)[1] == "opposite"
    with pytest.raises(AngleUndefined):
        hyperbolic_angle(gallery.flat_disk(), np.zeros(2), 0.5, 1.0)


@pytest.mark.parametrize("spec", [gallery.warped_disk(), gallery.acoustic_analogue()], ids=lambda s: s.name)
def test_hyperbolic_angle_matches_direct(spec):
    rho, m = gallery.working_momenta(spec, 1.3)[0], 1.3
    for s in random_states(spec, rho, m, 20, np.random.default_rng(5)):
        phi, _ = hyperbolic_angle(spec, s.x, rho, m)
        assert abs(phi - direct_hyperbolic_angle(spec, s.x, s.velocity)) < 1e-10


@settings(max_examples=20, deadline=None)
@given(th=st.floats(0, 2 * np.pi))
def test_unit_circle_second_form_is_one(th):
    x = np.array([np.cos(th), np.sin(th)])
    t = np.array([-np.sin(th), np.cos(th)])
    assert abs(second_fundamental_form(gallery.flat_disk(), x, t) - 1.0) < 1e-13


@pytest.mark.parametrize("rho", [-2.0, 3.0])
def test_flat_mp_convexity_margin(rho):
    # no force, constant potential: margin = |xi|^2 = 2 (k - U) = rho^2 - m^2
    rep = mp_convexity(reduce(gallery.flat_disk(), rho, 1.0), n_points=16)
    assert np.allclose(rep.margins, rho * rho - 1.0, atol=1e-12)
    assert rep.convex


def test_signs_agree_zero_band():
    assert signs_agree([1e-15, 2.0, -1.0], [-1e-15, 3.0, -0.5])
    assert not signs_agree([1e-3], [-1e-3])


@pytest.mark.parametrize("spec", [radial_shift(), steep_lapse(10.0)], ids=lambda s: s.name)
def test_bridge_exact_when_shift_normal(spec):
    for rho in gallery.working_momenta(spec):
        rep = lorentzian_convexity_bridge(spec, rho, 1.0, n_points=40)
        assert rep.status == "applicable"
        assert rep.max_deviation <= 1e-8 and rep.signs_agree


def test_steep_lapse_is_mp_concave():
    spec = steep_lapse(10.0)
    rep = mp_convexity(reduce(spec, gallery.working_momenta(spec)[0], 1.0), n_points=16)
    assert not rep.convex


@pytest.mark.parametrize("spec", [gallery.magnetic_disk(), uniform_shift()], ids=lambda s: s.name)
def test_bridge_not_applicable_with_tangential_shift(spec):
    rep = lorentzian_convexity_bridge(spec, -2.0, 1.0, n_points=40)
    assert rep.status == "not-applicable"


def test_mp_exponential_flat_and_left_domain():
    sys_ = reduce(gallery.flat_disk(), -2.0, 1.0)
    end = mp_exponential(sys_, np.zeros(2), [1.0, 0.0], 0.3)
    assert np.allclose(end, [0.3 * np.sqrt(3), 0.0], atol=1e-12)
    with pytest.raises(LeftDomain):
        mp_exponential(sys_, np.zeros(2), [1.0, 0.0], 1.0)


def test_flat_shooting_unique_straight_line():
    sys_ = reduce(gallery.flat_disk(), -2.0, 1.0)
    x, y = np.array([-0.3, 0.1]), np.array([0.4, -0.2])
    res = shoot_connect(sys_, x, y, n_starts=8)
    assert res.unique and res.status == "simple"
    d = y - x
    assert abs(res.best.time - np.linalg.norm(d) / np.sqrt(3)) < 1e-9
    assert np.allclose(res.best.direction, d / np.linalg.norm(d), atol=1e-9)


@pytest.mark.slow
def test_magnetic_shooting_solutions_are_circle_arcs():
    c, rho = 3.0, -2.0
    sys_ = reduce(gallery.magnetic_disk(c), rho, 1.0)
    x, y = np.array([-0.2, 0.0]), np.array([0.2, 0.0])
    res = shoot_connect(sys_, x, y, n_starts=8)
    assert len(res.solutions) >= 2
    for sol in res.solutions:
        end = magnetic_circle(x, np.sqrt(3) * sol.direction, -rho * c, np.array([sol.time]))[0]
        assert np.linalg.norm(end - y) < 1e-7
    with pytest.raises(NotSimple):
        shoot_connect(sys_, x, y, n_starts=8, strict=True)


def test_simplicity_sweep_small():
    rows = simplicity_sweep(lambda c: reduce(gallery.magnetic_disk(c), -2.0, 1.0), [0.25, 3.0],
                            [(np.array([-0.2, 0.0]), np.array([0.2, 0.0]))], n_starts=8)
    assert rows[0].simple and not rows[1].simple
    assert rows[0].convex_margin > 0
