import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssmscatter import gallery
from ssmscatter.errors import BoundaryTraceMismatch, GaugeBreaksSignature, InvalidGauge
from ssmscatter.fields import fd_derivative
from ssmscatter.gauge import (
    GaugeTransform,
    apply_gauge_mp,
    apply_gauge_ssm,
    boundary_trace_deviation,
    compose,
    identity_gauge,
    interior_lambda_perturbation,
    psi_pullback,
    radial_gauge,
    verify_scattering_invariance,
)
from ssmscatter.manifold import assemble_g
from ssmscatter.reduction import reduce
from ssmscatter.scattering import sample_entries

PTS = np.random.default_rng(0).uniform(-0.65, 0.65, (25, 2))
G1 = radial_gauge(0.1, phi_amp=0.3, phi_tilt=[0.2, -0.1], mu_amp=0.2)
G2 = radial_gauge(0.05, A=[[0.1, 0.2], [-0.3, 0.1]], c=[0.1, 0.0], phi_amp=-0.2, mu_amp=0.1)


def _fields(spec, x):
    return spec.h(x), spec.omega(x), spec.lam(x)


def test_identity_gauge_leaves_spec_unchanged():
    spec = gallery.warped_disk()
    out = apply_gauge_ssm(spec, identity_gauge(), -2.3, 1.0)
    for a, b in zip(_fields(spec, PTS), _fields(out, PTS)):
        assert np.allclose(a, b, atol=1e-15)


def test_radial_gauge_is_valid_and_invalid_one_is_rejected():
    G1.validate(gallery.flat_disk().domain)
    bad = GaugeTransform(2, G1.f, G1.Df, lambda x: np.ones(np.shape(x)[:-1]), G1.dphi, G1.mu)
    with pytest.raises(InvalidGauge):
        bad.validate(gallery.flat_disk().domain)


@pytest.mark.parametrize("g", [G1, G2, compose(G1, G2)], ids=["g1", "g2", "g1.g2"])
def test_gauge_second_derivatives_match_fd(g):
    assert np.max(np.abs(g.Df(PTS) - np.swapaxes(fd_derivative(g.f, PTS), -1, -2))) < 1e-8
    assert np.max(np.abs(g.d2f(PTS) - np.moveaxis(fd_derivative(g.Df, PTS), -3, -2))) < 1e-8
    assert np.max(np.abs(g.d2phi(PTS) - fd_derivative(g.dphi, PTS))) < 1e-8
    assert np.max(np.abs(g.dmu(PTS) - fd_derivative(g.mu, PTS))) < 1e-8


@pytest.mark.parametrize("spec", [gallery.warped_disk(), gallery.acoustic_analogue()], ids=lambda s: s.name)
@settings(max_examples=10, deadline=None)
@given(x=st.tuples(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6)).map(np.array))
def test_gauged_spec_analytic_derivatives(spec, x):
    out = apply_gauge_ssm(spec, G1, 2.7, 1.0)
    assert out.derivative_mode == "analytic"
    assert np.max(np.abs(out.dh(x) - fd_derivative(out.h, x))) < 1e-7
    assert np.max(np.abs(out.domega(x) - fd_derivative(out.omega, x))) < 1e-7
    assert np.max(np.abs(out.dlam(x) - fd_derivative(out.lam, x))) < 1e-7


def test_composition_equals_sequential_application():
    spec = gallery.bumpy_lambda()
    rho, m = -2.6, 1.0
    seq = apply_gauge_ssm(apply_gauge_ssm(spec, G1, rho, m), G2, rho, m)
    one = apply_gauge_ssm(spec, compose(G1, G2), rho, m)
    for a, b in zip(_fields(seq, PTS), _fields(one, PTS)):
        assert np.max(np.abs(a - b)) <= 1e-9


@pytest.mark.parametrize("rho", [-2.4, 3.0])
def test_psi_pullback_matches_gauged_metric(rho):
    spec = gallery.bumpy_lambda()
    g = radial_gauge(0.1, phi_amp=0.3, phi_tilt=[0.2, -0.1])
    pulled, gauged = psi_pullback(spec, g, rho, PTS)
    assert np.max(np.abs(pulled - gauged)) <= 1e-10
    # the opposite shift sign does not reproduce the gauged metric
    flipped = assemble_g(apply_gauge_ssm(spec, g.scaled_phi(-1.0), rho, 1.0), PTS).g
    assert np.max(np.abs(flipped - gauged)) > 1e-3


def test_mp_gauge_commutes_with_reduction():
    spec = gallery.warped_disk()
    rho, m = 2.4, 1.0
    k = -0.5 * m * m
    a = apply_gauge_mp(reduce(spec, rho, m), G1, k)
    b = reduce(apply_gauge_ssm(spec, G1, rho, m), rho, m)
    assert np.allclose(a.h(PTS), b.h(PTS), atol=1e-13)
    assert np.allclose(a.alpha(PTS), b.alpha(PTS), atol=1e-13)
    assert np.allclose(a.U(PTS), b.U(PTS), atol=1e-12)


def test_inadmissible_momentum_can_break_signature():
    with pytest.raises(GaugeBreaksSignature):
        apply_gauge_ssm(gallery.flat_disk(), radial_gauge(0.1, mu_amp=1.0), 0.5, 1.0)


def test_invariance_and_control_small_batch():
    spec = gallery.rotating_disk()
    rho = gallery.working_momenta(spec)[0]
    entries = sample_entries(spec, rho, 1.0, 15, np.random.default_rng(4))
    g = radial_gauge(0.1, phi_amp=0.3, phi_tilt=[0.2, -0.1])
    rep = verify_scattering_invariance(spec, apply_gauge_ssm(spec, g, rho, 1.0), rho, 1.0, entries=entries)
    assert rep.passed and rep.max_deviation <= 1e-5
    ctl = verify_scattering_invariance(spec, interior_lambda_perturbation(spec), rho, 1.0, entries=entries)
    assert not ctl.passed and ctl.max_deviation >= 1e-3


def test_interior_perturbation_keeps_boundary_trace():
    spec = gallery.bumpy_lambda()
    assert boundary_trace_deviation(spec, interior_lambda_perturbation(spec, 1.5)) < 1e-14
    other = gallery.bumpy_lambda(eps=0.6)
    assert boundary_trace_deviation(spec, other) > 1e-3
    with pytest.raises(BoundaryTraceMismatch):
        verify_scattering_invariance(spec, other, -3.0, 1.0, n_samples=2)
