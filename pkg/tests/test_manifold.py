import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import fd_christoffel_g, fd_christoffel_h

from ssmscatter import gallery
from ssmscatter.errors import DegenerateMetric, NonLorentzian
from ssmscatter.manifold import (
    ManifoldSpec,
    assemble_g,
    assemble_g_tilde,
    ball,
    christoffel_g,
    christoffel_h,
    convert_tilde,
    inverse,
    normal_data,
    outward_normal_derivative,
    tangent_basis,
    to_tilde,
)

SPECS = gallery.all_specs()
IDS = [s.name for s in SPECS]

points = st.tuples(st.floats(-0.7, 0.7), st.floats(-0.7, 0.7)).map(np.array)


def test_flat_metric_is_minkowski():
    g = assemble_g(gallery.flat_disk(), np.zeros(2))
    assert np.array_equal(g.g, np.diag([-1.0, 1.0, 1.0]))
    assert g.signature_ok


@pytest.mark.parametrize("spec", SPECS, ids=IDS)
@settings(max_examples=30, deadline=None)
@given(x=points)
def test_inverse_blocks_invert_g(spec, x):
    val = assemble_g(spec, x)
    assert np.allclose(val.g @ val.g_inv, np.eye(3), atol=1e-12)
    assert val.signature_ok


@settings(max_examples=50, deadline=None)
@given(a=st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_closed_form_2x2_inverse(a):
    m = np.array([[a[0], a[1]], [a[2], a[3]]]) + 7 * np.eye(2)  # diagonally dominant, so invertible
    assert np.allclose(inverse(m), np.linalg.inv(m), atol=1e-12)


@pytest.mark.parametrize("spec", SPECS, ids=IDS)
def test_tilde_form_round_trip(spec):
    x = np.array([[0.1, 0.2], [-0.5, 0.3], [0.0, -0.9]])
    ht, wt, lam = to_tilde(spec, x)
    assert np.allclose(assemble_g_tilde(ht, wt, lam), assemble_g(spec, x).g, atol=1e-13)


def test_rotating_frame_conversion_matches_algebra():
    eps = 0.5
    spec = gallery.rotating_disk(eps)
    x = np.array([0.3, -0.4])
    lam = 1 - eps**2 * 0.25
    wt = eps * np.array([0.4, 0.3])
    assert np.allclose(spec.omega(x), wt / lam)
    assert np.allclose(spec.h(x), np.eye(2) + np.outer(wt, wt) / lam)


@pytest.mark.parametrize("spec", SPECS, ids=IDS)
def test_christoffel_closed_forms_match_fd_oracle(spec):
    x = np.random.default_rng(0).uniform(-0.6, 0.6, size=(40, 2))
    assert np.max(np.abs(christoffel_g(spec, x) - fd_christoffel_g(spec, x))) < 1e-8
    for p in x[:5]:
        assert np.max(np.abs(christoffel_h(spec, p) - fd_christoffel_h(spec, p))) < 1e-8


def test_christoffel_frozen_value():
    # frozen from the FD Levi-Civita oracle of the assembled g on warped-disk at (0.3, -0.2),
    # stable to 2e-10 between steps 1e-4 and 1e-5
    G = christoffel_g(gallery.warped_disk(), np.array([0.3, -0.2]))
    frozen = {(0, 0, 1): 0.140712396123, (1, 0, 0): 0.148016050162, (0, 1, 2): -0.03716916371,
              (2, 1, 1): 0.03030938331, (1, 1, 2): -0.053365160864}
    for idx, val in frozen.items():
        assert abs(G[idx] - val) < 1e-9


def test_finite_difference_mode_agrees_with_analytic():
    spec = gallery.bumpy_lambda()
    fd = ManifoldSpec(2, spec.domain, spec.h, spec.omega, spec.lam, name="fd")
    assert fd.derivative_mode == "finite-difference"
    x = np.array([[0.2, -0.1], [0.5, 0.5]])
    assert np.max(np.abs(christoffel_g(fd, x) - christoffel_g(spec, x))) < 1e-8


def test_rejects_non_positive_lapse():
    f = gallery.flat_disk()
    with pytest.raises(NonLorentzian):
        ManifoldSpec(2, ball(), f.h, f.omega, lambda x: 0.5 - np.sum(np.asarray(x) ** 2, axis=-1))


def test_rejects_degenerate_h():
    f = gallery.flat_disk()

    def h(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        return out

    with pytest.raises(DegenerateMetric):
        ManifoldSpec(2, ball(), h, f.omega, f.lam)


def test_acoustic_lapse_vanishes_at_horizon():
    # u = swirl (-y, x) - drain x with |u| = 1 on a circle of radius 1/sqrt(swirl^2 + drain^2)
    with pytest.raises(NonLorentzian):
        convert_tilde(2, ball(2.5), lambda x: np.broadcast_to(np.eye(2), np.shape(x)[:-1] + (2, 2)),
                      lambda x: -0.4 * np.asarray(x), lambda x: 1 - 0.16 * np.sum(np.asarray(x) ** 2, -1))


def test_unit_disk_normal_and_tangent():
    spec = gallery.flat_disk()
    th = np.linspace(0, 2 * np.pi, 7)
    x = np.stack([np.cos(th), np.sin(th)], axis=-1)
    nu, norm = normal_data(spec, x)
    assert np.allclose(nu, x)
    assert np.allclose(norm, 2.0)
    t = tangent_basis(spec, x)[:, 0]
    assert np.allclose(np.einsum("pi,pi->p", t, x), 0, atol=1e-14)
    assert np.allclose(np.linalg.norm(t, axis=-1), 1)


@pytest.mark.parametrize("spec", SPECS, ids=IDS)
def test_normal_is_h_unit_and_h_orthogonal_to_tangents(spec):
    x = spec.domain.boundary_samples(32)
    nu, _ = normal_data(spec, x)
    h = spec.h(x)
    assert np.allclose(np.einsum("pi,pij,pj->p", nu, h, nu), 1)
    t = tangent_basis(spec, x)[:, 0]
    assert np.allclose(np.einsum("pi,pij,pj->p", t, h, nu), 0, atol=1e-12)


def test_outward_normal_derivative_matches_fd():
    spec = gallery.warped_disk()
    x = np.array([0.6, -0.5])
    D = outward_normal_derivative(spec, x)
    step = 1e-6
    fd = np.stack([(normal_data(spec, x + step * e)[0] - normal_data(spec, x - step * e)[0]) / (2 * step)
                   for e in np.eye(2)])
    assert np.allclose(D, fd, atol=1e-7)


def test_domain_helpers():
    dom = ball()
    assert dom.contains(np.zeros(2)) and not dom.contains(np.array([1.1, 0]))
    assert dom.on_boundary(dom.boundary_point(np.array([3.0, 4.0])))
    assert np.allclose(dom.boundary_point(np.array([3.0, 4.0])), [0.6, 0.8])
    assert np.all(dom.contains(dom.lattice(10)))
