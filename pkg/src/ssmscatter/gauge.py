"""Gauge transformations ``(f, phi, mu)`` of spacetimes and MP systems.

For a spacetime at momentum ``rho`` and mass ``m``::

    h'      = f*h / mu
    omega'  = f*omega + d(phi / rho)
    1/lam'  = mu (1/(lam o f) - m^2/rho^2) + m^2/rho^2

and for an MP system at energy ``k``::

    h' = f*h / mu,   alpha' = f*alpha + d phi,   U' = mu (U o f - k) + k.

``f`` fixes the boundary pointwise, ``phi`` vanishes on it and ``mu`` equals
one there, so boundary traces are preserved.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import BoundaryTraceMismatch, ConventionMismatch, GaugeBreaksSignature, InvalidGauge
from .fields import fd_derivative
from .manifold import ManifoldSpec, assemble_g, tangent_basis
from .reduction import MPSystem
from .scattering import sample_entries, scattering_rho_m_batch


@dataclass(frozen=True)
class GaugeTransform:
    """Boundary-fixing diffeomorphism ``f`` with a shift ``phi`` and a
    conformal factor ``mu``.

    ``Df[..., a, i] = d_i f^a``; ``d2f[..., a, k, i] = d_k d_i f^a``;
    ``dphi`` and ``dmu`` are gradients and ``d2phi`` the Hessian of ``phi``.
    The second derivatives are needed only for analytic derivatives of the
    transformed fields; without them the output runs in finite-difference
    mode.
    """

    dim: int
    f: object
    Df: object
    phi: object
    dphi: object
    mu: object
    dmu: Optional[object] = None
    d2f: Optional[object] = None
    d2phi: Optional[object] = None
    name: str = "gauge"

    @property
    def analytic(self) -> bool:
        return self.d2f is not None and self.d2phi is not None and self.dmu is not None

    def validate(self, domain, n_boundary: int = 200, per_dim: int = 10) -> None:
        """Sampled checks of the boundary conditions and of ``det Df != 0``.

        Raises
        ------
        InvalidGauge
        """
        bd = domain.boundary_samples(n_boundary)
        if np.max(np.linalg.norm(self.f(bd) - bd, axis=-1)) > 1e-10:
            raise InvalidGauge("f moves boundary points")
        if np.max(np.abs(self.phi(bd))) > 1e-10:
            raise InvalidGauge("phi does not vanish on the boundary")
        if np.max(np.abs(self.mu(bd) - 1.0)) > 1e-10:
            raise InvalidGauge("mu differs from 1 on the boundary")
        pts = np.vstack([domain.lattice(per_dim), bd])
        if np.min(np.abs(np.linalg.det(self.Df(pts)))) < 1e-12:
            raise InvalidGauge("Df is singular at a sampled point")
        if np.min(self.mu(pts)) <= 0:
            raise InvalidGauge("mu is not positive")

    def dmu_at(self, x):
        return self.dmu(x) if self.dmu is not None else fd_derivative(self.mu, x)

    def d2f_at(self, x):
        if self.d2f is not None:
            return self.d2f(x)
        # fd_derivative puts the new index before the components: [k, a, i]
        return np.moveaxis(fd_derivative(self.Df, x), -3, -2)

    def d2phi_at(self, x):
        return self.d2phi(x) if self.d2phi is not None else fd_derivative(self.dphi, x)

    def scaled_phi(self, c: float) -> "GaugeTransform":
        """Same ``f`` and ``mu`` with ``phi`` multiplied by ``c``."""
        d2 = None if self.d2phi is None else (lambda x: c * self.d2phi(x))
        return replace(self, phi=lambda x: c * self.phi(x), dphi=lambda x: c * self.dphi(x),
                       d2phi=d2, name=f"{self.name}*{c:g}")


def identity_gauge(dim: int = 2) -> GaugeTransform:
    def f(x):
        return np.array(x, dtype=float)

    def Df(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(dim), x.shape[:-1] + (dim, dim)).copy()

    def zero(x):
        return np.zeros(np.asarray(x).shape[:-1])

    def one(x):
        return np.ones(np.asarray(x).shape[:-1])

    def zero_vec(x):
        return np.zeros(np.asarray(x, dtype=float).shape)

    def zero_mat(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape + (dim,))

    def zero_t3(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (dim, dim, dim))

    return GaugeTransform(dim, f, Df, zero, zero_vec, one, zero_vec, zero_t3, zero_mat, "identity")


def radial_gauge(eps: float = 0.1, A=None, c=None, phi_amp: float = 0.0, phi_tilt=None,
                 mu_amp: float = 0.0, center=None, radius: float = 1.0) -> GaugeTransform:
    """Built-in boundary-fixing gauge on a Euclidean ball.

    With ``r2 = |x - center|^2 / radius^2`` and ``s = eps (1 - r2)^2``::

        f(x)   = x + s * (A (x - center) + c)
        phi(x) = phi_amp (1 - r2) (1 + phi_tilt . (x - center))
        mu(x)  = 1 + mu_amp (1 - r2)^2

    ``f`` agrees with the identity to first order on the sphere, ``phi``
    vanishes there with non-zero normal derivative and ``mu = 1`` there.
    """
    A = np.asarray([[0.3, -0.5], [0.4, 0.2]] if A is None else A, dtype=float)
    n = A.shape[0]
    c = np.zeros(n) if c is None else np.asarray(c, dtype=float)
    tilt = np.zeros(n) if phi_tilt is None else np.asarray(phi_tilt, dtype=float)
    ctr = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    R2 = radius * radius
    eye = np.eye(n)

    def parts(x):
        y = np.asarray(x, dtype=float) - ctr
        q = 1.0 - np.sum(y * y, axis=-1) / R2  # 1 - r2
        dq = -2.0 * y / R2
        return y, q, dq

    def w(y):
        return y @ A.T + c

    def f(x):
        y, q, _ = parts(x)
        return np.asarray(x, dtype=float) + (eps * q * q)[..., None] * w(y)

    def Df(x):
        y, q, dq = parts(x)
        s = eps * q * q
        ds = 2.0 * eps * q[..., None] * dq
        return eye + w(y)[..., :, None] * ds[..., None, :] + s[..., None, None] * A

    def d2f(x):
        y, q, dq = parts(x)
        s = eps * q * q
        ds = 2.0 * eps * q[..., None] * dq
        # d2s[k, i] = 2 eps (dq_k dq_i + q d_k dq_i),  d_k dq_i = -2 delta / R2
        d2s = 2.0 * eps * (dq[..., :, None] * dq[..., None, :] - (2.0 / R2) * q[..., None, None] * eye)
        wy = w(y)
        # [a, k, i] = A_ak ds_i + w_a d2s_ki + ds_k A_ai
        return (A[:, :, None] * ds[..., None, None, :]
                + wy[..., :, None, None] * d2s[..., None, :, :]
                + ds[..., None, :, None] * A[:, None, :])

    def phi(x):
        y, q, _ = parts(x)
        return phi_amp * q * (1.0 + y @ tilt)

    def dphi(x):
        y, q, dq = parts(x)
        return phi_amp * (dq * (1.0 + y @ tilt)[..., None] + q[..., None] * tilt)

    def d2phi(x):
        y, q, dq = parts(x)
        lin = 1.0 + y @ tilt
        return phi_amp * (-(2.0 / R2) * lin[..., None, None] * eye
                          + dq[..., :, None] * tilt + tilt[:, None] * dq[..., None, :])

    def mu(x):
        _, q, _ = parts(x)
        return 1.0 + mu_amp * q * q

    def dmu(x):
        _, q, dq = parts(x)
        return 2.0 * mu_amp * q[..., None] * dq

    return GaugeTransform(n, f, Df, phi, dphi, mu, dmu, d2f, d2phi,
                          name=f"radial(eps={eps:g},phi={phi_amp:g},mu={mu_amp:g})")


def compose(first: GaugeTransform, second: GaugeTransform) -> GaugeTransform:
    """Gauge equal to applying ``first`` and then ``second``.

    ``f = f1 o f2``, ``phi = phi1 o f2 + phi2``, ``mu = mu2 (mu1 o f2)``.
    """
    g1, g2 = first, second

    def f(x):
        return g1.f(g2.f(x))

    def Df(x):
        return np.einsum("...ab,...bi->...ai", g1.Df(g2.f(x)), g2.Df(x))

    def phi(x):
        return g1.phi(g2.f(x)) + g2.phi(x)

    def dphi(x):
        return np.einsum("...ai,...a->...i", g2.Df(x), g1.dphi(g2.f(x))) + g2.dphi(x)

    def mu(x):
        return g2.mu(x) * g1.mu(g2.f(x))

    def dmu(x):
        y = g2.f(x)
        return (g2.dmu_at(x) * g1.mu(y)[..., None]
                + g2.mu(x)[..., None] * np.einsum("...ai,...a->...i", g2.Df(x), g1.dmu_at(y)))

    def d2f(x):
        y = g2.f(x)
        J2 = g2.Df(x)
        return (np.einsum("...acd,...ck,...di->...aki", g1.d2f_at(y), J2, J2)
                + np.einsum("...ac,...cki->...aki", g1.Df(y), g2.d2f_at(x)))

    def d2phi(x):
        y = g2.f(x)
        J2 = g2.Df(x)
        return (np.einsum("...ck,...cd,...di->...ki", J2, g1.d2phi_at(y), J2)
                + np.einsum("...c,...cki->...ki", g1.dphi(y), g2.d2f_at(x)) + g2.d2phi_at(x))

    analytic = first.analytic and second.analytic
    return GaugeTransform(g1.dim, f, Df, phi, dphi, mu, dmu if analytic else None,
                          d2f if analytic else None, d2phi if analytic else None,
                          name=f"{g1.name}.{g2.name}")


def _pullback_metric(h, dh, gauge, x, with_derivative: bool):
    """``(1/mu) Df^T h(f) Df`` and, optionally, its partials."""
    y = gauge.f(x)
    J = gauge.Df(x)
    mu = gauge.mu(x)
    hf = h(y)
    core = np.einsum("...ai,...ab,...bj->...ij", J, hf, J)
    val = core / mu[..., None, None]
    if not with_derivative:
        return val, None
    d2f = gauge.d2f_at(x)
    dhf = np.einsum("...cab,...ck->...kab", dh(y), J)  # d_k [h_ab(f(x))]
    dcore = (np.einsum("...aki,...ab,...bj->...kij", d2f, hf, J)
             + np.einsum("...ai,...kab,...bj->...kij", J, dhf, J)
             + np.einsum("...ai,...ab,...bkj->...kij", J, hf, d2f))
    dmu = gauge.dmu_at(x)
    dval = dcore / mu[..., None, None, None] - (dmu / mu[..., None] ** 2)[..., :, None, None] * core[..., None, :, :]
    return val, dval


def _pullback_form(form, dform, gauge, x, phi_scale: float, with_derivative: bool):
    """``Df^T form(f) + phi_scale * dphi`` and, optionally, ``[k, i]`` partials."""
    y = gauge.f(x)
    J = gauge.Df(x)
    fy = form(y)
    val = np.einsum("...ai,...a->...i", J, fy) + phi_scale * gauge.dphi(x)
    if not with_derivative:
        return val, None
    dval = (np.einsum("...aki,...a->...ki", gauge.d2f_at(x), fy)
            + np.einsum("...ai,...ca,...ck->...ki", J, dform(y), J)
            + phi_scale * gauge.d2phi_at(x))
    return val, dval


def apply_gauge_ssm(spec: ManifoldSpec, gauge: GaugeTransform, rho: float, m: float, *,
                    check: bool = True) -> ManifoldSpec:
    """Gauge-transformed spacetime for momentum ``rho`` and mass ``m``.

    Raises
    ------
    GaugeBreaksSignature
        If ``lam'`` is not positive at a sampled point of N.
    """
    rho, m = float(rho), float(m)
    cc = m * m / (rho * rho)
    analytic = gauge.analytic and spec.derivative_mode == "analytic"

    def h(x):
        return _pullback_metric(spec.h, spec.dh_at, gauge, x, False)[0]

    def dh(x):
        return _pullback_metric(spec.h, spec.dh_at, gauge, x, True)[1]

    def omega(x):
        return _pullback_form(spec.omega, spec.domega_at, gauge, x, 1.0 / rho, False)[0]

    def domega(x):
        return _pullback_form(spec.omega, spec.domega_at, gauge, x, 1.0 / rho, True)[1]

    def inv_lam(x):
        return gauge.mu(x) * (1.0 / spec.lam(gauge.f(x)) - cc) + cc

    def lam(x):
        return 1.0 / inv_lam(x)

    def dlam(x):
        y = gauge.f(x)
        ly = spec.lam(y)
        dly = np.einsum("...c,...ck->...k", spec.dlam_at(y), gauge.Df(x))
        d_inv = (gauge.dmu_at(x) * (1.0 / ly - cc)[..., None]
                 - gauge.mu(x)[..., None] * dly / (ly * ly)[..., None])
        return -d_inv / inv_lam(x)[..., None] ** 2

    if check:
        pts = np.vstack([spec.domain.lattice(10), spec.domain.boundary_samples(200)])
        il = inv_lam(pts)
        if not np.all(il > 0):
            raise GaugeBreaksSignature("lam' <= 0 at a sampled point")
    return ManifoldSpec(
        spec.dim, spec.domain, h, omega, lam,
        dh if analytic else None, domega if analytic else None, dlam if analytic else None,
        name=f"{spec.name}|{gauge.name}", params=dict(spec.params),
    )


def apply_gauge_mp(system: MPSystem, gauge: GaugeTransform, k: float) -> MPSystem:
    """``k``-gauge transform of an MP system (``mu = 1`` gives plain gauge equivalence)."""
    k = float(k)

    def h(x):
        return _pullback_metric(system.h, system.dh_at, gauge, x, False)[0]

    def dh(x):
        return _pullback_metric(system.h, system.dh_at, gauge, x, True)[1]

    def alpha(x):
        return _pullback_form(system.alpha, system.dalpha_at, gauge, x, 1.0, False)[0]

    def dalpha(x):
        return _pullback_form(system.alpha, system.dalpha_at, gauge, x, 1.0, True)[1]

    def U(x):
        return gauge.mu(x) * (system.U(gauge.f(x)) - k) + k

    def dU(x):
        y = gauge.f(x)
        return (gauge.dmu_at(x) * (system.U(y) - k)[..., None]
                + gauge.mu(x)[..., None] * np.einsum("...c,...ck->...k", system.dU_at(y), gauge.Df(x)))

    return replace(system, h=h, dh=dh, alpha=alpha, dalpha=dalpha, U=U, dU=dU, k=k,
                   base_spec=None, name=f"{system.name}|{gauge.name}")


def psi_pullback(spec: ManifoldSpec, gauge: GaugeTransform, rho: float, points, *,
                 tol: float = 1e-10):
    """Spacetime pullback by ``Psi(t, x) = (t + phi_hat(x), f(x))``.

    With ``phi_hat = -phi / rho`` the pullback ``Psi*g`` equals the metric of
    ``apply_gauge_ssm(spec, gauge, rho, m)`` for ``mu = 1`` (any ``m``).  The
    metric is stationary, so ``t`` plays no role and only ``x`` is sampled.

    Returns
    -------
    (pulled, gauged) : arrays of shape ``(P, n+1, n+1)``

    Raises
    ------
    ConventionMismatch
        If the two assemblies differ by more than ``tol`` entrywise.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if np.max(np.abs(gauge.mu(pts) - 1.0)) > 0:
        raise InvalidGauge("psi_pullback requires mu = 1")
    n = spec.dim
    y = gauge.f(pts)
    g_y = assemble_g(spec, y, check=False).g
    dpsi = np.zeros(pts.shape[:-1] + (n + 1, n + 1))
    dpsi[..., 0, 0] = 1.0
    dpsi[..., 0, 1:] = -gauge.dphi(pts) / rho
    dpsi[..., 1:, 1:] = gauge.Df(pts)
    pulled = np.einsum("...ma,...mn,...nb->...ab", dpsi, g_y, dpsi)
    gauged = assemble_g(apply_gauge_ssm(spec, gauge, rho, 1.0, check=False), pts, check=False).g
    dev = float(np.max(np.abs(pulled - gauged)))
    if dev > tol:
        raise ConventionMismatch(f"Psi*g and the gauged metric differ by {dev:.3g}")
    return pulled, gauged


def boundary_trace_deviation(specA: ManifoldSpec, specB: ManifoldSpec, n_boundary: int = 200) -> float:
    """Largest difference of ``h``, tangential ``omega`` and ``lam`` on dN."""
    pts = specA.domain.boundary_samples(n_boundary)
    dh = np.max(np.abs(specA.h(pts) - specB.h(pts)))
    tb = tangent_basis(specA, pts)
    dw = np.max(np.abs(np.einsum("pjn,pn->pj", tb, specA.omega(pts) - specB.omega(pts))))
    dl = np.max(np.abs(specA.lam(pts) - specB.lam(pts)))
    return float(max(dh, dw, dl))


@dataclass
class InvarianceReport:
    rho: float
    m: float
    n_compared: int
    n_failed: int
    max_deviation: float
    deviations: np.ndarray  # per entry
    threshold: float = 1e-5

    @property
    def passed(self) -> bool:
        return self.n_compared > 0 and self.max_deviation <= self.threshold


def verify_scattering_invariance(specA: ManifoldSpec, specB: ManifoldSpec, rho: float, m: float,
                                 n_samples: int = 100, *, seed: int = 0, entries=None,
                                 threshold: float = 1e-5, rtol: float = 1e-10,
                                 atol: float = 1e-10) -> InvarianceReport:
    """Compare scattering records of two specs with equal boundary traces.

    The deviation of an entry is the largest componentwise difference of
    (exit point, exit tangent data, T, t - s, action).

    Raises
    ------
    BoundaryTraceMismatch
        If ``h``, tangential ``omega`` or ``lam`` differ on dN by more than 1e-8.
    """
    tr = boundary_trace_deviation(specA, specB)
    if tr > 1e-8:
        raise BoundaryTraceMismatch(f"boundary traces differ by {tr:.3g}")
    if entries is None:
        entries = sample_entries(specA, rho, m, n_samples, np.random.default_rng(seed))
    recA, _ = scattering_rho_m_batch(specA, rho, m, entries, rtol=rtol, atol=atol)
    recB, _ = scattering_rho_m_batch(specB, rho, m, entries, rtol=rtol, atol=atol)
    devs = np.full(len(entries), np.nan)
    failed = 0
    for i, (a, b) in enumerate(zip(recA, recB)):
        if a is None or b is None:
            failed += 1
            continue
        devs[i] = float(np.max(np.abs(a.vector() - b.vector())))
    ok = ~np.isnan(devs)
    mx = float(np.max(devs[ok])) if np.any(ok) else float("nan")
    return InvarianceReport(rho, m, int(ok.sum()), failed, mx, devs, threshold)


def interior_lambda_perturbation(spec: ManifoldSpec, scale: float = 1.1) -> ManifoldSpec:
    """``lam`` multiplied by ``1 + (scale - 1) b^2`` (unchanged on dN, where b = 0)."""
    b = spec.domain.b
    gb = spec.domain.grad
    a = scale - 1.0

    def lam(x):
        return spec.lam(x) * (1.0 + a * b(x) ** 2)

    def dlam(x):
        bx = b(x)
        return spec.dlam_at(x) * (1.0 + a * bx * bx)[..., None] + (spec.lam(x) * 2 * a * bx)[..., None] * gb(x)

    analytic = spec.derivative_mode == "analytic"
    return replace(spec, lam=lam, dlam=dlam if analytic else None,
                   name=f"{spec.name}|lam*{scale:g}")

