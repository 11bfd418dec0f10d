"""Single-chart description of a standard stationary spacetime ``R x N``.

The metric is ``g = -lam (dt - omega)^2 + h`` with ``N = {b >= 0}`` a
subdomain of R^n.  All functions here are pure and vectorized over leading
batch axes of the point argument.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateMetric, InvalidSpec, NonLorentzian, OutOfDomain
from .fields import derivative, fd_derivative

Field = Callable[[np.ndarray], np.ndarray]

BOUNDARY_TOL = 1e-10


def inverse(a):
    """Matrix inverse over leading batch axes, closed form for 2x2 blocks."""
    a = np.asarray(a, dtype=float)
    if a.shape[-1] != 2:
        return np.linalg.inv(a)
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    if np.any(det == 0) or not np.all(np.isfinite(det)):
        raise np.linalg.LinAlgError("singular matrix")
    out = np.empty_like(a)
    out[..., 0, 0] = a[..., 1, 1]
    out[..., 1, 1] = a[..., 0, 0]
    out[..., 0, 1] = -a[..., 0, 1]
    out[..., 1, 0] = -a[..., 1, 0]
    return out / det[..., None, None]


@dataclass(frozen=True)
class Domain:
    """``N = {b >= 0}``, star-shaped with respect to ``center``.

    ``extent`` bounds the distance from ``center`` to any point of N.
    """

    b: Field
    grad_b: Optional[Field] = None
    hess_b: Optional[Field] = None
    center: tuple = (0.0, 0.0)
    extent: float = 1.0
    radius: Optional[float] = None  # set for Euclidean balls (fast paths)

    @property
    def dim(self) -> int:
        return len(self.center)

    def grad(self, x):
        return derivative(self.b, self.grad_b, x)

    def hess(self, x):
        return derivative(self.grad, self.hess_b, x)

    def tolerance(self, x):
        return BOUNDARY_TOL * (1.0 + np.linalg.norm(np.asarray(x, dtype=float), axis=-1))

    def contains(self, x):
        return self.b(x) >= -self.tolerance(x)

    def on_boundary(self, x):
        return np.abs(self.b(x)) <= self.tolerance(x)

    def boundary_point(self, direction) -> np.ndarray:
        """Boundary point on the ray from ``center`` along ``direction``."""
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        c = np.asarray(self.center, dtype=float)
        if self.radius is not None:
            return c + self.radius * d
        r = brentq(lambda r: float(self.b(c + r * d)), 0.0, 1.5 * self.extent, xtol=1e-15)
        return c + r * d

    def boundary_samples(self, count: int = 200, seed: int = 0) -> np.ndarray:
        n = self.dim
        if n == 2:
            th = 2 * np.pi * (np.arange(count) + 0.5) / count
            dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)
        else:
            dirs = np.random.default_rng(seed).normal(size=(count, n))
        return np.array([self.boundary_point(d) for d in dirs])

    def lattice(self, per_dim: int = 10) -> np.ndarray:
        """``per_dim**n`` lattice over the bounding box, filtered to N."""
        c = np.asarray(self.center, dtype=float)
        axes = [np.linspace(ci - self.extent, ci + self.extent, per_dim) for ci in c]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(c))
        return pts[self.b(pts) >= 0]

    def random_interior(self, count: int, rng, *, max_fraction: float = 0.9) -> np.ndarray:
        """Uniform-ish points with ``b`` bounded away from 0 (scaled star rays)."""
        n = self.dim
        out = []
        while len(out) < count:
            d = rng.normal(size=n)
            p = self.boundary_point(d)
            c = np.asarray(self.center, dtype=float)
            r = max_fraction * rng.uniform() ** (1.0 / n)
            out.append(c + r * (p - c))
        return np.array(out)


def ball(radius: float = 1.0, center=(0.0, 0.0)) -> Domain:
    c = np.asarray(center, dtype=float)
    n = len(c)
    r2 = radius * radius

    def b(x):
        y = np.asarray(x, dtype=float) - c
        return r2 - np.sum(y * y, axis=-1)

    def grad_b(x):
        return -2.0 * (np.asarray(x, dtype=float) - c)

    def hess_b(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(-2.0 * np.eye(n), x.shape[:-1] + (n, n)).copy()

    return Domain(b, grad_b, hess_b, tuple(c), float(radius), float(radius))


@dataclass(frozen=True)
class ManifoldSpec:
    """Chart data ``(N, h, omega, lam)``.

    ``dh``, ``domega`` and ``dlam`` are the first partials
    (``dh[..., k, i, j] = d_k h_ij``, ``domega[..., k, i] = d_k omega_i``);
    when any of them is missing the manifold runs in finite-difference mode.
    """

    dim: int
    domain: Domain
    h: Field
    omega: Field
    lam: Field
    dh: Optional[Field] = None
    domega: Optional[Field] = None
    dlam: Optional[Field] = None
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)
    validate: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if self.domain.dim != self.dim:
            raise InvalidSpec(f"domain dimension {self.domain.dim} != dim {self.dim}")
        if self.validate:
            self.check()

    @property
    def derivative_mode(self) -> str:
        if self.dh is not None and self.domega is not None and self.dlam is not None:
            return "analytic"
        return "finite-difference"

    def dh_at(self, x):
        return derivative(self.h, self.dh, x)

    def domega_at(self, x):
        return derivative(self.omega, self.domega, x)

    def dlam_at(self, x):
        return derivative(self.lam, self.dlam, x)

    def h_inv(self, x):
        h = self.h(x)
        try:
            return inverse(h)
        except np.linalg.LinAlgError as exc:
            raise DegenerateMetric("h is singular") from exc

    def check(self, per_dim: int = 10, n_boundary: int = 200) -> None:
        """Sampled validation of positivity and boundary regularity."""
        pts = np.vstack([self.domain.lattice(per_dim), self.domain.boundary_samples(n_boundary)])
        lam = self.lam(pts)
        if not np.all(lam > 0):
            raise NonLorentzian(f"lambda <= 0 at {int(np.sum(lam <= 0))} sampled points")
        eig = np.linalg.eigvalsh(self.h(pts))
        if not np.all(eig[..., 0] > 0):
            raise DegenerateMetric("h not positive definite at sampled points")
        gb = np.linalg.norm(self.domain.grad(self.domain.boundary_samples(n_boundary)), axis=-1)
        if not np.all(gb > 1e-8):
            raise InvalidSpec("|grad b| vanishes on the sampled boundary")

    def derived(self, **changes) -> "ManifoldSpec":
        return replace(self, **changes)

    @cached_property
    def lambda_range(self) -> tuple:
        pts = np.vstack([self.domain.lattice(41 if self.dim == 2 else 12),
                         self.domain.boundary_samples(400)])
        lam = self.lam(pts)
        return float(lam.min()), float(lam.max())

    @cached_property
    def h_diameter(self) -> float:
        pts = self.domain.boundary_samples(64)
        eig = np.linalg.eigvalsh(self.h(pts))[..., -1].max()
        diff = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt(eig) * np.linalg.norm(diff, axis=-1).max())


@dataclass(frozen=True)
class LorentzMetricValue:
    g: np.ndarray
    g_inv: np.ndarray

    @property
    def signature_ok(self) -> np.ndarray:
        ev = np.linalg.eigvalsh(self.g)
        return np.sum(ev < 0, axis=-1) == 1


def _check_point(spec: ManifoldSpec, x, lam) -> None:
    if np.any(lam <= 0):
        raise NonLorentzian("lambda <= 0")
    if np.any(~spec.domain.contains(x)):
        raise OutOfDomain("point outside N")


def metric_blocks(h, omega, lam):
    """``g`` per the ``(-lam, lam*omega; lam*omega, h - lam*omega*omega)`` block form."""
    n = h.shape[-1]
    g = np.empty(h.shape[:-2] + (n + 1, n + 1))
    g[..., 0, 0] = -lam
    g[..., 0, 1:] = lam[..., None] * omega
    g[..., 1:, 0] = lam[..., None] * omega
    g[..., 1:, 1:] = h - lam[..., None, None] * omega[..., :, None] * omega[..., None, :]
    return g


def inverse_blocks(h_inv, omega, lam):
    """Block inverse of ``g``; top-left entry ``-1/lam + |omega|_h^2``."""
    n = h_inv.shape[-1]
    w_up = np.einsum("...ij,...j->...i", h_inv, omega)
    gi = np.empty(h_inv.shape[:-2] + (n + 1, n + 1))
    gi[..., 0, 0] = -1.0 / lam + np.einsum("...i,...i->...", omega, w_up)
    gi[..., 0, 1:] = w_up
    gi[..., 1:, 0] = w_up
    gi[..., 1:, 1:] = h_inv
    return gi


def assemble_g(spec: ManifoldSpec, x, *, check: bool = True) -> LorentzMetricValue:
    x = np.asarray(x, dtype=float)
    lam = np.asarray(spec.lam(x), dtype=float)
    if check:
        _check_point(spec, x, lam)
    h = spec.h(x)
    omega = spec.omega(x)
    return LorentzMetricValue(metric_blocks(h, omega, lam), inverse_blocks(inverse(h), omega, lam))


def assemble_g_tilde(h_tilde, omega_tilde, lam):
    """``g`` from the ``(-lam, omega~; omega~, h~)`` presentation."""
    n = h_tilde.shape[-1]
    g = np.empty(h_tilde.shape[:-2] + (n + 1, n + 1))
    g[..., 0, 0] = -lam
    g[..., 0, 1:] = omega_tilde
    g[..., 1:, 0] = omega_tilde
    g[..., 1:, 1:] = h_tilde
    return g


def convert_tilde(
    dim: int,
    domain: Domain,
    h_tilde: Field,
    omega_tilde: Field,
    lam: Field,
    *,
    dh_tilde: Optional[Field] = None,
    domega_tilde: Optional[Field] = None,
    dlam: Optional[Field] = None,
    name: str = "custom",
    params: Optional[dict] = None,
) -> ManifoldSpec:
    """Spec with ``h = h~ + omega~ (x) omega~ / lam`` and ``omega = omega~ / lam``."""

    def h(x):
        w = omega_tilde(x)
        return h_tilde(x) + w[..., :, None] * w[..., None, :] / lam(x)[..., None, None]

    def omega(x):
        return omega_tilde(x) / lam(x)[..., None]

    analytic = dh_tilde is not None and domega_tilde is not None and dlam is not None
    dh = domega = None
    if analytic:

        def dh(x):
            w, dw, L, dL = omega_tilde(x), domega_tilde(x), lam(x), dlam(x)
            ww = w[..., :, None] * w[..., None, :]
            dww = dw[..., :, :, None] * w[..., None, None, :] + w[..., None, :, None] * dw[..., :, None, :]
            return (
                dh_tilde(x)
                + dww / L[..., None, None, None]
                - ww[..., None, :, :] * (dL / L[..., None] ** 2)[..., :, None, None]
            )

        def domega(x):
            w, dw, L, dL = omega_tilde(x), domega_tilde(x), lam(x), dlam(x)
            return dw / L[..., None, None] - dL[..., :, None] * w[..., None, :] / (L**2)[..., None, None]

    return ManifoldSpec(
        dim, domain, h, omega, lam, dh, domega, dlam if analytic else None,
        name=name, params=dict(params or {}),
    )


def to_tilde(spec: ManifoldSpec, x):
    """``(h~, omega~, lam)`` at ``x``: the algebraic inverse of convert_tilde."""
    h, w, lam = spec.h(x), spec.omega(x), spec.lam(x)
    wt = lam[..., None] * w
    return h - lam[..., None, None] * w[..., :, None] * w[..., None, :], wt, lam


def _levi_civita(h_inv, dh):
    # Gamma^l_ij = 1/2 h^lm (d_i h_mj + d_j h_mi - d_m h_ij)
    first = dh.transpose(*range(dh.ndim - 3), -2, -3, -1)  # [..., m, i, j] = d_i h_mj
    lower = first + np.swapaxes(first, -1, -2) - dh
    return 0.5 * np.einsum("...lm,...mij->...lij", h_inv, lower)


def christoffel_h(spec: ManifoldSpec, x):
    """Levi-Civita symbols of ``h``: ``G[..., l, i, j] = Gamma^l_ij``."""
    x = np.asarray(x, dtype=float)
    return _levi_civita(spec.h_inv(x), spec.dh_at(x))


def christoffel_g(spec: ManifoldSpec, x):
    """Christoffel symbols of ``g`` over indices ``0..n`` (0 is time).

    Closed forms in terms of ``h``, ``omega``, ``lam`` and their first
    partials.  The time rows are ``omega_l Gamma^l - (1/lam) Gamma_{0,..}``,
    which carry ``|omega|_h^2`` terms in the ``(i,0)`` and ``(i,j)`` slots.
    """
    x = np.asarray(x, dtype=float)
    n = spec.dim
    h_inv = spec.h_inv(x)
    w = spec.omega(x)
    lam = spec.lam(x)
    a = spec.dlam_at(x)  # d_k lam
    dw = spec.domega_at(x)  # d_k w_i
    gh = _levi_civita(h_inv, spec.dh_at(x))

    w_up = np.einsum("...lm,...m->...l", h_inv, w)
    w2 = np.einsum("...i,...i->...", w, w_up)
    # L[k, i] = d_k(lam w_i)
    L = a[..., :, None] * w[..., None, :] + lam[..., None, None] * dw
    F = L - np.swapaxes(L, -1, -2)  # F[i, m] = d_i(lam w_m) - d_m(lam w_i)
    S = L + np.swapaxes(L, -1, -2)  # S[i, j] = d_j(lam w_i) + d_i(lam w_j)
    # P[k, a, b] = d_k(lam w_a w_b)
    P = (a[..., :, None, None] * w[..., None, :, None] * w[..., None, None, :]
         + lam[..., None, None, None] * (dw[..., :, :, None] * w[..., None, None, :]
                                         + w[..., None, :, None] * dw[..., :, None, :]))
    # W[m, i, j] = d_j(lam w_m w_i) + d_i(lam w_m w_j) - d_m(lam w_i w_j)
    Pt = np.moveaxis(P, -3, -1)  # Pt[a, b, k] = d_k(lam w_a w_b)
    W = Pt + np.swapaxes(Pt, -1, -2) - P

    G = np.empty(x.shape[:-1] + (n + 1, n + 1, n + 1))
    inv2l = 1.0 / (2.0 * lam)
    G[..., 0, 0, 0] = 0.5 * np.einsum("...m,...m->...", w_up, a)
    g0i0 = (a * inv2l[..., None] + 0.5 * np.einsum("...m,...im->...i", w_up, F)
            - 0.5 * w2[..., None] * a)
    G[..., 0, 1:, 0] = g0i0
    G[..., 0, 0, 1:] = g0i0
    G[..., 0, 1:, 1:] = (-S * inv2l[..., None, None]
                         + np.einsum("...s,...sij->...ij", w, gh)
                         - 0.5 * np.einsum("...m,...mij->...ij", w_up, W)
                         + 0.5 * w2[..., None, None] * S)
    G[..., 1:, 0, 0] = 0.5 * np.einsum("...lm,...m->...l", h_inv, a)
    gli0 = (0.5 * np.einsum("...lm,...im->...li", h_inv, F)
            - 0.5 * w_up[..., :, None] * a[..., None, :])
    G[..., 1:, 1:, 0] = gli0
    G[..., 1:, 0, 1:] = gli0
    G[..., 1:, 1:, 1:] = (0.5 * w_up[..., :, None, None] * S[..., None, :, :]
                          + gh
                          - 0.5 * np.einsum("...lm,...mij->...lij", h_inv, W))
    return G


def h_norm_sq(spec: ManifoldSpec, x, v):
    return np.einsum("...i,...ij,...j->...", v, spec.h(x), v)


def normal_data(spec: ManifoldSpec, x):
    """Outward h-unit normal ``nu_x = -grad_h b / |grad_h b|_h`` and ``|db|_h``."""
    x = np.asarray(x, dtype=float)
    db = spec.domain.grad(x)
    h_inv = spec.h_inv(x)
    up = np.einsum("...ij,...j->...i", h_inv, db)
    norm = np.sqrt(np.einsum("...i,...i->...", db, up))
    return -up / norm[..., None], norm


def outward_normal(spec: ManifoldSpec, x):
    return normal_data(spec, x)[0]


def inward_normal(spec: ManifoldSpec, x):
    return -normal_data(spec, x)[0]


def outward_normal_derivative(spec: ManifoldSpec, x):
    """``D[..., k, i] = d_k nu_x^i`` of the extended outward normal field."""
    x = np.asarray(x, dtype=float)
    dom = spec.domain
    if dom.hess_b is None or spec.dh is None:
        return fd_derivative(lambda y: outward_normal(spec, y), x)
    db = dom.grad(x)
    hb = dom.hess(x)  # [..., k, j] = d_k d_j b
    h_inv = spec.h_inv(x)
    dh = spec.dh_at(x)
    # d_k h^{ij} = -h^{ia} d_k h_ab h^{bj}
    dh_inv = -np.einsum("...ia,...kab,...bj->...kij", h_inv, dh, h_inv)
    up = np.einsum("...ij,...j->...i", h_inv, db)
    dup = np.einsum("...kij,...j->...ki", dh_inv, db) + np.einsum("...ij,...kj->...ki", h_inv, hb)
    norm = np.sqrt(np.einsum("...i,...i->...", db, up))
    # d_k |db|^2 = d_k(db_i up^i)
    dnorm2 = np.einsum("...ki,...i->...k", hb, up) + np.einsum("...i,...ki->...k", db, dup)
    dnorm = dnorm2 / (2 * norm[..., None])
    return -(dup / norm[..., None, None] - up[..., None, :] * dnorm[..., :, None] / norm[..., None, None] ** 2)


def tangent_basis(spec: ManifoldSpec, x) -> np.ndarray:
    """h-orthonormal basis of ``T_x dN`` (shape ``(..., n-1, n)``)."""
    x = np.asarray(x, dtype=float)
    nu = outward_normal(spec, x)
    h = spec.h(x)
    n = spec.dim
    single = x.ndim == 1
    if single:
        nu, h = nu[None], h[None]
    out = np.empty(nu.shape[:-1] + (n - 1, n))
    for idx in np.ndindex(nu.shape[:-1]):
        H = h[idx]
        basis = [nu[idx]]
        for e in np.eye(n):
            v = e.copy()
            for u in basis:
                v = v - (u @ H @ v) * u
            nv = np.sqrt(v @ H @ v)
            if nv > 1e-8:
                basis.append(v / nv)
            if len(basis) == n:
                break
        out[idx] = np.array(basis[1:])
    return out[0] if single else out
