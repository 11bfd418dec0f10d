"""Built-in test manifolds on the unit disk, all with analytic derivatives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifold import ManifoldSpec, ball, convert_tilde


def _identity_h(x):
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(np.eye(x.shape[-1]), x.shape[:-1] + (x.shape[-1],) * 2).copy()


def _zero_dh(x):
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    return np.zeros(x.shape[:-1] + (n, n, n))


def _const_scalar(c):
    def f(x):
        return np.full(np.asarray(x).shape[:-1], float(c))

    return f


def _zero_vector(x):
    return np.zeros(np.asarray(x, dtype=float).shape)


def _zero_matrix(x):
    x = np.asarray(x, dtype=float)
    return np.zeros(x.shape + (x.shape[-1],))


def _swirl(eps):
    """``eps (-x^2, x^1)`` and its derivative ``[k, i] = d_k w_i``."""

    def w(x):
        x = np.asarray(x, dtype=float)
        return eps * np.stack([-x[..., 1], x[..., 0]], axis=-1)

    def dw(x):
        x = np.asarray(x, dtype=float)
        d = np.zeros(x.shape + (2,))
        d[..., 1, 0] = -eps
        d[..., 0, 1] = eps
        return d

    return w, dw


def flat_disk() -> ManifoldSpec:
    """Minkowski space over the unit disk: ``h = I``, ``omega = 0``, ``lam = 1``."""
    return ManifoldSpec(2, ball(), _identity_h, _zero_vector, _const_scalar(1.0), _zero_dh,
                        _zero_matrix, _zero_vector, name="flat-disk")


def magnetic_disk(c: float = 0.5) -> ManifoldSpec:
    """``h = I``, ``lam = 1``, ``omega = (c/2)(-x^2, x^1)`` so ``d omega = c dx^1 ^ dx^2``."""
    w, dw = _swirl(0.5 * c)
    return ManifoldSpec(2, ball(), _identity_h, w, _const_scalar(1.0), _zero_dh, dw,
                        _zero_vector, name="magnetic-disk", params={"c": c})


def bumpy_lambda(eps: float = 0.5, swirl: float = 0.1) -> ManifoldSpec:
    """``h = I``, ``omega = swirl (-x^2, x^1)``, ``lam = 1 + eps (x^1)^2``."""
    w, dw = _swirl(swirl)

    def lam(x):
        return 1.0 + eps * np.asarray(x)[..., 0] ** 2

    def dlam(x):
        x = np.asarray(x, dtype=float)
        d = np.zeros(x.shape)
        d[..., 0] = 2 * eps * x[..., 0]
        return d

    return ManifoldSpec(2, ball(), _identity_h, w, lam, _zero_dh, dw, dlam,
                        name="bumpy-lambda", params={"eps": eps, "swirl": swirl})


def rotating_disk(eps: float = 0.5) -> ManifoldSpec:
    """Flat spacetime seen from a frame rotating with angular speed ``eps``:
    ``h~ = I``, ``omega~ = eps (-x^2, x^1)``, ``lam = 1 - eps^2 |x|^2``."""
    if not abs(eps) < 1:
        raise ValueError("rotating-disk needs |eps| < 1 (light cylinder outside the disk)")
    wt, dwt = _swirl(eps)

    def lam(x):
        x = np.asarray(x, dtype=float)
        return 1.0 - eps * eps * np.sum(x * x, axis=-1)

    def dlam(x):
        return -2.0 * eps * eps * np.asarray(x, dtype=float)

    return convert_tilde(2, ball(), _identity_h, wt, lam, dh_tilde=_zero_dh, domega_tilde=dwt,
                         dlam=dlam, name="rotating-disk", params={"eps": eps})


def acoustic_analogue(swirl: float = 0.3, drain: float = 0.2, sound: float = 1.0) -> ManifoldSpec:
    """Acoustic metric of a fluid with velocity ``u = swirl (-x^2, x^1) - drain x``:
    ``-(c^2 - |u|^2) dt^2 - 2 u.dx dt + |dx|^2``."""

    def u(x):
        x = np.asarray(x, dtype=float)
        return swirl * np.stack([-x[..., 1], x[..., 0]], axis=-1) - drain * x

    def du(x):  # [k, i] = d_k u_i
        x = np.asarray(x, dtype=float)
        d = np.zeros(x.shape + (2,))
        d[..., 0, 0] = d[..., 1, 1] = -drain
        d[..., 1, 0] = -swirl
        d[..., 0, 1] = swirl
        return d

    def wt(x):
        return -u(x)

    def dwt(x):
        return -du(x)

    def lam(x):
        uu = u(x)
        return sound**2 - np.sum(uu * uu, axis=-1)

    def dlam(x):
        return -2.0 * np.einsum("...ki,...i->...k", du(x), u(x))

    return convert_tilde(2, ball(), _identity_h, wt, lam, dh_tilde=_zero_dh, domega_tilde=dwt,
                         dlam=dlam, name="acoustic-analogue",
                         params={"swirl": swirl, "drain": drain, "sound": sound})


def warped_disk(a: float = 0.3) -> ManifoldSpec:
    """Non-Euclidean ``h`` with a polynomial shift and lapse (exercises every
    Christoffel term)."""

    def h(x):
        x = np.asarray(x, dtype=float)
        X, Y = x[..., 0], x[..., 1]
        out = np.empty(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1 + a * Y**2
        out[..., 1, 1] = 1 + 0.7 * a * X**2
        out[..., 0, 1] = out[..., 1, 0] = 0.3 * a * X * Y
        return out

    def dh(x):
        x = np.asarray(x, dtype=float)
        X, Y = x[..., 0], x[..., 1]
        d = np.zeros(x.shape[:-1] + (2, 2, 2))
        d[..., 1, 0, 0] = 2 * a * Y
        d[..., 0, 1, 1] = 1.4 * a * X
        d[..., 0, 0, 1] = d[..., 0, 1, 0] = 0.3 * a * Y
        d[..., 1, 0, 1] = d[..., 1, 1, 0] = 0.3 * a * X
        return d

    def w(x):
        x = np.asarray(x, dtype=float)
        X, Y = x[..., 0], x[..., 1]
        return np.stack([0.15 * Y + 0.1 * X * Y, -0.1 * X + 0.05 * Y**2], axis=-1)

    def dw(x):
        x = np.asarray(x, dtype=float)
        X, Y = x[..., 0], x[..., 1]
        d = np.zeros(x.shape + (2,))
        d[..., 0, 0] = 0.1 * Y
        d[..., 1, 0] = 0.15 + 0.1 * X
        d[..., 0, 1] = -0.1
        d[..., 1, 1] = 0.1 * Y
        return d

    def lam(x):
        x = np.asarray(x, dtype=float)
        return 1.0 + 0.3 * x[..., 0] + 0.2 * x[..., 1] ** 2

    def dlam(x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.full(x.shape[:-1], 0.3), 0.4 * x[..., 1]], axis=-1)

    return ManifoldSpec(2, ball(), h, w, lam, dh, dw, dlam, name="warped-disk", params={"a": a})


@dataclass(frozen=True)
class GalleryEntry:
    name: str
    factory: object
    defaults: dict
    doc: str


GALLERY = {
    "flat-disk": GalleryEntry("flat-disk", flat_disk, {}, "h = I, omega = 0, lam = 1"),
    "rotating-disk": GalleryEntry(
        "rotating-disk", rotating_disk, {"eps": 0.5},
        "flat spacetime in a frame rotating with angular speed eps (|eps| < 1)"),
    "bumpy-lambda": GalleryEntry(
        "bumpy-lambda", bumpy_lambda, {"eps": 0.5, "swirl": 0.1},
        "h = I, omega = swirl (-y, x), lam = 1 + eps x^2"),
    "magnetic-disk": GalleryEntry(
        "magnetic-disk", magnetic_disk, {"c": 0.5},
        "h = I, lam = 1, constant magnetic field d omega = c dx ^ dy"),
    "acoustic-analogue": GalleryEntry(
        "acoustic-analogue", acoustic_analogue, {"swirl": 0.3, "drain": 0.2, "sound": 1.0},
        "acoustic metric of a draining vortex u = swirl (-y, x) - drain (x, y)"),
    "warped-disk": GalleryEntry(
        "warped-disk", warped_disk, {"a": 0.3},
        "polynomial non-Euclidean h, shift and lapse"),
}


def get(name: str, **params) -> ManifoldSpec:
    try:
        entry = GALLERY[name]
    except KeyError:
        raise KeyError(f"unknown gallery manifold {name!r}; known: {', '.join(GALLERY)}") from None
    kwargs = dict(entry.defaults)
    unknown = set(params) - set(kwargs)
    if unknown:
        raise KeyError(f"{name} has no parameter(s) {sorted(unknown)}")
    kwargs.update(params)
    return entry.factory(**kwargs)


def all_specs() -> list:
    return [get(name) for name in GALLERY]


def working_momenta(spec: ManifoldSpec, m: float = 1.0) -> tuple:
    """Two admissible momenta of opposite sign, clear of the band edge."""
    B = spec.lambda_range[1]
    r = m * np.sqrt(B)
    return (-2.0 * r, 2.5 * r)
