"""Extra manifolds used only by the tests."""

from __future__ import annotations

import numpy as np

from ssmscatter import gallery
from ssmscatter.manifold import ManifoldSpec, ball


def radial_shift(a: float = 0.3, b: float = 0.5) -> ManifoldSpec:
    """Warped h and lapse with ``omega = a (1 + b y) x``, which annihilates
    every tangent vector of the unit circle."""
    w = gallery.warped_disk()

    def omega(x):
        x = np.asarray(x, dtype=float)
        return (a * (1 + b * x[..., 1]))[..., None] * x

    def domega(x):  # [k, i] = d_k omega_i
        x = np.asarray(x, dtype=float)
        s = a * (1 + b * x[..., 1])
        d = s[..., None, None] * np.eye(2)
        d[..., 1, :] += a * b * x
        return d

    return ManifoldSpec(2, ball(), w.h, omega, w.lam, w.dh, domega, w.dlam, name="radial-shift")


def uniform_shift(a: float = 0.4) -> ManifoldSpec:
    """``h = I``, ``lam = 1``, constant ``omega = (a, 0)``."""
    f = gallery.flat_disk()

    def omega(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        out[..., 0] = a
        return out

    return ManifoldSpec(2, ball(), f.h, omega, f.lam, f.dh, f.domega, f.dlam, name="uniform-shift")


def steep_lapse(k: float = 3.0, a: float = 0.3) -> ManifoldSpec:
    """``h = I``, radial ``omega = a x`` and ``lam = 1 + k |x|^2``; large ``k``
    makes the boundary MP-concave."""
    f = gallery.flat_disk()

    def omega(x):
        return a * np.asarray(x, dtype=float)

    def domega(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(a * np.eye(2), x.shape + (2,)).copy()

    def lam(x):
        x = np.asarray(x, dtype=float)
        return 1.0 + k * np.sum(x * x, axis=-1)

    def dlam(x):
        return 2.0 * k * np.asarray(x, dtype=float)

    return ManifoldSpec(2, ball(), f.h, omega, lam, f.dh, domega, dlam, name=f"steep-lapse({k:g})")
