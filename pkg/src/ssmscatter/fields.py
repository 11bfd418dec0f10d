"""Pointwise field helpers.

Fields are vectorized callables on points of shape ``(..., n)``.  Derivative
arrays put the differentiation index first after the batch axes, e.g.
``dh[..., k, i, j] = d_k h_ij``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FD_REL_STEP = 1e-5


def fd_derivative(fn, x, rel_step: float = FD_REL_STEP):
    """Central-difference derivative of ``fn`` with step ``rel_step*(1+|x|)``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    step = rel_step * (1.0 + np.linalg.norm(x, axis=-1))
    cols = []
    for k in range(n):
        dx = np.zeros(x.shape)
        dx[..., k] = step
        fp = np.asarray(fn(x + dx), dtype=float)
        fm = np.asarray(fn(x - dx), dtype=float)
        denom = (2.0 * step).reshape(step.shape + (1,) * (fp.ndim - step.ndim))
        cols.append((fp - fm) / denom)
    return np.stack(cols, axis=x.ndim - 1)


def derivative(fn, dfn, x):
    """Analytic derivative when supplied, central differences otherwise."""
    if dfn is not None:
        return np.asarray(dfn(x), dtype=float)
    return fd_derivative(fn, x)


def sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def exterior_derivative(d_form):
    """``(dw)_ij = d_i w_j - d_j w_i`` from ``d_form[..., k, i] = d_k w_i``."""
    return d_form - np.swapaxes(d_form, -1, -2)


# -- coefficient-table fields (used by configuration files) -----------------


@dataclass(frozen=True)
class Monomial:
    coef: float
    powers: tuple

    def value(self, x):
        out = np.full(x.shape[:-1], self.coef, dtype=float)
        for k, p in enumerate(self.powers):
            if p:
                out = out * x[..., k] ** p
        return out

    def grad(self, x):
        n = x.shape[-1]
        g = np.zeros(x.shape)
        for k in range(n):
            p = self.powers[k]
            if p == 0:
                continue
            term = np.full(x.shape[:-1], self.coef * p, dtype=float)
            for j, q in enumerate(self.powers):
                e = q - 1 if j == k else q
                if e:
                    term = term * x[..., j] ** e
            g[..., k] = term
        return g


@dataclass(frozen=True)
class Trig:
    """``coef * cos(wave . x)`` or ``coef * sin(wave . x)``."""

    kind: str
    coef: float
    wave: tuple

    def _phase(self, x):
        return x @ np.asarray(self.wave, dtype=float)

    def value(self, x):
        ph = self._phase(x)
        return self.coef * (np.cos(ph) if self.kind == "cos" else np.sin(ph))

    def grad(self, x):
        ph = self._phase(x)
        dv = -np.sin(ph) if self.kind == "cos" else np.cos(ph)
        return self.coef * dv[..., None] * np.asarray(self.wave, dtype=float)


@dataclass(frozen=True)
class Expansion:
    """Finite sum of monomials and trigonometric terms."""

    terms: tuple = field(default_factory=tuple)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for t in self.terms:
            out = out + t.value(x)
        return out

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for t in self.terms:
            out = out + t.grad(x)
        return out


def scalar_field(expansion: Expansion):
    return expansion, expansion.grad


def covector_field(components):
    """``omega`` and ``d omega`` from a list of n expansions."""

    def omega(x):
        return np.stack([c(x) for c in components], axis=-1)

    def domega(x):
        # [..., k, i] = d_k omega_i
        return np.stack([c.grad(x) for c in components], axis=-1)

    return omega, domega


def matrix_field(entries):
    """Symmetric ``h`` and ``dh`` from an n-by-n nested list of expansions
    (only the upper triangle is read)."""
    n = len(entries)

    def h(x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[:-1] + (n, n))
        for i in range(n):
            for j in range(i, n):
                out[..., i, j] = out[..., j, i] = entries[i][j](x)
        return out

    def dh(x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[:-1] + (n, n, n))
        for i in range(n):
            for j in range(i, n):
                g = entries[i][j].grad(x)
                out[..., :, i, j] = g
                out[..., :, j, i] = g
        return out

    return h, dh
