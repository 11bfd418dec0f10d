"""Geodesic flow of a standard stationary spacetime.

States are packed as ``y = [t, x^1..x^n, v0, v^1..v^n]`` where ``v0 = dt/ds``
and ``v = dx/ds``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConservationWarning, OutOfDomain
from .integrate import (
    STATUS_EVENT,
    STATUS_HORIZON,
    DenseOutput,
    integrate_monitored,
    raise_for_status,
)
from .manifold import ManifoldSpec, _levi_civita, assemble_g, h_norm_sq


@dataclass(frozen=True)
class SpacetimeState:
    t: float
    x: np.ndarray
    v0: float
    vx: np.ndarray
    s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "vx", np.asarray(self.vx, dtype=float))

    @property
    def dim(self) -> int:
        return len(self.x)

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.t], self.x, [self.v0], self.vx])

    @property
    def velocity(self) -> np.ndarray:
        return np.concatenate([[self.v0], self.vx])

    @classmethod
    def from_array(cls, y, s: float = 0.0) -> "SpacetimeState":
        y = np.asarray(y, dtype=float)
        n = (len(y) - 2) // 2
        return cls(float(y[0]), y[1 : n + 1].copy(), float(y[n + 1]), y[n + 2 :].copy(), s)


def split_state(y, n: int):
    """``(t, x, v0, v)`` views of packed state arrays."""
    return y[..., 0], y[..., 1 : n + 1], y[..., n + 1], y[..., n + 2 :]


def _check_inside(spec: ManifoldSpec, x) -> None:
    if np.any(~spec.domain.contains(x)):
        raise OutOfDomain("state outside N")


def hamiltonian_H(spec: ManifoldSpec, state) -> np.ndarray:
    """``H = 1/2 |v|_g^2``; a mass-m timelike state gives ``-m^2/2``."""
    y = _packed(state)
    n = spec.dim
    _, x, v0, v = split_state(y, n)
    _check_inside(spec, x)
    return _hamiltonian(spec, x, v0, v)


def _hamiltonian(spec, x, v0, v):
    lam = spec.lam(x)
    q = v0 - np.einsum("...i,...i->...", spec.omega(x), v)
    return 0.5 * (-lam * q * q + h_norm_sq(spec, x, v))


def momentum_J(spec: ManifoldSpec, state) -> np.ndarray:
    """``J = (d_t, v)_g = -lam (v0 - <omega, v_x>)``."""
    y = _packed(state)
    n = spec.dim
    _, x, v0, v = split_state(y, n)
    _check_inside(spec, x)
    return _momentum(spec, x, v0, v)


def _momentum(spec, x, v0, v):
    return -spec.lam(x) * (v0 - np.einsum("...i,...i->...", spec.omega(x), v))


def invariants_JH(spec: ManifoldSpec):
    n = spec.dim

    def fn(y):
        _, x, v0, v = split_state(y, n)
        return np.stack([_momentum(spec, x, v0, v), _hamiltonian(spec, x, v0, v)], axis=-1)

    return fn


def _packed(state) -> np.ndarray:
    if isinstance(state, SpacetimeState):
        return state.as_array()
    return np.asarray(state, dtype=float)


def geodesic_rhs(spec: ManifoldSpec, state) -> np.ndarray:
    """Hamilton's equations of ``H`` in ``(t, x, v0, v_x)`` form.

    With ``q = v0 - <omega, v>`` the spatial acceleration is

        B^l = -Gamma^l_ij v^i v^j - q^2/2 h^lk d_k lam
              + lam q h^lk (d_k omega_i - d_i omega_k) v^i

    and ``v0' = <omega, B> + d_j omega_k v^j v^k - q d_j lam v^j / lam``, which
    is the derivative of ``v0 = q + <omega, v>`` with ``lam q`` held fixed.
    """
    y = _packed(state)
    n = spec.dim
    _, x, v0, v = split_state(y, n)
    h_inv = spec.h_inv(x)
    gam = _levi_civita(h_inv, spec.dh_at(x))
    w = spec.omega(x)
    dw = spec.domega_at(x)  # [k, i] = d_k w_i
    lam = spec.lam(x)
    dlam = spec.dlam_at(x)
    q = v0 - np.einsum("...i,...i->...", w, v)
    curl = dw - np.swapaxes(dw, -1, -2)  # [k, i] = d_k w_i - d_i w_k
    force = np.einsum("...ki,...i->...k", curl, v)
    B = (
        -np.einsum("...lij,...i,...j->...l", gam, v, v)
        + np.einsum("...lk,...k->...l", h_inv, (lam * q)[..., None] * force - 0.5 * (q * q)[..., None] * dlam)
    )
    dv0 = (
        np.einsum("...l,...l->...", w, B)
        + np.einsum("...jk,...j,...k->...", dw, v, v)
        - q * np.einsum("...j,...j->...", dlam, v) / lam
    )
    out = np.empty_like(y)
    out[..., 0] = v0
    out[..., 1 : n + 1] = v
    out[..., n + 1] = dv0
    out[..., n + 2 :] = B
    return out


def geodesic_rhs_christoffel(spec: ManifoldSpec, state, christoffel) -> np.ndarray:
    """Geodesic equation ``a^mu = -Gamma^mu_ab v^a v^b`` from given symbols."""
    y = _packed(state)
    n = spec.dim
    x = y[..., 1 : n + 1]
    vel = y[..., n + 1 :]
    acc = -np.einsum("...mab,...a,...b->...m", christoffel(spec, x), vel, vel)
    return np.concatenate([vel, acc], axis=-1)


class _CurveMixin:
    """Accessors shared by integrated and lifted trajectories."""

    @property
    def s_end(self) -> float:
        return self.dense.s_end

    def __call__(self, s) -> np.ndarray:
        return self.dense(s)

    def derivative(self, s) -> np.ndarray:
        return self.dense.derivative(s)

    def sample(self, count: int = 201):
        s = np.linspace(0.0, self.s_end, count)
        return s, self.dense(s)


@dataclass(frozen=True)
class TrajectoryM(_CurveMixin):
    """Dense geodesic on M with conservation diagnostics.

    ``exited`` is true when the curve stopped on the boundary at
    ``s_end``; ``grazing`` flags a nearly tangential exit.
    """

    spec: ManifoldSpec
    dense: DenseOutput
    status: str
    exited: bool
    grazing: bool
    drift_J: float
    drift_H: float
    J0: float
    H0: float
    rtol: float
    warned: bool = False
    steps: int = field(default=0)

    def state(self, s) -> SpacetimeState:
        return SpacetimeState.from_array(self.dense(s), float(s))

    def t(self, s):
        return self.dense(s)[..., 0]

    def x(self, s):
        return self.dense(s)[..., 1 : self.spec.dim + 1]

    def v0(self, s):
        return self.dense(s)[..., self.spec.dim + 1]

    def vx(self, s):
        return self.dense(s)[..., self.spec.dim + 2 :]

    @property
    def breakpoints(self):
        return self.dense.breakpoints


GRAZING_TOL = 1e-6


def default_horizon(spec: ManifoldSpec, x, v) -> np.ndarray:
    """Ten h-diameters divided by the initial spatial speed."""
    speed = np.sqrt(h_norm_sq(spec, x, v))
    return 10.0 * spec.h_diameter / np.maximum(speed, 1e-12)


def integrate_geodesic_batch(
    spec: ManifoldSpec,
    states,
    horizon=None,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-10,
    stop_at_boundary: bool = True,
    drift_tol: float = 1e-8,
    strict: bool = True,
) -> list:
    """Integrate many geodesics in one vectorized sweep.

    ``states`` is a sequence of :class:`SpacetimeState` or an array of packed
    rows.  With ``strict`` a failed row raises; otherwise its status is
    recorded on the returned trajectory.
    """
    if isinstance(states, SpacetimeState):
        states = [states]
    y0 = np.atleast_2d(np.array([_packed(s) for s in states]) if not isinstance(states, np.ndarray) else states)
    n = spec.dim
    _, x0, _, v = split_state(y0, n)
    _check_inside(spec, x0)
    if horizon is None:
        horizon = default_horizon(spec, x0, v)

    def rhs(y):
        return geodesic_rhs(spec, y)

    boundary = None
    if stop_at_boundary:

        def boundary(y):
            return spec.domain.b(y[..., 1 : n + 1])

    res = integrate_monitored(rhs, y0, horizon, invariants=invariants_JH(spec), rtol=rtol,
                              atol=atol, boundary=boundary, drift_tol=drift_tol)
    out = []
    for i in range(len(y0)):
        st = res.status[i]
        if strict:
            raise_for_status(st, f"(geodesic row {i})")
        if res.warned[i]:
            warnings.warn(
                f"conservation drift J={res.drift[i, 0]:.3g} H={res.drift[i, 1]:.3g} above target",
                ConservationWarning, stacklevel=2,
            )
        d = res.dense[i]
        exited = st == STATUS_EVENT
        grazing = False
        if exited:
            ye = d(d.s_end)
            gb = spec.domain.grad(ye[1 : n + 1])
            grazing = bool(abs(gb @ ye[n + 2 :]) < GRAZING_TOL)
        out.append(TrajectoryM(spec, d, st, exited, grazing, float(res.drift[i, 0]),
                               float(res.drift[i, 1]), float(res.initial[i, 0]),
                               float(res.initial[i, 1]), float(res.rtol[i]),
                               bool(res.warned[i]), d.n_steps))
    return out


def integrate_geodesic(
    spec: ManifoldSpec,
    state0,
    horizon: Optional[float] = None,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-10,
    stop_at_boundary: bool = True,
) -> TrajectoryM:
    """Integrate one geodesic until ``horizon`` or the first boundary exit.

    Parameters
    ----------
    spec : ManifoldSpec
    state0 : SpacetimeState or packed array
    horizon : float, optional
        Affine-parameter horizon; defaults to :func:`default_horizon`.
    rtol, atol : float
        Dormand-Prince tolerances.

    Returns
    -------
    TrajectoryM
        Dense trajectory.  Conserved-quantity drift above ``1e-8`` triggers
        up to two retries with tighter tolerances, then a
        :class:`ConservationWarning`.
    """
    return integrate_geodesic_batch(spec, [state0], horizon, rtol=rtol, atol=atol,
                                    stop_at_boundary=stop_at_boundary)[0]


def metric_quadratic(spec: ManifoldSpec, x, vel):
    """``g(vel, vel)`` through the assembled matrix (reference path)."""
    g = assemble_g(spec, x).g
    return np.einsum("...a,...ab,...b->...", vel, g, vel)


__all__ = [
    "SpacetimeState",
    "TrajectoryM",
    "hamiltonian_H",
    "momentum_J",
    "geodesic_rhs",
    "geodesic_rhs_christoffel",
    "integrate_geodesic",
    "integrate_geodesic_batch",
    "default_horizon",
    "STATUS_HORIZON",
]
