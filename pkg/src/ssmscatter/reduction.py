"""Reduced magnetic-potential (MP) system at fixed momentum.

An :class:`MPSystem` is a Riemannian metric ``h`` on N together with a
1-form ``alpha`` (magnetic potential, field ``d alpha``) and a potential
``U``.  Its geodesics solve ``D_s x' = Y x' - grad U`` with the Lorentz force
``(Y u, w)_h = d alpha(u, w)``.  Reducing a stationary spacetime at momentum
``rho`` gives ``alpha = rho * omega`` and ``U = rho^2 / (-2 lam)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConservationWarning, EnergyMismatch, MomentumMismatch
from .fields import derivative
from .flow import TrajectoryM, _momentum, split_state
from .integrate import (
    STATUS_EVENT,
    DenseOutput,
    integrate_along,
    integrate_monitored,
    integrate_partial,
    raise_for_status,
)
from .manifold import Domain, ManifoldSpec, _levi_civita, inverse

MASS_ENERGY_TOL = 1e-9


@dataclass(frozen=True)
class MPSystem:
    """``(N, h, d alpha, U)`` with optional energy level ``k``.

    ``base_spec`` and ``rho`` are set when the system comes from
    :func:`reduce`; lifting back to spacetime needs them.
    """

    dim: int
    domain: Domain
    h: object
    alpha: object
    U: object
    dh: Optional[object] = None
    dalpha: Optional[object] = None
    dU: Optional[object] = None
    k: Optional[float] = None
    rho: Optional[float] = None
    base_spec: Optional[ManifoldSpec] = field(default=None, compare=False)
    name: str = "mp"

    def h_inv(self, x):
        return inverse(self.h(x))

    def dh_at(self, x):
        return derivative(self.h, self.dh, x)

    def dalpha_at(self, x):
        return derivative(self.alpha, self.dalpha, x)

    def dU_at(self, x):
        return derivative(self.U, self.dU, x)

    def magnetic_form(self, x):
        """``Omega_ij = d_i alpha_j - d_j alpha_i``."""
        da = self.dalpha_at(x)
        return da - np.swapaxes(da, -1, -2)

    def lorentz_force(self, x):
        """Matrix ``Y`` with ``(Y u, w)_h = Omega(u, w)``, i.e. ``Y = -h^-1 Omega``."""
        return -np.einsum("...kl,...li->...ki", self.h_inv(x), self.magnetic_form(x))

    def energy(self, x, v):
        return 0.5 * np.einsum("...i,...ij,...j->...", v, self.h(x), v) + self.U(x)

    def speed_at_energy(self, x, k: Optional[float] = None):
        k = self.k if k is None else k
        return np.sqrt(np.maximum(2.0 * (k - self.U(x)), 0.0))

    def with_energy(self, k: float) -> "MPSystem":
        return replace(self, k=float(k))


@dataclass(frozen=True)
class ReducedState:
    x: np.ndarray
    vx: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "vx", np.asarray(self.vx, dtype=float))

    def as_array(self):
        return np.concatenate([self.x, self.vx])

    @classmethod
    def from_array(cls, y):
        y = np.asarray(y, dtype=float)
        n = len(y) // 2
        return cls(y[:n].copy(), y[n:].copy())


def reduce(spec: ManifoldSpec, rho: float, m: Optional[float] = None) -> MPSystem:
    """MP system ``(N, h, rho d omega, rho^2 / (-2 lam))`` at momentum ``rho``.

    When ``m`` is given the energy level is set to ``k = -m^2/2``.
    """
    rho = float(rho)

    def alpha(x):
        return rho * spec.omega(x)

    def dalpha(x):
        return rho * spec.domega_at(x)

    def U(x):
        return rho * rho / (-2.0 * spec.lam(x))

    def dU(x):
        lam = spec.lam(x)
        return (rho * rho / (2.0 * lam * lam))[..., None] * spec.dlam_at(x)

    k = None if m is None else -0.5 * float(m) ** 2
    return MPSystem(spec.dim, spec.domain, spec.h, alpha, U, spec.dh, dalpha, dU,
                    k=k, rho=rho, base_spec=spec, name=f"{spec.name}@rho={rho:g}")


def _packed(rstate):
    if isinstance(rstate, ReducedState):
        return rstate.as_array()
    return np.asarray(rstate, dtype=float)


def mp_rhs(system: MPSystem, rstate) -> np.ndarray:
    """``x'' = -Gamma(x', x') + Y x' - h^-1 dU``."""
    y = _packed(rstate)
    n = system.dim
    x, v = y[..., :n], y[..., n:]
    h_inv = system.h_inv(x)
    gam = _levi_civita(h_inv, system.dh_at(x))
    omega_form = system.magnetic_form(x)
    # (Y v)^k = h^kl Omega_il v^i
    yv = np.einsum("...kl,...il,...i->...k", h_inv, omega_form, v)
    acc = (-np.einsum("...lij,...i,...j->...l", gam, v, v) + yv
           - np.einsum("...kl,...l->...k", h_inv, system.dU_at(x)))
    return np.concatenate([v, acc], axis=-1)


@dataclass(frozen=True)
class MPTrajectory:
    """Curve ``s -> (x, v)`` on TN with energy diagnostics."""

    system: MPSystem
    dense: object
    status: str = "horizon"
    exited: bool = False
    grazing: bool = False
    drift_E: float = 0.0
    E0: float = float("nan")
    rtol: float = 1e-10
    warned: bool = False

    @property
    def s_end(self) -> float:
        return self.dense.s_end

    @property
    def breakpoints(self):
        return self.dense.breakpoints

    def __call__(self, s):
        return self.dense(s)

    def derivative(self, s):
        return self.dense.derivative(s)

    def x(self, s):
        return self.dense(s)[..., : self.system.dim]

    def vx(self, s):
        return self.dense(s)[..., self.system.dim :]

    def state(self, s) -> ReducedState:
        return ReducedState.from_array(self.dense(s))


def _energy_invariant(system):
    n = system.dim

    def fn(y):
        return system.energy(y[..., :n], y[..., n:])[..., None]

    return fn


def integrate_mp_batch(
    system: MPSystem,
    rstates,
    horizon=None,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-10,
    stop_at_boundary: bool = True,
    strict: bool = True,
    drift_tol: float = 1e-8,
) -> list:
    """Vectorized MP integration; see :func:`integrate_mp`."""
    if isinstance(rstates, ReducedState):
        rstates = [rstates]
    y0 = rstates if isinstance(rstates, np.ndarray) else np.array([_packed(r) for r in rstates])
    y0 = np.atleast_2d(y0)
    n = system.dim
    if horizon is None:
        speed = np.sqrt(np.einsum("...i,...ij,...j->...", y0[:, n:], system.h(y0[:, :n]), y0[:, n:]))
        diam = system.base_spec.h_diameter if system.base_spec is not None else 2.0 * system.domain.extent
        horizon = 10.0 * diam / np.maximum(speed, 1e-12)

    boundary = None
    if stop_at_boundary:

        def boundary(y):
            return system.domain.b(y[..., :n])

    res = integrate_monitored(lambda y: mp_rhs(system, y), y0, horizon,
                              invariants=_energy_invariant(system), rtol=rtol, atol=atol,
                              boundary=boundary, drift_tol=drift_tol)
    out = []
    for i in range(len(y0)):
        st = res.status[i]
        if strict:
            raise_for_status(st, f"(MP row {i})")
        if res.warned[i]:
            warnings.warn(f"energy drift {res.drift[i, 0]:.3g} above target",
                          ConservationWarning, stacklevel=2)
        d = res.dense[i]
        exited = st == STATUS_EVENT
        grazing = False
        if exited:
            ye = d(d.s_end)
            gb = system.domain.grad(ye[:n])
            grazing = bool(abs(gb @ ye[n:]) < 1e-6)
        out.append(MPTrajectory(system, d, st, exited, grazing, float(res.drift[i, 0]),
                                float(res.initial[i, 0]), float(res.rtol[i]), bool(res.warned[i])))
    return out


def integrate_mp(
    system: MPSystem,
    rstate0,
    horizon: Optional[float] = None,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-10,
    stop_at_boundary: bool = True,
) -> MPTrajectory:
    """Integrate one MP geodesic until ``horizon`` or the boundary exit.

    The energy ``E = |v|_h^2 / 2 + U`` is monitored exactly as ``H`` and ``J``
    are for spacetime geodesics.
    """
    return integrate_mp_batch(system, [rstate0], horizon, rtol=rtol, atol=atol,
                              stop_at_boundary=stop_at_boundary)[0]


def _slice_dense(d: DenseOutput, idx) -> DenseOutput:
    return DenseOutput(d.s0, d.h, d.rcont[:, :, idx], d.s_end)


def project(traj: TrajectoryM, rho: float, *, tol: float = 1e-8) -> MPTrajectory:
    """Spatial part ``(x, v_x)`` of a spacetime geodesic with momentum ``rho``.

    Raises
    ------
    MomentumMismatch
        If ``|J - rho| > tol * (1 + |rho|)`` at any accepted step.
    """
    spec = traj.spec
    n = spec.dim
    nodes = traj.dense.node_values()
    _, x, v0, v = split_state(nodes, n)
    J = _momentum(spec, x, v0, v)
    dev = float(np.max(np.abs(J - rho)))
    if dev > tol * (1.0 + abs(rho)):
        raise MomentumMismatch(f"|J - rho| = {dev:.3g} along trajectory")
    system = reduce(spec, rho)
    idx = np.r_[1 : n + 1, n + 2 : 2 * n + 2]
    sliced = _slice_dense(traj.dense, idx)
    E = system.energy(sliced.node_values()[:, :n], sliced.node_values()[:, n:])
    return MPTrajectory(system, sliced, traj.status, traj.exited, traj.grazing,
                        float(np.max(np.abs(E - E[0]))), float(E[0]), traj.rtol)


class LiftedDense:
    """Dense spacetime curve over an MP trajectory.

    ``t(s) = t0 + int_0^s (-rho/lam + <omega, x'>) du`` is evaluated with
    Gauss-Legendre quadrature on each accepted step of the MP trajectory.
    """

    def __init__(self, spec: ManifoldSpec, rho: float, mp_dense, t0: float, order: int = 8):
        self.spec = spec
        self.rho = float(rho)
        self.mp = mp_dense
        self.t0 = float(t0)
        self.order = order
        self._bp = np.asarray(mp_dense.breakpoints, dtype=float)
        self._cum = integrate_along(self._tdot, self._bp, order=order)

    def _tdot(self, s):
        y = self.mp(s)
        n = self.spec.dim
        x, v = y[..., :n], y[..., n:]
        return -self.rho / self.spec.lam(x) + np.einsum("...i,...i->...", self.spec.omega(x), v)

    @property
    def s_end(self) -> float:
        return self.mp.s_end

    @property
    def breakpoints(self):
        return self._bp

    def t(self, s):
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(self._bp, s, side="right") - 1, 0, len(self._bp) - 2)
        a = self._bp[idx]
        return self.t0 + self._cum[idx] + integrate_partial(self._tdot, a, s, order=self.order)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        y = self.mp(s)
        n = self.spec.dim
        x, v = y[..., :n], y[..., n:]
        v0 = self._tdot(s)
        return np.concatenate([self.t(s)[..., None], x, v0[..., None], v], axis=-1)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        y = self.mp(s)
        dy = self.mp.derivative(s)
        n = self.spec.dim
        x, v = y[..., :n], y[..., n:]
        a = dy[..., n:]
        lam = self.spec.lam(x)
        dlam = self.spec.dlam_at(x)
        dv0 = (self.rho * np.einsum("...k,...k->...", dlam, v) / lam**2
               + np.einsum("...ki,...k,...i->...", self.spec.domega_at(x), v, v)
               + np.einsum("...i,...i->...", self.spec.omega(x), a))
        v0 = self._tdot(s)
        return np.concatenate([v0[..., None], v, dv0[..., None], a], axis=-1)

    def node_values(self):
        return self(self._bp)


def lift(system: MPSystem, mp_traj: MPTrajectory, t0: float = 0.0) -> TrajectoryM:
    """Spacetime geodesic over an MP geodesic of a reduced system.

    ``t`` follows from holding the momentum at ``rho``; the result is a
    :class:`TrajectoryM` whose dense output is evaluated by quadrature.
    """
    if system.base_spec is None or system.rho is None:
        raise ValueError("lift needs a system produced by reduce()")
    spec, rho = system.base_spec, system.rho
    dense = LiftedDense(spec, rho, mp_traj.dense, t0)
    n = spec.dim
    nodes = dense.node_values()
    _, x, v0, v = split_state(nodes, n)
    J = _momentum(spec, x, v0, v)
    lam = spec.lam(x)
    q = v0 - np.einsum("...i,...i->...", spec.omega(x), v)
    H = 0.5 * (-lam * q * q + np.einsum("...i,...ij,...j->...", v, spec.h(x), v))
    return TrajectoryM(spec, dense, mp_traj.status, mp_traj.exited, mp_traj.grazing,
                       float(np.max(np.abs(J - J[0]))), float(np.max(np.abs(H - H[0]))),
                       float(J[0]), float(H[0]), mp_traj.rtol)


def mass_energy_check(system: MPSystem, rstate, m: float, *, tol: float = MASS_ENERGY_TOL):
    """``(ok, residual)`` with ``residual = |E + m^2/2|``.

    Equivalent to the mass identity ``rho^2/(-lam) + |v|_h^2 = -m^2``.
    """
    y = _packed(rstate)
    n = system.dim
    res = np.abs(system.energy(y[..., :n], y[..., n:]) + 0.5 * m * m)
    return res <= tol, res


class _RescaledDense:
    def __init__(self, dense, rho: float, s_in_end: float):
        self.inner = dense
        self.rho = float(rho)
        self.offset = 0.0 if rho > 0 else float(s_in_end)
        self.s_end = float(s_in_end) / abs(self.rho)
        self.n = dense.dim if hasattr(dense, "dim") else None

    def _map(self, y):
        n = y.shape[-1] // 2
        out = y.copy()
        out[..., n:] *= self.rho
        return out

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return self._map(self.inner(self.offset + self.rho * s))

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        d = self.inner.derivative(self.offset + self.rho * s)
        n = d.shape[-1] // 2
        out = d * self.rho
        out[..., n:] *= self.rho
        return out

    @property
    def breakpoints(self):
        bp = (np.asarray(self.inner.breakpoints) - self.offset) / self.rho
        return np.sort(bp)

    def node_values(self):
        return self(self.breakpoints)


def rescale_momentum(mp_traj: MPTrajectory, rho: float, m: Optional[float] = None,
                     *, tol: float = 1e-8) -> MPTrajectory:
    """Reparametrize a unit-momentum MP geodesic to momentum ``rho``.

    ``zeta(tau) = sigma(s0 + rho * tau)`` with ``s0 = 0`` for ``rho > 0`` and
    ``s0`` the final parameter for ``rho < 0`` (the curve is then traversed
    backwards, which is what the sign of the magnetic term requires).

    Raises
    ------
    EnergyMismatch
        If ``m`` is given and the input energy differs from ``-m^2/(2 rho^2)``.
    """
    unit = mp_traj.system
    spec = unit.base_spec
    if m is not None:
        target = -0.5 * m * m / (rho * rho)
        n = unit.dim
        y = mp_traj.dense.node_values()
        E = unit.energy(y[:, :n], y[:, n:])
        if np.max(np.abs(E - target)) > tol * (1.0 + abs(target)):
            raise EnergyMismatch(f"energy {E[0]:.6g} != {target:.6g}")
    if spec is not None:
        system = reduce(spec, rho, m)
    else:
        system = replace(unit, alpha=lambda x: rho * unit.alpha(x),
                         dalpha=lambda x: rho * unit.dalpha_at(x),
                         U=lambda x: rho * rho * unit.U(x), dU=lambda x: rho * rho * unit.dU_at(x),
                         rho=rho, k=None if m is None else -0.5 * m * m)
    dense = _RescaledDense(mp_traj.dense, rho, mp_traj.s_end)
    return MPTrajectory(system, dense, mp_traj.status, mp_traj.exited, mp_traj.grazing,
                        mp_traj.drift_E * rho * rho, mp_traj.E0 * rho * rho, mp_traj.rtol)


def mp_residual(system: MPSystem, curve, s) -> np.ndarray:
    """Sup-norm residual of the MP equation along ``curve`` at parameters ``s``."""
    y = curve(s)
    dy = curve.derivative(s)
    return np.max(np.abs(dy - mp_rhs(system, y)))
