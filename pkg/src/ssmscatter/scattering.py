"""Boundary exits, boundary projections and the three scattering data.

For an entry at ``(t, x)`` on ``R x dN`` and exit at ``(s, y)`` after affine
time ``T`` the record stores the projected tangent data at both ends, ``T``,
the time shift ``t - s`` and the boundary action ``rho (t - s) - m^2 T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    GrazingExit,
    MomentumMismatch,
    NoExit,
    NoInwardSolution,
    NotOnBoundary,
)
from .flow import SpacetimeState, TrajectoryM, integrate_geodesic_batch
from .integrate import integrate_along
from .manifold import ManifoldSpec, assemble_g, normal_data
from .reduction import MPSystem, MPTrajectory, integrate_mp_batch, reduce


@dataclass(frozen=True)
class BoundaryTangent:
    """Projected tangent data at a boundary point.

    ``vt`` is ``-(v', d_t)_g`` on the spacetime side and ``None`` for MP data.
    """

    x: np.ndarray
    vx: np.ndarray
    t: Optional[float] = None
    vt: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "vx", np.asarray(self.vx, dtype=float))

    def as_row(self) -> list:
        row = []
        if self.t is not None:
            row.append(self.t)
        row.extend(self.x.tolist())
        if self.vt is not None:
            row.append(self.vt)
        row.extend(self.vx.tolist())
        return row


@dataclass(frozen=True)
class ScatteringRecord:
    entry: BoundaryTangent
    exit: BoundaryTangent
    T: float
    time_shift: float
    action: float
    rho: float
    m: float
    flags: tuple = field(default_factory=tuple)

    def parts_consistent(self, tol: float = 1e-9) -> bool:
        return abs(self.action - (self.rho * self.time_shift - self.m**2 * self.T)) <= tol

    def vector(self) -> np.ndarray:
        """``(y, w_t', w_x', T, t - s, A)`` as one flat array."""
        return np.concatenate([self.exit.x, [self.exit.vt if self.exit.vt is not None else np.nan],
                               self.exit.vx, [self.T, self.time_shift, self.action]])


@dataclass(frozen=True)
class MPScattering:
    entry: BoundaryTangent
    exit: BoundaryTangent
    tau: float
    exit_velocity: np.ndarray
    trajectory: MPTrajectory = field(repr=False, compare=False)


def _require_boundary(domain, x) -> None:
    x = np.asarray(x, dtype=float)
    if not np.all(domain.on_boundary(x)):
        raise NotOnBoundary(f"|b(x)| = {np.max(np.abs(domain.b(x))):.3g} exceeds tolerance")


def exit_time(traj) -> float:
    """First outward boundary crossing of an integrated trajectory.

    Raises
    ------
    NoExit
        The horizon was reached inside N.
    GrazingExit
        The crossing is tangential (``|<grad b, x'>| < 1e-6``).
    """
    if not traj.exited:
        raise NoExit("horizon reached before the boundary")
    if traj.grazing:
        raise GrazingExit("tangential boundary crossing")
    return float(traj.s_end)


def project_spatial(obj, x, v):
    """``v - (v, nu_x)_h nu_x`` for the outward unit normal ``nu_x``."""
    nu, _ = normal_data(obj, x)
    h = obj.h(x)
    c = np.einsum("...i,...ij,...j->...", v, h, nu)
    return v - c[..., None] * nu


def project_to_boundary_M(spec: ManifoldSpec, t: float, x, v) -> BoundaryTangent:
    """Orthogonal projection of ``v = (v0, v_x)`` onto ``T(R x dN)``.

    The unit exterior normal is ``nu = (<omega, nu_x>, nu_x)``; it is
    g-orthogonal to ``d_t`` so the time component of the projection equals
    ``-J(v)``.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    _require_boundary(spec.domain, x)
    nu_x, _ = normal_data(spec, x)
    nu = np.concatenate([[spec.omega(x) @ nu_x], nu_x])
    val = assemble_g(spec, x)
    vp = v - (v @ val.g @ nu) * nu
    vt = -float(vp @ val.g[:, 0])
    return BoundaryTangent(x, vp[1:], t=t, vt=vt)


def inward_velocity(obj, x, vx_prime, speed_sq):
    """``v_x = v_x' + c nu~`` with ``|v_x|_h^2 = speed_sq`` and ``c > 0``.

    Raises
    ------
    NoInwardSolution
        If ``speed_sq - |v_x'|_h^2 <= 0``.
    """
    nu, _ = normal_data(obj, x)
    h = obj.h(x)
    tang = np.einsum("...i,...ij,...j->...", vx_prime, h, vx_prime)
    c2 = speed_sq - tang
    if np.any(c2 <= 0):
        raise NoInwardSolution(f"normal component squared {np.min(c2):.3g} <= 0")
    return vx_prime - np.sqrt(c2)[..., None] * nu


def entry_tangent(spec: ManifoldSpec, rho: float, x, vx_prime, t: float = 0.0) -> BoundaryTangent:
    """Spacetime entry data with ``v_t' = -rho``."""
    x = np.asarray(x, dtype=float)
    vx_prime = project_spatial(spec, x, np.asarray(vx_prime, dtype=float))
    return BoundaryTangent(x, vx_prime, t=float(t), vt=-float(rho))


def reconstruct_entry_state(spec: ManifoldSpec, rho: float, m: float, entry: BoundaryTangent) -> SpacetimeState:
    """Inward timelike vector of mass ``m`` and momentum ``rho`` above ``entry``."""
    _require_boundary(spec.domain, entry.x)
    if entry.vt is not None and abs(entry.vt + rho) > 1e-10 * (1.0 + abs(rho)):
        raise MomentumMismatch(f"entry v_t' = {entry.vt} is incompatible with rho = {rho}")
    x = entry.x
    lam = float(spec.lam(x))
    vx = inward_velocity(spec, x, entry.vx, rho * rho / lam - m * m)
    v0 = -rho / lam + float(spec.omega(x) @ vx)
    return SpacetimeState(entry.t or 0.0, x, v0, vx)


def _record_from_trajectory(spec, rho, m, entry, traj: TrajectoryM) -> ScatteringRecord:
    T = exit_time(traj)
    n = spec.dim
    ye = traj.dense(T)
    exit_tan = project_to_boundary_M(spec, float(ye[0]), ye[1 : n + 1], ye[n + 1 :])
    shift = float(entry.t - ye[0])
    return ScatteringRecord(entry, exit_tan, T, shift, rho * shift - m * m * T, rho, m)


def scattering_rho_m(spec: ManifoldSpec, rho: float, m: float, entry: BoundaryTangent, *,
                     rtol: float = 1e-10, atol: float = 1e-10) -> ScatteringRecord:
    """Momentum-mass scattering of one entry by integrating on M.

    Parameters
    ----------
    spec : ManifoldSpec
    rho, m : float
        Momentum and mass.
    entry : BoundaryTangent
        Entry point on ``R x dN`` with projected data ``[v_t', v_x']``.

    Returns
    -------
    ScatteringRecord

    Raises
    ------
    NoInwardSolution, NoExit, GrazingExit
    """
    return scattering_rho_m_batch(spec, rho, m, [entry], rtol=rtol, atol=atol, strict=True)[0]


def scattering_rho_m_batch(spec, rho, m, entries, *, rtol=1e-10, atol=1e-10, strict=False):
    """Records for many entries; failures become ``None`` unless ``strict``."""
    states, keep, fails = [], [], {}
    for i, e in enumerate(entries):
        try:
            states.append(reconstruct_entry_state(spec, rho, m, e))
            keep.append(i)
        except (NoInwardSolution, NotOnBoundary, MomentumMismatch) as exc:
            if strict:
                raise
            fails[i] = exc
    out: list = [None] * len(entries)
    if states:
        trajs = integrate_geodesic_batch(spec, states, rtol=rtol, atol=atol, strict=strict)
        for i, tr in zip(keep, trajs):
            try:
                out[i] = _record_from_trajectory(spec, rho, m, entries[i], tr)
            except (NoExit, GrazingExit) as exc:
                if strict:
                    raise
                fails[i] = exc
    return out if strict else (out, fails)


def mp_entry_velocity(system: MPSystem, entry: BoundaryTangent, k: Optional[float] = None):
    _require_boundary(system.domain, entry.x)
    k = system.k if k is None else k
    return inward_velocity(system, entry.x, entry.vx, 2.0 * (k - float(system.U(entry.x))))


def _mp_result(system, entry, traj) -> MPScattering:
    tau = exit_time(traj)
    n = system.dim
    ye = traj.dense(tau)
    w = ye[n:]
    wp = project_spatial(system, ye[:n], w)
    return MPScattering(entry, BoundaryTangent(ye[:n], wp), tau, w, traj)


def scattering_mp(system: MPSystem, entry: BoundaryTangent, *, rtol: float = 1e-10,
                  atol: float = 1e-10) -> MPScattering:
    """MP scattering at the system's energy level ``k``.

    The inward velocity has tangential part ``entry.vx`` and speed
    ``sqrt(2 (k - U))``; the exit velocity is projected onto ``T dN``.
    """
    return scattering_mp_batch(system, [entry], rtol=rtol, atol=atol, strict=True)[0]


def scattering_mp_batch(system, entries, *, rtol=1e-10, atol=1e-10, strict=False):
    ys, keep, fails = [], [], {}
    for i, e in enumerate(entries):
        try:
            ys.append(np.concatenate([e.x, mp_entry_velocity(system, e)]))
            keep.append(i)
        except (NoInwardSolution, NotOnBoundary) as exc:
            if strict:
                raise
            fails[i] = exc
    out: list = [None] * len(entries)
    if ys:
        trajs = integrate_mp_batch(system, np.array(ys), rtol=rtol, atol=atol, strict=strict)
        for i, tr in zip(keep, trajs):
            try:
                out[i] = _mp_result(system, entries[i], tr)
            except (NoExit, GrazingExit) as exc:
                if strict:
                    raise
                fails[i] = exc
    return out if strict else (out, fails)


def time_free_action(system: MPSystem, traj, k: float, s_end: Optional[float] = None) -> float:
    """``int_0^T (|x'|_h^2/2 + k - alpha(x') - U) ds`` along an MP curve."""
    n = system.dim
    s_end = traj.s_end if s_end is None else s_end
    bp = np.asarray(traj.breakpoints, dtype=float)
    bp = np.append(bp[bp < s_end], s_end)

    def integrand(s):
        y = traj(s)
        x, v = y[..., :n], y[..., n:]
        return (0.5 * np.einsum("...i,...ij,...j->...", v, system.h(x), v) + k
                - np.einsum("...i,...i->...", system.alpha(x), v) - system.U(x))

    return float(integrate_along(integrand, bp, order=10)[-1])


def action_boundary(system: MPSystem, m: float, x, y, **shoot_kw) -> float:
    """Boundary action between two boundary points at energy ``-m^2/2``.

    Evaluates the time-free action along the connecting MP geodesic found by
    shooting; the least value is returned when several are found.  ``x = y``
    gives the limit value 0.

    Raises
    ------
    ShootingFailed
    """
    from .audit import shoot_connect  # shooting lives with the simplicity audit

    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _require_boundary(system.domain, x)
    _require_boundary(system.domain, y)
    if np.linalg.norm(x - y) < 1e-14:
        return 0.0
    k = -0.5 * m * m
    sys_k = system.with_energy(k)
    res = shoot_connect(sys_k, x, y, k, **shoot_kw)
    values = [time_free_action(sys_k, sol.trajectory, k, sol.time) for sol in res.solutions]
    return float(min(values))


def reconstruct_S_rho_m(system: MPSystem, m: float, mp: MPScattering, action: float,
                        entry: BoundaryTangent) -> ScatteringRecord:
    """Spacetime record rebuilt from MP scattering data and the boundary action.

    The exit time coordinate follows from ``A = rho (t - s) - m^2 T``; the
    exit tangent is the projection of the lifted exit velocity.  Nothing is
    integrated on M.
    """
    spec, rho = system.base_spec, system.rho
    T = mp.tau
    s = entry.t - (action + m * m * T) / rho
    y = mp.exit.x
    w = mp.exit_velocity
    w0 = -rho / float(spec.lam(y)) + float(spec.omega(y) @ w)
    exit_tan = project_to_boundary_M(spec, s, y, np.concatenate([[w0], w]))
    return ScatteringRecord(entry, exit_tan, T, entry.t - s, action, rho, m)


@dataclass
class EquivalenceRow:
    index: int
    direct: Optional[ScatteringRecord]
    rebuilt: Optional[ScatteringRecord]
    action_integral: float
    deviation: float
    action_deviation: float
    flag: str = "ok"


def equivalence_batch(spec: ManifoldSpec, rho: float, m: float, entries, *, rtol=1e-10,
                      atol=1e-10) -> list:
    """Direct records vs records rebuilt from MP scattering + boundary action."""
    direct, fails_m = scattering_rho_m_batch(spec, rho, m, entries, rtol=rtol, atol=atol)
    system = reduce(spec, rho, m)
    mps, fails_mp = scattering_mp_batch(system, entries, rtol=rtol, atol=atol)
    rows = []
    k = -0.5 * m * m
    for i in range(len(entries)):
        d, r = direct[i], mps[i]
        if d is None or r is None:
            err = fails_m.get(i) or fails_mp.get(i)
            rows.append(EquivalenceRow(i, d, None, np.nan, np.nan, np.nan, type(err).__name__))
            continue
        A = time_free_action(system, r.trajectory, k, r.tau)
        rebuilt = reconstruct_S_rho_m(system, m, r, A, entries[i])
        dev = float(np.max(np.abs(d.vector() - rebuilt.vector())))
        rows.append(EquivalenceRow(i, d, rebuilt, A, dev, abs(A - d.action)))
    return rows


def sample_entries(spec: ManifoldSpec, rho: float, m: float, count: int, rng, *,
                   max_fraction: float = 0.9, t: float = 0.0) -> list:
    """Random admissible entries: uniform boundary points, tangential speed a
    random fraction of the largest realizable one."""
    n = spec.dim
    out = []
    for _ in range(count):
        d = rng.normal(size=n)
        x = spec.domain.boundary_point(d)
        nu, _ = normal_data(spec, x)
        h = spec.h(x)
        vmax2 = rho * rho / float(spec.lam(x)) - m * m
        if vmax2 <= 0:
            raise NoInwardSolution("rho outside the admissible band at a boundary point")
        tang = rng.normal(size=n)
        tang = tang - (tang @ h @ nu) * nu
        tang = tang / np.sqrt(tang @ h @ tang)
        frac = rng.uniform(-max_fraction, max_fraction)
        out.append(entry_tangent(spec, rho, x, frac * np.sqrt(vmax2) * tang, t))
    return out
