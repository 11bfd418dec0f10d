"""Lightlike geodesics at unit lapse and unit-speed magnetic geodesics.

With ``lam = 1`` a null geodesic normalized to ``J = -1`` projects to a
curve of unit h-speed solving the magnetic equation of ``(N, h, -d omega)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audit import (
    _symmetric_derivative,
    _tangent_directions,
    second_fundamental_form,
    signs_agree,
    spacetime_second_form,
)
from .errors import LambdaNotOne, MomentumMismatch, NotNull
from .flow import SpacetimeState, _hamiltonian, _momentum, integrate_geodesic_batch, split_state
from .manifold import ManifoldSpec, normal_data
from .reduction import MPSystem, MPTrajectory, mp_residual, project, reduce
from .scattering import BoundaryTangent, reconstruct_entry_state

NULL_TOL = 1e-10
LAMBDA_TOL = 1e-12
RHO_NULL = -1.0


def require_unit_lapse(spec: ManifoldSpec, per_dim: int = 10, n_boundary: int = 200) -> None:
    """Check ``lam == 1`` on a lattice and on boundary samples.

    Raises
    ------
    LambdaNotOne
    """
    pts = np.vstack([spec.domain.lattice(per_dim), spec.domain.boundary_samples(n_boundary)])
    dev = float(np.max(np.abs(spec.lam(pts) - 1.0)))
    if dev > LAMBDA_TOL:
        raise LambdaNotOne(f"max |lam - 1| = {dev:.3g} on {spec.name}")


def magnetic_system(spec: ManifoldSpec, check: bool = True) -> MPSystem:
    """``(N, h, -d omega)`` with the constant potential ``U = -1/2`` and energy 0."""
    if check:
        require_unit_lapse(spec)
    return reduce(spec, RHO_NULL, m=0.0)


def null_normalize(spec: ManifoldSpec, state, *, check_lapse: bool = True) -> SpacetimeState:
    """Rescale a null vector so that ``J = -1``; then ``|v_x|_h = 1``.

    Raises
    ------
    NotNull
        If ``|H| > 1e-10``.
    LambdaNotOne
    """
    if check_lapse:
        require_unit_lapse(spec)
    st = state if isinstance(state, SpacetimeState) else SpacetimeState.from_array(state)
    H = float(_hamiltonian(spec, st.x, st.v0, st.vx))
    if abs(H) > NULL_TOL:
        raise NotNull(f"H = {H:.3g} is not null")
    J = float(_momentum(spec, st.x, st.v0, st.vx))
    if J == 0.0:
        raise NotNull("J = 0: vector is not future/past directed null")
    a = RHO_NULL / J
    return SpacetimeState(st.t, st.x.copy(), a * st.v0, a * st.vx, st.s)


def null_state(spec: ManifoldSpec, x, direction, t: float = 0.0) -> SpacetimeState:
    """Normalized null state at ``x`` whose spatial velocity is ``direction``
    scaled to unit h-length."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.sqrt(d @ spec.h(x) @ d)
    v0 = 1.0 + float(spec.omega(x) @ d)  # -rho/lam + <omega, v> at rho=-1, lam=1
    return SpacetimeState(t, x.copy(), v0, d)


@dataclass
class NullProjection:
    trajectory: MPTrajectory
    residual: float
    speed_drift: float


def null_project(traj, *, tol: float = 1e-8, n_check: int = 101) -> NullProjection:
    """Project a normalized null geodesic to the magnetic system.

    Reports the magnetic-equation residual and the drift of ``|x'|_h`` from 1.

    Raises
    ------
    MomentumMismatch
        If ``J != -1`` or the projection is not unit speed within ``tol``.
    """
    mp = project(traj, RHO_NULL, tol=tol)
    system = magnetic_system(traj.spec, check=False)
    mp = MPTrajectory(system, mp.dense, mp.status, mp.exited, mp.grazing, mp.drift_E, mp.E0, mp.rtol)
    n = system.dim
    nodes = mp.dense.node_values()
    x, v = nodes[:, :n], nodes[:, n:]
    speed = np.sqrt(np.einsum("bi,bij,bj->b", v, system.h(x), v))
    drift = float(np.max(np.abs(speed - 1.0)))
    if drift > tol:
        raise MomentumMismatch(f"projected speed deviates from 1 by {drift:.3g}")
    s = np.linspace(0.0, mp.s_end, n_check)
    res = float(mp_residual(system, mp, s))
    return NullProjection(mp, res, drift)


@dataclass
class NullBatchRow:
    index: int
    entry: BoundaryTangent
    residual: float
    speed_drift: float
    exit_x: np.ndarray
    s_end: float


def null_batch(spec: ManifoldSpec, entries, *, rtol: float = 1e-11, atol: float = 1e-11) -> list:
    """Integrate normalized null geodesics from boundary entries (``m = 0``,
    ``rho = -1``) and project each one."""
    require_unit_lapse(spec)
    states = np.array([reconstruct_entry_state(spec, RHO_NULL, 0.0, e).as_array() for e in entries])
    trajs = integrate_geodesic_batch(spec, states, rtol=rtol, atol=atol)
    rows = []
    for i, (e, tr) in enumerate(zip(entries, trajs)):
        p = null_project(tr)
        _, x, _, _ = split_state(tr(tr.s_end), spec.dim)
        rows.append(NullBatchRow(i, e, p.residual, p.speed_drift, x, tr.s_end))
    return rows


@dataclass
class NullConvexityReport:
    points: np.ndarray
    directions: np.ndarray  # (P, D, n) h-unit tangents
    tangential: np.ndarray  # (P, D) |<omega, v>|
    symmetric: np.ndarray  # (P,) max |d^s omega|
    pi_M: np.ndarray  # (P, D)
    magnetic_margin: np.ndarray  # (P, D)
    applicable_mask: np.ndarray  # (P, D)
    tol: float

    @property
    def applicable(self) -> bool:
        return bool(np.any(self.applicable_mask))

    @property
    def status(self) -> str:
        return "applicable" if self.applicable else "Not Applicable"

    @property
    def max_deviation(self) -> float:
        m = self.applicable_mask
        if not np.any(m):
            return float("nan")
        return float(np.max(np.abs(self.pi_M[m] - self.magnetic_margin[m])))

    @property
    def signs_agree(self) -> bool:
        m = self.applicable_mask
        return signs_agree(self.pi_M[m], self.magnetic_margin[m])


def null_convexity(spec: ManifoldSpec, points=None, *, n_points: int = 200, n_dirs: int = 16,
                   tol: float = 1e-10) -> NullConvexityReport:
    """Compare ``Pi_M(v, v)`` for ``v = (1 + <omega, v_x>, v_x)`` with the
    magnetic margin ``Pi(v_x, v_x) - (Y v_x, nu~)_h`` of ``(N, h, -d omega)``.

    A sample is applicable when ``d^s omega`` vanishes on the domain (checked
    on a lattice) and ``|<omega, v_x>| <= tol`` at that sample.
    """
    require_unit_lapse(spec)
    system = magnetic_system(spec, check=False)
    if points is None:
        points = spec.domain.boundary_samples(n_points)
    pts = np.asarray(points, dtype=float)
    dirs = _tangent_directions(spec, pts, n_dirs)
    P = pts[:, None, :].repeat(dirs.shape[1], axis=1)
    inward = -normal_data(spec, pts)[0]
    pi = second_fundamental_form(system, P, dirs)
    yv = np.einsum("pkl,pdl->pdk", system.lorentz_force(pts), dirs)
    margin = pi - np.einsum("pdk,pkj,pj->pd", yv, spec.h(pts), inward)
    tang = np.abs(np.einsum("pi,pdi->pd", spec.omega(pts), dirs))
    v0 = 1.0 + np.einsum("pi,pdi->pd", spec.omega(pts), dirs)
    pi_M = spacetime_second_form(spec, P, np.concatenate([v0[..., None], dirs], axis=-1))
    sym_pts = np.abs(_symmetric_derivative(spec, pts)).max(axis=(-1, -2))
    sym_dom = float(np.abs(_symmetric_derivative(spec, spec.domain.lattice(10))).max())
    ok = (tang <= tol) & (sym_pts[:, None] <= 1e-8) & (sym_dom <= 1e-8)
    return NullConvexityReport(pts, dirs, tang, sym_pts, pi_M, margin, ok, tol)
