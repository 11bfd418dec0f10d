"""Admissibility and simplicity diagnostics.

Covers the momentum band ``lam < rho^2/m^2``, hyperbolic angles, strict
MP-convexity of the boundary and its spacetime counterpart, and a
multistart shooting audit of the MP exponential map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AngleUndefined, DegenerateBoundary, LeftDomain, NotSimple, ShootingFailed
from .integrate import dopri5, raise_for_status, STATUS_HORIZON
from .manifold import (
    ManifoldSpec,
    _levi_civita,
    assemble_g,
    christoffel_g,
    normal_data,
    outward_normal_derivative,
    tangent_basis,
)
from .reduction import MPSystem, MPTrajectory, integrate_mp, mp_rhs, reduce

# -- momentum band and hyperbolic angle --------------------------------------


@dataclass(frozen=True)
class AdmissibilityReport:
    rho: Optional[float]
    m: float
    A: float
    B: float

    @property
    def threshold(self) -> float:
        """Excluded radius ``m sqrt(B)`` of the momentum band."""
        return self.m * np.sqrt(self.B)

    @property
    def band_ok(self) -> bool:
        return self.rho is not None and abs(self.rho) > self.threshold

    @property
    def margin(self) -> float:
        return self.rho**2 / self.m**2 - self.B if self.rho is not None else float("nan")

    def describe(self) -> str:
        r = self.threshold
        return f"(-inf, {-r:.6g}) U ({r:.6g}, inf)"


def admissible_band(spec: ManifoldSpec, m: float, rho: Optional[float] = None) -> AdmissibilityReport:
    """Sampled ``A = min lam`` and ``B = max lam``; admissible iff ``|rho| > m sqrt(B)``."""
    if m <= 0:
        raise ValueError("mass must be positive")
    A, B = spec.lambda_range
    return AdmissibilityReport(rho, float(m), A, B)


def hyperbolic_angle(spec: ManifoldSpec, x, rho: float, m: float):
    """``phi = arccosh(|rho| / (m sqrt(lam(x))))`` and the timecone case.

    The case is ``"same"`` for ``rho < 0`` (velocity and ``d_t`` in the same
    timecone) and ``"opposite"`` otherwise.

    Raises
    ------
    AngleUndefined
        If ``|rho| <= m sqrt(lam(x))``.
    """
    lam = spec.lam(np.asarray(x, dtype=float))
    ratio = abs(rho) / (m * np.sqrt(lam))
    if np.any(ratio <= 1.0):
        raise AngleUndefined("|rho| <= m sqrt(lam)")
    return np.arccosh(ratio), ("same" if rho < 0 else "opposite")


def direct_hyperbolic_angle(spec: ManifoldSpec, x, vel):
    """Angle between a timelike ``vel`` and ``d_t`` from g-inner products."""
    g = assemble_g(spec, x).g
    vv = np.einsum("...a,...ab,...b->...", vel, g, vel)
    vt = np.einsum("...a,...a->...", vel, g[..., 0])
    tt = g[..., 0, 0]
    return np.arccosh(np.abs(vt) / np.sqrt(vv * tt))


# -- second fundamental form and convexity -----------------------------------


def second_fundamental_form(obj, x, v):
    """``Pi(v, v) = (nabla_v nu, v)_h`` with ``nu`` the outward unit normal.

    Evaluated as ``-Hess_h b(v, v) / |db|_h``; the unit circle gives ``+1``
    for unit tangents.
    """
    x = np.asarray(x, dtype=float)
    db = obj.domain.grad(x)
    hb = obj.domain.hess(x)
    h_inv = obj.h_inv(x)
    gam = _levi_civita(h_inv, obj.dh_at(x))
    norm = np.sqrt(np.einsum("...i,...ij,...j->...", db, h_inv, db))
    if np.any(norm < 1e-8):
        raise DegenerateBoundary("|db|_h < 1e-8")
    hess = hb - np.einsum("...kij,...k->...ij", gam, db)
    return -np.einsum("...i,...ij,...j->...", v, hess, v) / norm


def _tangent_directions(obj, x, n_dirs: int):
    """h-unit tangent directions at boundary points, shape ``(P, D, n)``."""
    basis = tangent_basis(obj, x)  # (P, n-1, n)
    if basis.shape[-2] == 1:
        e = basis[:, 0, :]
        return np.stack([e, -e], axis=1)
    th = 2 * np.pi * np.arange(n_dirs) / n_dirs
    if basis.shape[-2] == 2:
        coef = np.stack([np.cos(th), np.sin(th)], axis=-1)
    else:
        rng = np.random.default_rng(0)
        coef = rng.normal(size=(n_dirs, basis.shape[-2]))
        coef /= np.linalg.norm(coef, axis=-1, keepdims=True)
    return np.einsum("dj,pjn->pdn", coef, basis)


@dataclass
class ConvexityReport:
    points: np.ndarray
    directions: np.ndarray  # energy-level tangent vectors, (P, D, n)
    margins: np.ndarray  # (P, D)
    pi: np.ndarray
    force_term: np.ndarray
    potential_term: np.ndarray

    @property
    def min_margin(self) -> float:
        return float(np.nanmin(self.margins))

    @property
    def convex(self) -> bool:
        return self.min_margin > 0


def mp_convexity(system: MPSystem, points=None, *, n_points: int = 200, n_dirs: int = 16,
                 k: Optional[float] = None) -> ConvexityReport:
    """Margins ``Pi(xi, xi) - (Y xi, nu~)_h + dU(nu~)`` over the energy sphere.

    ``xi`` ranges over tangent vectors with ``|xi|_h^2 = 2 (k - U)``; the
    boundary is strictly MP-convex iff every margin is positive.  Points
    where ``U >= k`` carry no such vectors and yield ``nan``.
    """
    k = system.k if k is None else k
    if points is None:
        points = system.domain.boundary_samples(n_points)
    points = np.asarray(points, dtype=float)
    dirs = _tangent_directions(system, points, n_dirs)
    speed2 = 2.0 * (k - system.U(points))
    speed = np.sqrt(np.where(speed2 > 0, speed2, np.nan))
    xi = dirs * speed[:, None, None]
    P = points[:, None, :].repeat(xi.shape[1], axis=1)
    nu, _ = normal_data(system, points)
    inward = -nu
    h = system.h(points)
    pi = second_fundamental_form(system, P, xi)
    yxi = np.einsum("pkl,pdl->pdk", system.lorentz_force(points), xi)
    force = np.einsum("pdk,pkj,pj->pd", yxi, h, inward)
    pot = np.einsum("pi,pi->p", system.dU_at(points), inward)[:, None] * np.ones_like(force)
    return ConvexityReport(points, xi, pi - force + pot, pi, force, pot)


def spacetime_second_form(spec: ManifoldSpec, x, vel):
    """``(nabla_v nu, v)_g`` on ``R x dN`` for spacetime vectors ``vel``.

    ``nu = (<omega, nu_x>, nu_x)`` is extended off the boundary through the
    normalized gradient of ``b``; only tangential derivatives enter.
    """
    x = np.asarray(x, dtype=float)
    n = spec.dim
    nu_x, _ = normal_data(spec, x)
    dnu_x = outward_normal_derivative(spec, x)  # [k, i] = d_k nu^i
    w = spec.omega(x)
    dw = spec.domega_at(x)
    nu = np.concatenate([np.einsum("...i,...i->...", w, nu_x)[..., None], nu_x], axis=-1)
    dnu = np.zeros(x.shape[:-1] + (n + 1, n + 1))  # [alpha, mu] = d_alpha nu^mu
    dnu[..., 1:, 0] = np.einsum("...ki,...i->...k", dw, nu_x) + np.einsum("...i,...ki->...k", w, dnu_x)
    dnu[..., 1:, 1:] = dnu_x
    G = christoffel_g(spec, x)
    cov = np.einsum("...a,...am->...m", vel, dnu) + np.einsum("...mab,...a,...b->...m", G, vel, nu)
    g = assemble_g(spec, x, check=False).g
    return np.einsum("...m,...mn,...n->...", cov, g, vel)


@dataclass
class BridgeReport:
    points: np.ndarray
    tangential: np.ndarray  # (P, D) |<omega, v_x>|
    symmetric_residual: np.ndarray  # (P, D) <d^s rho omega, nu~ (x) v> - dU(nu~)
    pi_M: np.ndarray  # (P, D)
    mp_margin: np.ndarray  # (P, D)
    applicable_mask: np.ndarray
    tol: float = 1e-10

    @property
    def applicable(self) -> bool:
        return bool(np.all(self.applicable_mask))

    @property
    def symmetric_hypothesis(self) -> bool:
        return bool(np.all(np.abs(self.symmetric_residual) <= 1e-8))

    @property
    def max_deviation(self) -> float:
        m = self.applicable_mask
        if not np.any(m):
            return float("nan")
        return float(np.max(np.abs(self.pi_M[m] - self.mp_margin[m])))

    @property
    def signs_agree(self) -> bool:
        m = self.applicable_mask
        return signs_agree(self.pi_M[m], self.mp_margin[m])

    @property
    def status(self) -> str:
        return "applicable" if self.applicable else "not-applicable"


def signs_agree(a, b, zero_tol: float = 1e-8) -> bool:
    """Elementwise sign agreement; values within ``zero_tol`` of zero count as
    zero, where the sign is undefined."""
    sa = np.where(np.abs(a) <= zero_tol, 0.0, np.sign(a))
    sb = np.where(np.abs(b) <= zero_tol, 0.0, np.sign(b))
    return bool(np.all(sa == sb))


def _symmetric_derivative(spec, x):
    """``(d^s omega)_ij = (nabla_i omega_j + nabla_j omega_i) / 2`` w.r.t. h."""
    dw = spec.domega_at(x)
    gam = _levi_civita(spec.h_inv(x), spec.dh_at(x))
    cov = dw - np.einsum("...lij,...l->...ij", gam, spec.omega(x))
    return 0.5 * (cov + np.swapaxes(cov, -1, -2))


def lorentzian_convexity_bridge(spec: ManifoldSpec, rho: float, m: float, points=None, *,
                                n_points: int = 200, n_dirs: int = 16,
                                tol: float = 1e-10) -> BridgeReport:
    """Compare ``Pi_M(v, v)`` for ``v = (-rho/lam + <omega, v_x>, v_x)`` with the
    MP-convexity margin at energy ``-m^2/2``.

    A sample is applicable when ``|<omega, v_x>| <= tol``; there the two
    quantities coincide.  The symmetric-derivative condition is evaluated and
    reported as well.
    """
    system = reduce(spec, rho, m)
    rep = mp_convexity(system, points, n_points=n_points, n_dirs=n_dirs)
    pts = rep.points
    xi = rep.directions
    P = pts[:, None, :].repeat(xi.shape[1], axis=1)
    w = spec.omega(pts)
    tang = np.abs(np.einsum("pi,pdi->pd", w, xi))
    v0 = -rho / spec.lam(P) + np.einsum("pdi,pdi->pd", spec.omega(P), xi)
    vel = np.concatenate([v0[..., None], xi], axis=-1)
    pi_M = spacetime_second_form(spec, P, vel)
    nu, _ = normal_data(spec, pts)
    ds = _symmetric_derivative(spec, pts)
    sym_res = (rho * np.einsum("pij,pi,pdj->pd", ds, -nu, xi)
               - np.einsum("pi,pi->p", system.dU_at(pts), -nu)[:, None])
    return BridgeReport(pts, tang, sym_res, pi_M, rep.margins, tang <= tol, tol)


# -- exponential map and shooting --------------------------------------------


def _exp_rows(system: MPSystem, x, u, k, rtol, atol):
    """Endpoints of ``exp^k_x(u)`` for rows of ``u``; integration ignores the
    boundary (fields are evaluated on their natural extension)."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_2d(u)
    h = system.h(x)
    T = np.sqrt(np.einsum("bi,ij,bj->b", u, h, u))
    speed = float(system.speed_at_energy(x, k))
    dirs = u / np.where(T > 0, T, 1.0)[:, None]
    y0 = np.concatenate([np.broadcast_to(x, u.shape), speed * dirs], axis=1)
    res = dopri5(lambda y: mp_rhs(system, y), y0, T, rtol=rtol, atol=atol)
    n = system.dim
    ends = np.array([d(d.s_end)[:n] for d in res.dense])
    return ends, res


def mp_exponential(system: MPSystem, x, v_unit, s: float, *, k: Optional[float] = None,
                   rtol: float = 1e-10, atol: float = 1e-10) -> np.ndarray:
    """``exp^k_x(s v)``: endpoint after time ``s`` of the MP geodesic with
    initial velocity ``sqrt(2 (k - U(x))) v`` (``v`` h-unit).

    Raises
    ------
    LeftDomain
        If the geodesic leaves N before time ``s``.
    """
    x = np.asarray(x, dtype=float)
    if s == 0:
        return x.copy()
    k = system.k if k is None else k
    v = np.asarray(v_unit, dtype=float)
    v = v / np.sqrt(v @ system.h(x) @ v)
    speed = float(system.speed_at_energy(x, k))
    traj = integrate_mp(system, np.concatenate([x, speed * v]), s, rtol=rtol, atol=atol)
    if traj.exited and traj.s_end < s * (1 - 1e-12):
        raise LeftDomain(f"left N at s={traj.s_end:.6g} < {s:.6g}")
    return traj.x(traj.s_end)


@dataclass
class ShootingSolution:
    u: np.ndarray
    direction: np.ndarray
    time: float
    residual: float
    condition: float
    trajectory: MPTrajectory = field(repr=False)


@dataclass
class ShootingResult:
    solutions: list
    starts: int
    converged: int
    left_domain: int

    @property
    def unique(self) -> bool:
        return len(self.solutions) == 1

    @property
    def status(self) -> str:
        return "simple" if self.unique else "NotSimple"

    @property
    def best(self) -> ShootingSolution:
        return self.solutions[0]


def _diameter(system) -> float:
    if system.base_spec is not None:
        return system.base_spec.h_diameter
    return 2.0 * system.domain.extent


def _start_guesses(system, x, y, k, n_starts, time_scales):
    h = system.h(x)
    d = y - x
    dist = np.sqrt(d @ h @ d)
    n = len(x)
    if n == 2:
        th = 2 * np.pi * np.arange(n_starts) / n_starts
        base = np.arctan2(d[1], d[0])
        dirs = np.stack([np.cos(base + th), np.sin(base + th)], axis=-1)
    else:
        rng = np.random.default_rng(12345)
        dirs = rng.normal(size=(n_starts, n))
        dirs[0] = d
    dirs = dirs / np.sqrt(np.einsum("bi,ij,bj->b", dirs, h, dirs))[:, None]
    speed = float(system.speed_at_energy(x, k))
    return np.vstack([dirs * (c * dist / speed) for c in time_scales])


def _newton_batch(residual_of, U, *, tol, max_iter, t_max, h_x, eps=1e-7):
    """Damped Newton iterations for many starts of ``residual_of(u) = 0``.

    Starts that stall, leave the admissible travel-time range or approach a
    root already tracked by another start are dropped.
    """
    n = U.shape[1]
    U = U.copy()
    active = np.ones(len(U), dtype=bool)
    done = np.zeros(len(U), dtype=bool)
    resid = np.linalg.norm(residual_of(U), axis=1)
    done |= resid <= tol

    def times(us):
        return np.sqrt(np.einsum("bi,ij,bj->b", us, h_x, us))

    for _ in range(max_iter):
        work = np.nonzero(active & ~done)[0]
        if work.size == 0:
            break
        # forward-difference Jacobians for all working starts at once
        steps = eps * (1.0 + np.linalg.norm(U[work], axis=1))
        pert = [U[work]] + [U[work] + steps[:, None] * e for e in np.eye(n)]
        Fall = residual_of(np.vstack(pert)).reshape(n + 1, work.size, n)
        Jac = np.stack([(Fall[j + 1] - Fall[0]) / steps[:, None] for j in range(n)], axis=-1)
        F0 = Fall[0]
        delta = -np.einsum("bij,bj->bi", np.linalg.pinv(Jac), F0)
        # cap the step relative to the current u to keep Newton in range
        cap = 0.5 * (1.0 + np.linalg.norm(U[work], axis=1))
        scale = np.minimum(1.0, cap / np.maximum(np.linalg.norm(delta, axis=1), 1e-300))
        r0 = np.linalg.norm(F0, axis=1)
        accepted = np.zeros(work.size, dtype=bool)
        newU = U[work].copy()
        newR = r0.copy()
        for _ls in range(6):
            pending = np.nonzero(~accepted)[0]
            trial = U[work[pending]] + scale[pending, None] * delta[pending]
            rt = np.linalg.norm(residual_of(trial), axis=1)
            ok = np.isfinite(rt) & (rt < r0[pending] * (1 - 1e-4 * scale[pending]) + 1e-15)
            newU[pending[ok]] = trial[ok]
            newR[pending[ok]] = rt[ok]
            accepted[pending[ok]] = True
            if np.all(accepted):
                break
            scale[pending[~ok]] *= 0.5
        U[work] = newU
        resid[work] = newR
        active[work[~accepted & (newR > tol)]] = False
        done[work[newR <= tol]] = True
        T_all = times(U)
        active[(T_all < 1e-12) | (T_all > t_max)] = False
        done &= active
        # starts heading to an already tracked root are redundant
        cand = np.nonzero(active & (resid < 1e-3))[0]
        cand = cand[np.lexsort((resid[cand], ~done[cand]))]
        kept = []
        for i in cand:
            if any(np.linalg.norm(U[i] - U[j]) < 1e-4 * (1 + np.linalg.norm(U[j])) for j in kept):
                active[i] = False
                done[i] = False
            else:
                kept.append(i)
    return U, resid, done


def shoot_connect(system: MPSystem, x, y, k: Optional[float] = None, *, n_starts: int = 16,
                  time_scales=(1.0, 3.0, 6.0), max_iter: int = 40, tol: float = 1e-9,
                  rtol: float = 1e-11, atol: float = 1e-11, strict: bool = False,
                  distinct_tol: float = 1e-6) -> ShootingResult:
    """Multistart Newton shooting for ``exp^k_x(u) = y``.

    The unknown ``u`` lies in ``T_x N``: its h-norm is the travel time and its
    direction the initial direction.  Each of the ``n_starts`` directions is
    tried with initial travel times ``time_scales`` times the chord time.
    Jacobians are formed by forward differences and all starts advance
    together, first at a loose integration tolerance, then the distinct
    candidates are polished at ``rtol``.  Solutions whose curve leaves N are
    discarded; two distinct survivors mean the exponential map is not
    injective.

    Returns
    -------
    ShootingResult
        Solutions sorted by travel time, each with its Jacobian condition
        number.

    Raises
    ------
    ShootingFailed
        No start converged to a solution inside N.
    NotSimple
        With ``strict=True`` when more than one solution is found.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = system.k if k is None else k
    n = system.dim
    eps = 1e-7
    h_x = system.h(x)
    speed0 = float(system.speed_at_energy(x, k))
    t_max = 6.0 * _diameter(system) / max(speed0, 1e-12)

    def residual_fn(rt, at):
        def residual_of(us):
            ends, _ = _exp_rows(system, x, us, k, rt, at)
            return ends - y

        return residual_of

    U = _start_guesses(system, x, y, k, n_starts, time_scales)
    coarse_tol = max(rtol, 1e-8)
    U, resid, done = _newton_batch(residual_fn(coarse_tol, coarse_tol), U, tol=1e-6,
                                   max_iter=max_iter, t_max=t_max, h_x=h_x, eps=eps)
    U = U[done]
    residual_of = residual_fn(rtol, atol)
    if len(U):
        U, resid, done = _newton_batch(residual_of, U, tol=tol, max_iter=10, t_max=t_max,
                                       h_x=h_x, eps=eps)
    n_starts_total = n_starts * len(time_scales)

    sols = []
    left = 0
    conv_idx = np.nonzero(done)[0]
    for i in conv_idx:
        u = U[i]
        T = float(np.sqrt(u @ system.h(x) @ u))
        direction = u / T
        speed = float(system.speed_at_energy(x, k))
        traj = integrate_mp(system, np.concatenate([x, speed * direction]), T, rtol=rtol,
                            atol=atol, stop_at_boundary=False)
        nodes = traj.dense.node_values()[:, :n]
        mids = traj.x(0.5 * (traj.dense.node_s()[:-1] + traj.dense.node_s()[1:]))
        inside = np.all(system.domain.b(np.vstack([nodes, mids])) >= -1e-8)
        if not inside:
            left += 1
            continue
        if any(np.linalg.norm(u - s.u) <= distinct_tol * (1 + np.linalg.norm(u)) for s in sols):
            continue
        steps = eps * (1.0 + np.linalg.norm(u))
        P = np.vstack([u] + [u + steps * e for e in np.eye(n)])
        FF = residual_of(P)
        Jac = np.stack([(FF[j + 1] - FF[0]) / steps for j in range(n)], axis=-1)
        sols.append(ShootingSolution(u, direction, T, float(resid[i]), float(np.linalg.cond(Jac)), traj))
    if not sols:
        raise ShootingFailed(f"no connecting geodesic inside N ({len(conv_idx)} converged, {left} left N)")
    sols.sort(key=lambda s: s.time)
    res = ShootingResult(sols, n_starts_total, int(done.sum()), left)
    if strict and not res.unique:
        raise NotSimple(f"{len(sols)} distinct connecting geodesics")
    return res


@dataclass
class SimplicitySweepRow:
    parameter: float
    statuses: list
    n_solutions: list
    conditions: list
    convex_margin: float

    @property
    def simple(self) -> bool:
        return all(s == "simple" for s in self.statuses)


def simplicity_sweep(make_system, parameters, pairs, *, n_starts: int = 16) -> list:
    """Run the shooting audit for a family of systems over point pairs."""
    rows = []
    for p in parameters:
        system = make_system(p)
        statuses, counts, conds = [], [], []
        for x, y in pairs:
            try:
                res = shoot_connect(system, x, y, n_starts=n_starts)
                statuses.append(res.status)
                counts.append(len(res.solutions))
                conds.append(res.best.condition)
            except ShootingFailed:
                statuses.append("ShootingFailed")
                counts.append(0)
                conds.append(float("nan"))
        margin = mp_convexity(system, n_points=64).min_margin
        rows.append(SimplicitySweepRow(float(p), statuses, counts, conds, margin))
    return rows
