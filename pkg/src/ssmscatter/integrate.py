"""Batched Dormand-Prince 5(4) integration with dense output.

Every row of a batch is an independent initial value problem with its own
adaptive step size and its own horizon; the right-hand side is evaluated
once per stage for all still-active rows, which is what makes sweeps over
hundreds of geodesics affordable in pure numpy.

A row may carry a boundary event ``g(y)``: integration of that row stops at
the first accepted step across which ``g`` changes sign from non-negative
to negative.  The root is not polished here (see :func:`locate_root`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import NonFiniteState, StepSizeUnderflow

# Dormand & Prince (1980) coefficients.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)
# Hairer's continuous extension of order 4.
_D = np.array(
    [
        -12715105075 / 11282082432,
        0.0,
        87487479700 / 32700410799,
        -10690763975 / 1880347072,
        701980252875 / 199316789632,
        -1453857185 / 822651844,
        69997945 / 29380423,
    ]
)

STATUS_RUNNING = "running"
STATUS_HORIZON = "horizon"
STATUS_EVENT = "event"
STATUS_UNDERFLOW = "underflow"
STATUS_NONFINITE = "nonfinite"
STATUS_MAXSTEPS = "max_steps"


@dataclass(frozen=True)
class DenseOutput:
    """Piecewise quartic interpolant of one integrated row.

    ``s0[i]`` and ``h[i]`` describe step ``i``; ``rcont[i]`` holds the five
    interpolation vectors.  The valid range is ``[0, s_end]``, where
    ``s_end`` may lie strictly inside the last step once an event root has
    been located.
    """

    s0: np.ndarray
    h: np.ndarray
    rcont: np.ndarray
    s_end: float

    @property
    def dim(self) -> int:
        return self.rcont.shape[-1]

    @property
    def n_steps(self) -> int:
        return len(self.s0)

    @property
    def breakpoints(self) -> np.ndarray:
        bp = np.append(self.s0, self.s_end)
        return bp[np.concatenate([[True], np.diff(bp) > 0])]

    def _locate(self, s):
        s = np.asarray(s, dtype=float)
        idx = np.searchsorted(self.s0, s, side="right") - 1
        idx = np.clip(idx, 0, len(self.s0) - 1)
        theta = (s - self.s0[idx]) / self.h[idx]
        return idx, theta[..., None]

    def __call__(self, s) -> np.ndarray:
        idx, th = self._locate(s)
        r = self.rcont[idx]
        r1, r2, r3, r4, r5 = (r[..., k, :] for k in range(5))
        return r1 + th * (r2 + (1 - th) * (r3 + th * (r4 + (1 - th) * r5)))

    def derivative(self, s) -> np.ndarray:
        idx, th = self._locate(s)
        r = self.rcont[idx]
        r2, r3, r4, r5 = (r[..., k, :] for k in range(1, 5))
        a = r4 + (1 - th) * r5
        b = r3 + th * a
        c = r2 + (1 - th) * b
        db = a - th * r5
        dc = -b + (1 - th) * db
        return (c + th * dc) / self.h[idx][..., None]

    def node_values(self) -> np.ndarray:
        """States at the step starts plus the final state."""
        return np.vstack([self.rcont[:, 0, :], self(self.s_end)[None, :]])

    def node_s(self) -> np.ndarray:
        return np.append(self.s0, self.s_end)

    def truncated(self, s_end: float) -> "DenseOutput":
        keep = self.s0 < s_end
        keep[0] = True
        return DenseOutput(self.s0[keep], self.h[keep], self.rcont[keep], float(s_end))


@dataclass
class BatchResult:
    dense: list
    status: np.ndarray
    n_rhs: int


def _rms(e, sc):
    return np.sqrt(np.mean((e / sc) ** 2, axis=-1))


def _initial_step(rhs, y0, f0, rtol, atol):
    sc = atol + rtol * np.abs(y0)
    d0 = _rms(y0, sc)
    d1 = _rms(f0, sc)
    h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
    y1 = y0 + h0[:, None] * f0
    f1 = rhs(y1)
    d2 = _rms(f1 - f0, sc) / h0
    dm = np.maximum(d1, d2)
    h1 = np.where(dm <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / np.maximum(dm, 1e-300)) ** 0.2)
    return np.minimum(100 * h0, h1)


def dopri5(
    rhs,
    y0,
    s_end,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-10,
    event=None,
    max_steps: int = 200_000,
    h_max=None,
) -> BatchResult:
    """Integrate ``y' = rhs(y)`` for a batch of rows.

    Parameters
    ----------
    rhs : callable
        Vectorized autonomous right-hand side, ``(k, d) -> (k, d)``.
    y0 : array (B, d)
    s_end : float or array (B,)
        Per-row horizon.
    event : callable, optional
        ``(k, d) -> (k,)``; a row terminates on a non-negative to negative
        sign change of ``event`` over an accepted step.
    """
    y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    nb, d = y0.shape
    s_end = np.broadcast_to(np.asarray(s_end, dtype=float), (nb,)).copy()
    if h_max is None:
        h_max = np.inf

    s = np.zeros(nb)
    y = y0.copy()
    f = rhs(y)
    n_rhs = 1
    h = np.minimum(_initial_step(rhs, y, f, rtol, atol), s_end)
    h = np.minimum(h, h_max)
    n_rhs += 1
    status = np.full(nb, STATUS_RUNNING, dtype=object)
    status[s_end <= 0] = STATUS_HORIZON
    g_prev = None
    if event is not None:
        g_prev = np.maximum(event(y), 0.0)

    chunks_row, chunks_s0, chunks_h, chunks_r = [], [], [], []
    steps = np.zeros(nb, dtype=int)
    prev_rejected = np.zeros(nb, dtype=bool)

    for _ in range(max_steps):
        act = np.nonzero(status == STATUS_RUNNING)[0]
        if act.size == 0:
            break
        ya, fa, ha, sa = y[act], f[act], h[act], s[act]
        last = sa + ha >= s_end[act] * (1 - 1e-15)
        ha = np.where(last, s_end[act] - sa, ha)

        k = [fa]
        for st in range(1, 7):
            acc = ya.copy()
            for j, a in enumerate(_A[st]):
                if a != 0.0:
                    acc += (ha * a)[:, None] * k[j]
            if st == 6:
                y_new = acc
            k.append(rhs(acc))
        n_rhs += 6
        kk = np.stack(k, axis=1)  # (m, 7, d)
        err_vec = ha[:, None] * np.einsum("s,msd->md", _E, kk)
        sc = atol + rtol * np.maximum(np.abs(ya), np.abs(y_new))
        err = _rms(err_vec, sc)

        finite = np.all(np.isfinite(y_new), axis=1) & np.isfinite(err)
        if not np.all(finite):
            bad = act[~finite]
            # retry non-finite rows with a much smaller step before giving up
            small = ha[~finite] > 1e-10 * (1 + np.abs(sa[~finite]))
            h[bad[small]] = ha[~finite][small] * 0.1
            status[bad[~small]] = STATUS_NONFINITE
            err = np.where(finite, err, np.inf)

        accept = finite & (err <= 1.0)
        fac = np.where(err == 0.0, 5.0, 0.9 * np.power(np.maximum(err, 1e-300), -0.2))
        fac = np.clip(fac, 0.2, 5.0)
        fac = np.where(accept & prev_rejected[act], np.minimum(fac, 1.0), fac)

        rej = act[~accept & finite]
        h[rej] = ha[~accept & finite] * fac[~accept & finite]
        prev_rejected[act] = ~accept
        tiny = h[rej] < 1e-14 * (1 + np.abs(s[rej]))
        status[rej[tiny]] = STATUS_UNDERFLOW

        if np.any(accept):
            ia = act[accept]
            hA = ha[accept]
            y0A, y1A = ya[accept], y_new[accept]
            kA = kk[accept]
            r = np.empty((ia.size, 5, d))
            r[:, 0] = y0A
            r[:, 1] = y1A - y0A
            r[:, 2] = hA[:, None] * kA[:, 0] - r[:, 1]
            r[:, 3] = r[:, 1] - hA[:, None] * kA[:, 6] - r[:, 2]
            r[:, 4] = hA[:, None] * np.einsum("s,msd->md", _D, kA)
            chunks_row.append(ia)
            chunks_s0.append(sa[accept])
            chunks_h.append(hA)
            chunks_r.append(r)

            s[ia] = sa[accept] + hA
            y[ia] = y1A
            f[ia] = kA[:, 6]
            h[ia] = np.minimum(hA * fac[accept], h_max)
            steps[ia] += 1
            done = last[accept]
            status[ia[done]] = STATUS_HORIZON
            if event is not None:
                g_new = event(y1A)
                crossed = (g_prev[ia] >= 0) & (g_new < 0)
                status[ia[crossed]] = STATUS_EVENT
                g_prev[ia] = g_new
    else:
        status[status == STATUS_RUNNING] = STATUS_MAXSTEPS

    rows = np.concatenate(chunks_row) if chunks_row else np.zeros(0, int)
    order = np.argsort(rows, kind="stable")
    rows = rows[order]
    s0_all = np.concatenate(chunks_s0)[order] if chunks_s0 else np.zeros(0)
    h_all = np.concatenate(chunks_h)[order] if chunks_h else np.zeros(0)
    r_all = np.concatenate(chunks_r)[order] if chunks_r else np.zeros((0, 5, d))
    bounds = np.searchsorted(rows, np.arange(nb + 1))
    dense = []
    for i in range(nb):
        lo, hi = bounds[i], bounds[i + 1]
        if hi == lo:
            # zero-length trajectory: constant interpolant
            r0 = np.zeros((1, 5, d))
            r0[0, 0] = y0[i]
            dense.append(DenseOutput(np.zeros(1), np.ones(1), r0, 0.0))
            continue
        dense.append(
            DenseOutput(s0_all[lo:hi], h_all[lo:hi], r_all[lo:hi], float(s[i]))
        )
    return BatchResult(dense=dense, status=status, n_rhs=n_rhs)


def raise_for_status(status: str, where: str = "") -> None:
    if status == STATUS_UNDERFLOW:
        raise StepSizeUnderflow(f"step size underflow {where}".strip())
    if status == STATUS_NONFINITE:
        raise NonFiniteState(f"non-finite state {where}".strip())
    if status == STATUS_MAXSTEPS:
        raise StepSizeUnderflow(f"maximum number of steps exceeded {where}".strip())


def locate_root(fun, lo: float, hi: float, *, ftol: float = 1e-10) -> float:
    """Root of a scalar function bracketed by ``fun(lo) >= 0 > fun(hi)``."""
    flo = fun(lo)
    if flo <= 0.0:
        return lo
    root = brentq(fun, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    # brentq stops on the bracket width; confirm the residual target
    if abs(fun(root)) > ftol:
        a, b = lo, hi
        for _ in range(200):
            mid = 0.5 * (a + b)
            fm = fun(mid)
            if abs(fm) <= ftol:
                return mid
            if fm > 0:
                a = mid
            else:
                b = mid
    return root


def gauss_legendre(n: int = 8):
    return np.polynomial.legendre.leggauss(n)


def integrate_along(fun, breakpoints, *, order: int = 8):
    """Cumulative integral of ``fun(s)`` over piecewise-smooth segments.

    ``fun`` is vectorized over ``s``. Returns the cumulative values at every
    breakpoint (first entry zero).
    """
    bp = np.asarray(breakpoints, dtype=float)
    xg, wg = gauss_legendre(order)
    a, b = bp[:-1], bp[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    ss = mid[:, None] + half[:, None] * xg[None, :]
    vals = fun(ss.ravel()).reshape(ss.shape)
    seg = half * (vals @ wg)
    return np.concatenate([[0.0], np.cumsum(seg)])


def integrate_partial(fun, a, b, *, order: int = 8):
    """Integral of ``fun`` over ``[a, b]`` elementwise for arrays a, b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    xg, wg = gauss_legendre(order)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    ss = mid[..., None] + half[..., None] * xg
    vals = fun(ss.ravel()).reshape(ss.shape)
    return half * (vals @ wg)


# -- monitored integration with boundary exits -------------------------------


@dataclass
class MonitoredBatch:
    """Result of :func:`integrate_monitored`.

    ``drift[i, j]`` is the maximal deviation of invariant ``j`` from its
    initial value over the accepted steps of row ``i``; ``exit_s`` is the
    polished exit parameter (``nan`` if the row did not exit).
    """

    dense: list
    status: np.ndarray
    drift: np.ndarray
    initial: np.ndarray
    exit_s: np.ndarray
    rtol: np.ndarray
    warned: np.ndarray


def _last_crossing(dense: DenseOutput, b_of_y, ftol: float) -> float:
    """Polished parameter of the exit inside the final accepted step."""
    lo, hi = dense.s0[-1], dense.s_end
    grid = np.linspace(lo, hi, 17)
    vals = b_of_y(dense(grid))
    neg = np.nonzero(vals < 0)[0]
    first_neg = neg[0] if neg.size else len(grid) - 1
    if first_neg == 0:
        return float(lo)
    a, b = grid[first_neg - 1], grid[first_neg]
    return locate_root(lambda s: float(b_of_y(dense(s))), a, b, ftol=ftol)


def integrate_monitored(
    rhs,
    y0,
    horizon,
    *,
    invariants,
    rtol: float = 1e-10,
    atol: float = 1e-10,
    boundary=None,
    drift_tol: float = 1e-8,
    retries: int = 2,
    root_tol: float = 1e-10,
    max_steps: int = 200_000,
):
    """Integrate a batch while monitoring conserved quantities.

    Parameters
    ----------
    invariants : callable
        ``(..., d) -> (..., k)`` quantities that should stay constant.
    boundary : callable, optional
        ``(..., d) -> (...)``; rows stop when it turns negative and the
        crossing is polished to ``|boundary| <= root_tol``.

    Rows whose drift exceeds ``drift_tol * (1 + |initial|)`` are re-run with
    tolerances divided by 10 up to ``retries`` times; rows still failing are
    flagged in ``warned`` (the caller decides whether to emit a warning).
    """
    y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    nb = y0.shape[0]
    horizon = np.broadcast_to(np.asarray(horizon, dtype=float), (nb,)).copy()
    inv0 = np.atleast_2d(invariants(y0))
    dense = [None] * nb
    status = np.empty(nb, dtype=object)
    drift = np.zeros_like(inv0)
    exit_s = np.full(nb, np.nan)
    used = np.full(nb, float(rtol))
    warned = np.zeros(nb, dtype=bool)

    todo = np.arange(nb)
    rt, at = float(rtol), float(atol)
    for attempt in range(retries + 1):
        res = dopri5(rhs, y0[todo], horizon[todo], rtol=rt, atol=at, event=boundary,
                     max_steps=max_steps)
        for j, i in enumerate(todo):
            d = res.dense[j]
            st = res.status[j]
            if st == STATUS_EVENT:
                se = _last_crossing(d, boundary, root_tol)
                d = d.truncated(se)
                exit_s[i] = se
            dense[i] = d
            status[i] = st
            used[i] = rt
            vals = np.atleast_2d(invariants(d.node_values()))
            drift[i] = np.max(np.abs(vals - inv0[i]), axis=0)
        bad = np.any(drift[todo] > drift_tol * (1.0 + np.abs(inv0[todo])), axis=1)
        bad &= np.array([status[i] in (STATUS_HORIZON, STATUS_EVENT) for i in todo], dtype=bool)
        todo = todo[bad]
        if todo.size == 0:
            break
        if attempt < retries:
            rt, at = rt / 10.0, at / 10.0
    warned[todo] = True
    return MonitoredBatch(dense, status, drift, inv0, exit_s, used, warned)
