"""Experiment runners behind the CLI.

Every runner returns an :class:`ExperimentResult` holding CSV tables and
PASS/FAIL assertions; :func:`write_result` emits them deterministically.
"""

from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gallery
from .audit import ShootingFailed, mp_convexity, shoot_connect
from .config import ExperimentConfig, build_gauge, build_manifold, resolve_rhos
from .errors import ConservationWarning, SSMError
from .flow import SpacetimeState, integrate_geodesic_batch
from .gauge import apply_gauge_ssm, interior_lambda_perturbation, verify_scattering_invariance
from .lightlike import null_batch
from .manifold import ManifoldSpec
from .reduction import reduce
from .scattering import entry_tangent, equivalence_batch, sample_entries, scattering_rho_m_batch

RECORD_TOL = 1e-6
ACTION_TOL = 1e-7
GAUGE_TOL = 1e-5
CONTROL_MIN = 1e-3
DRIFT_TOL = 1e-8
NULL_RESIDUAL_TOL = 1e-6
NULL_SPEED_TOL = 1e-8


@dataclass
class Assertion:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name}: value={self.value:.6g} threshold={self.threshold:.6g} {self.detail}".rstrip()


@dataclass
class ExperimentResult:
    name: str
    kind: str
    manifold: str
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    assertions: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.assertions) and all(a.passed for a in self.assertions)

    def summary(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "manifold": self.manifold,
            "status": "PASS" if self.passed else "FAIL",
            "assertions": [
                {"name": a.name, "status": "PASS" if a.passed else "FAIL", "value": _jsonable(a.value),
                 "threshold": a.threshold, "detail": a.detail}
                for a in self.assertions
            ],
        }


def _jsonable(v):
    v = float(v)
    return v if np.isfinite(v) else str(v)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_result(result: ExperimentResult, out_dir) -> list:
    """Write ``<table>.csv``, ``summary.json`` and ``summary.txt``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in sorted(result.tables):
        header, rows = result.tables[name]
        p = out / f"{name}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        paths.append(p)
    p = out / "summary.json"
    p.write_text(json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
    paths.append(p)
    p = out / "summary.txt"
    lines = [f"{result.name} [{result.kind}] on {result.manifold}"]
    lines += [a.line() for a in result.assertions]
    lines.append("OVERALL " + ("PASS" if result.passed else "FAIL"))
    p.write_text("\n".join(lines) + "\n")
    paths.append(p)
    return paths


def _max(values) -> float:
    a = np.asarray(values, dtype=float)
    a = a[np.isfinite(a)]
    return float(a.max()) if a.size else float("nan")


def _leq(name, value, threshold, detail="") -> Assertion:
    return Assertion(name, bool(np.isfinite(value) and value <= threshold), float(value), threshold, detail)


def diametral_entry(spec: ManifoldSpec, rho: float, t: float = 0.0):
    """Entry at the boundary point in direction ``-e_1`` with zero tangential velocity."""
    d = -np.eye(spec.dim)[0]
    x = spec.domain.boundary_point(d)
    return entry_tangent(spec, rho, x, np.zeros(spec.dim), t)


def _entries(cfg, spec, rho, m, rng):
    return [diametral_entry(spec, rho)] + sample_entries(spec, rho, m, cfg.samples - 1, rng)


RECORD_HEADER_2D = ["index", "rho", "m", "entry_t", "entry_x1", "entry_x2", "entry_vt", "entry_vx1",
                    "entry_vx2", "exit_t", "exit_x1", "exit_x2", "exit_vt", "exit_vx1", "exit_vx2",
                    "T", "time_shift", "action", "flags"]


def _record_header(n):
    if n == 2:
        return list(RECORD_HEADER_2D)
    xs = [f"x{i + 1}" for i in range(n)]
    vs = [f"vx{i + 1}" for i in range(n)]
    return (["index", "rho", "m", "entry_t"] + [f"entry_{c}" for c in xs] + ["entry_vt"]
            + [f"entry_{c}" for c in vs] + ["exit_t"] + [f"exit_{c}" for c in xs] + ["exit_vt"]
            + [f"exit_{c}" for c in vs] + ["T", "time_shift", "action", "flags"])


def _record_row(i, rho, m, entry, rec, n):
    if rec is None:
        return [i, rho, m] + entry.as_row() + [np.nan] * (2 * n + 5) + ["failed"]
    return ([i, rho, m] + entry.as_row() + rec.exit.as_row()
            + [rec.T, rec.time_shift, rec.action, "|".join(rec.flags) or "ok"])


def _per_rho(cfg, fn, rhos):
    if cfg.workers > 1 and len(rhos) > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            return list(ex.map(fn, rhos))
    return [fn(r) for r in rhos]


def run_scatter_batch(cfg, spec, rhos) -> ExperimentResult:
    res = ExperimentResult(cfg.name, cfg.kind, spec.name)
    rows = []
    n = spec.dim

    def one(rho):
        rng = np.random.default_rng([cfg.seed, _rho_key(rho)])
        entries = _entries(cfg, spec, rho, cfg.m, rng)
        recs, fails = scattering_rho_m_batch(spec, rho, cfg.m, entries, rtol=cfg.rtol, atol=cfg.atol)
        return entries, recs, fails

    for rho, (entries, recs, fails) in zip(rhos, _per_rho(cfg, one, rhos)):
        rows += [_record_row(i, rho, cfg.m, e, r, n) for i, (e, r) in enumerate(zip(entries, recs))]
        parts = _max([abs(r.action - (r.rho * r.time_shift - r.m**2 * r.T)) for r in recs if r is not None])
        res.assertions.append(_leq(f"record parts consistent (rho={rho:g})", parts, 1e-9))
        res.assertions.append(_leq(f"failed entries (rho={rho:g})", len(fails), 0,
                                   ", ".join(sorted({type(e).__name__ for e in fails.values()}))))
    res.tables["records"] = (_record_header(n), rows)
    return res


def _rho_key(rho: float) -> int:
    return int(round(abs(rho) * 1e6)) * 2 + (rho < 0)


def run_equivalence(cfg, spec, rhos) -> ExperimentResult:
    res = ExperimentResult(cfg.name, cfg.kind, spec.name)
    n = spec.dim
    rec_rows, dev_rows = [], []

    def one(rho):
        rng = np.random.default_rng([cfg.seed, _rho_key(rho)])
        entries = _entries(cfg, spec, rho, cfg.m, rng)
        return entries, equivalence_batch(spec, rho, cfg.m, entries, rtol=cfg.rtol, atol=cfg.atol)

    for rho, (entries, eq) in zip(rhos, _per_rho(cfg, one, rhos)):
        for e, row in zip(entries, eq):
            rec_rows.append(_record_row(row.index, rho, cfg.m, e, row.direct, n))
            dev_rows.append([row.index, rho, row.deviation, row.action_deviation, row.action_integral, row.flag])
        devs = [r.deviation for r in eq]
        adevs = [r.action_deviation for r in eq]
        failed = sum(r.flag != "ok" for r in eq)
        res.assertions.append(_leq(f"record equivalence (rho={rho:g})", _max(devs), RECORD_TOL))
        res.assertions.append(_leq(f"action equivalence (rho={rho:g})", _max(adevs), ACTION_TOL))
        res.assertions.append(_leq(f"failed entries (rho={rho:g})", failed, 0))
    res.tables["records"] = (_record_header(n), rec_rows)
    res.tables["deviations"] = (["index", "rho", "record_deviation", "action_deviation",
                                 "action_integral", "flag"], dev_rows)
    return res


def run_gauge_invariance(cfg, spec, rhos) -> ExperimentResult:
    res = ExperimentResult(cfg.name, cfg.kind, spec.name)
    gauge = build_gauge(cfg, spec)
    control = cfg.gauge.get("control_scale")
    rows = []

    def one(rho):
        rng = np.random.default_rng([cfg.seed, _rho_key(rho)])
        entries = sample_entries(spec, rho, cfg.m, cfg.samples, rng)
        out = [verify_scattering_invariance(spec, apply_gauge_ssm(spec, gauge, rho, cfg.m), rho, cfg.m,
                                            entries=entries, rtol=cfg.rtol, atol=cfg.atol,
                                            threshold=GAUGE_TOL)]
        if control is not None:
            out.append(verify_scattering_invariance(spec, interior_lambda_perturbation(spec, control), rho,
                                                    cfg.m, entries=entries, rtol=cfg.rtol, atol=cfg.atol,
                                                    threshold=GAUGE_TOL))
        return out

    for rho, reps in zip(rhos, _per_rho(cfg, one, rhos)):
        rep = reps[0]
        ctl = reps[1] if len(reps) > 1 else None
        for i in range(len(rep.deviations)):
            rows.append([i, rho, rep.deviations[i], ctl.deviations[i] if ctl is not None else np.nan])
        res.assertions.append(_leq(f"gauge invariance {gauge.name} (rho={rho:g})", rep.max_deviation,
                                   GAUGE_TOL, f"compared={rep.n_compared} failed={rep.n_failed}"))
        if ctl is not None:
            res.assertions.append(Assertion(f"lambda-perturbation control detected (rho={rho:g})",
                                            bool(ctl.max_deviation >= CONTROL_MIN), ctl.max_deviation,
                                            CONTROL_MIN, "control must deviate by at least the threshold"))
    res.tables["deviations"] = (["index", "rho", "gauge_deviation", "control_deviation"], rows)
    return res


def run_simplicity_audit(cfg, spec, rhos) -> ExperimentResult:
    """``[audit]`` keys: ``parameter`` (gallery parameter swept), ``values``,
    ``pairs`` (list of ``[x, y]``), ``n_starts``, ``expect_simple`` and
    ``expect_not_simple`` (parameter values)."""
    a = cfg.audit
    family = cfg.manifold.get("gallery")
    base = dict(cfg.manifold.get("params", {}))
    param = a.get("parameter")
    values = a.get("values", [base.get(param)] if param else [None])
    pairs = a.get("pairs", [[[-0.2, 0.0], [0.2, 0.0]]])
    n_starts = int(a.get("n_starts", 16))
    rho = rhos[0]
    res = ExperimentResult(cfg.name, cfg.kind, spec.name)

    def make(v):
        if param is None or family is None:
            return spec
        return gallery.get(family, **{**base, param: v})

    def one(v):
        s = make(v)
        system = reduce(s, rho, cfg.m)
        out = []
        for j, (x, y) in enumerate(pairs):
            try:
                r = shoot_connect(system, np.asarray(x, float), np.asarray(y, float), n_starts=n_starts)
                out.append((j, r.status, len(r.solutions), r.best.condition,
                            ";".join("%.10g" % sol.time for sol in r.solutions)))
            except ShootingFailed:
                out.append((j, "ShootingFailed", 0, np.nan, ""))
        margin = mp_convexity(system, n_points=64).min_margin
        return out, margin

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            results = list(ex.map(one, values))
    else:
        results = [one(v) for v in values]
    rows = []
    simple_by_value = {}
    for v, (out, margin) in zip(values, results):
        for j, status, count, cond, times in out:
            rows.append([v, j, rho, cfg.m, status, count, cond, margin, times])
        simple_by_value[v] = all(o[1] == "simple" for o in out)
    res.tables["audit"] = (["parameter", "pair", "rho", "m", "status", "solutions", "condition",
                            "convexity_margin", "times"], rows)
    for v in a.get("expect_simple", []):
        res.assertions.append(Assertion(f"simple at {param}={v:g}", bool(simple_by_value.get(v, False)),
                                        float(simple_by_value.get(v, False)), 1.0))
    for v in a.get("expect_not_simple", []):
        ns = v in simple_by_value and not simple_by_value[v]
        res.assertions.append(Assertion(f"NotSimple at {param}={v:g}", bool(ns), float(ns), 1.0))
    flags = [simple_by_value[v] for v in values]
    switches = sum(1 for i in range(1, len(flags)) if flags[i] != flags[i - 1])
    res.assertions.append(Assertion("single simple/NotSimple transition along the sweep", switches <= 1,
                                    float(switches), 1.0))
    return res


def run_lightlike(cfg, spec, rhos) -> ExperimentResult:
    res = ExperimentResult(cfg.name, cfg.kind, spec.name)
    rng = np.random.default_rng(cfg.seed)
    entries = _entries(cfg, spec, -1.0, 0.0, rng)
    rows_out = null_batch(spec, entries, rtol=min(cfg.rtol, 1e-11), atol=min(cfg.atol, 1e-11))
    rows = [[r.index, -1.0, 0.0] + r.entry.as_row() + r.exit_x.tolist() + [r.s_end, r.residual, r.speed_drift]
            for r in rows_out]
    n = spec.dim
    header = (["index", "rho", "m", "entry_t"] + [f"entry_x{i + 1}" for i in range(n)] + ["entry_vt"]
              + [f"entry_vx{i + 1}" for i in range(n)] + [f"exit_x{i + 1}" for i in range(n)]
              + ["s_end", "magnetic_residual", "speed_drift"])
    res.tables["lightlike"] = (header, rows)
    res.assertions.append(_leq("magnetic equation residual", _max([r.residual for r in rows_out]),
                               NULL_RESIDUAL_TOL))
    res.assertions.append(_leq("unit-speed drift", _max([r.speed_drift for r in rows_out]), NULL_SPEED_TOL))
    return res


def random_states(spec: ManifoldSpec, rho: float, m: float, count: int, rng, margin: float = 0.9):
    """Interior states with ``J = rho`` and ``H = -m^2/2`` in random directions."""
    dom = spec.domain
    states = []
    while len(states) < count:
        x = dom.center + dom.radius * rng.uniform(-1, 1, size=spec.dim)
        if not dom.contains(x) or np.linalg.norm(x - dom.center) > margin * dom.radius:
            continue
        lam = float(spec.lam(x))
        d = rng.normal(size=spec.dim)
        h = spec.h(x)
        d = d / np.sqrt(d @ h @ d)
        v = np.sqrt(rho * rho / lam - m * m) * d
        v0 = -rho / lam + float(spec.omega(x) @ v)
        states.append(SpacetimeState(0.0, x, v0, v))
    return states


def run_conservation(cfg, spec, rhos) -> ExperimentResult:
    res = ExperimentResult(cfg.name, cfg.kind, spec.name)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    worst = 0.0
    for rho in rhos:
        states = random_states(spec, rho, cfg.m, cfg.samples, rng)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConservationWarning)
            trajs = integrate_geodesic_batch(spec, states, cfg.horizon, rtol=cfg.rtol, atol=cfg.atol,
                                             strict=False)
        for i, tr in enumerate(trajs):
            rel_J = tr.drift_J / (1 + abs(tr.J0))
            rel_H = tr.drift_H / (1 + abs(tr.H0))
            worst = max(worst, rel_J, rel_H)
            rows.append([i, rho, cfg.m, tr.J0, tr.H0, tr.drift_J, tr.drift_H, tr.s_end, tr.status, tr.exited])
    res.tables["conservation"] = (["index", "rho", "m", "J0", "H0", "drift_J", "drift_H", "s_end",
                                   "status", "exited"], rows)
    res.assertions.append(_leq("max relative drift of J and H", worst, DRIFT_TOL))
    return res


RUNNERS = {
    "scatter-batch": run_scatter_batch,
    "equivalence-check": run_equivalence,
    "gauge-invariance": run_gauge_invariance,
    "simplicity-audit": run_simplicity_audit,
    "lightlike-batch": run_lightlike,
    "conservation-sweep": run_conservation,
}


class ExperimentError(SSMError):
    """A module error raised while running an experiment, with context."""


def run(cfg: ExperimentConfig) -> ExperimentResult:
    """Build the manifold, resolve momenta and dispatch on ``cfg.kind``."""
    spec = build_manifold(cfg)
    rhos = resolve_rhos(cfg, spec)
    try:
        return RUNNERS[cfg.kind](cfg, spec, rhos)
    except SSMError as exc:
        raise ExperimentError(f"{cfg.kind} on {spec.name}: {type(exc).__name__}: {exc}") from exc
