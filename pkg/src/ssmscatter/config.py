"""TOML experiment configuration.

A config has an ``[experiment]`` table, a ``[manifold]`` table (either a
gallery reference or inline coefficient tables) and optional ``[tolerances]``,
``[gauge]``, ``[audit]`` and ``[output]`` tables::

    [experiment]
    kind = "equivalence-check"
    rho = [-2.0, 2.5]
    m = 1.0
    samples = 100
    seed = 0

    [manifold]
    gallery = "bumpy-lambda"
    params = { eps = 0.5 }

Inline fields are sums of terms.  A term is ``[coef, [p1, ..., pn]]`` for
``coef * x1^p1 ... xn^pn`` or ``["cos" | "sin", coef, [k1, ..., kn]]`` for
``coef * cos(k . x)``; a bare number is a constant.  ``lam`` is one term list,
``omega`` a list of ``n`` term lists and ``h`` an ``n x n`` nested list of
term lists (upper triangle read).
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import gallery
from .audit import admissible_band
from .errors import ConfigError, InvalidGauge, InvalidSpec
from .fields import Expansion, Monomial, Trig, covector_field, matrix_field, scalar_field
from .gauge import GaugeTransform, identity_gauge, radial_gauge
from .manifold import ManifoldSpec, ball

KINDS = (
    "scatter-batch",
    "equivalence-check",
    "gauge-invariance",
    "simplicity-audit",
    "lightlike-batch",
    "conservation-sweep",
)


@dataclass
class ExperimentConfig:
    kind: str
    manifold: dict
    name: str = "experiment"
    rho: Optional[list] = None
    m: float = 1.0
    samples: int = 100
    seed: int = 0
    rtol: float = 1e-10
    atol: float = 1e-10
    horizon: float = 10.0
    allow_inadmissible: bool = False
    workers: int = 1
    gauge: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)
    out: Optional[str] = None
    source: str = ""

    def line_of(self, key: str) -> Optional[int]:
        return _line_of(self.source, key)


def _line_of(text: str, key: str) -> Optional[int]:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=", re.M)
    m = pat.search(text)
    return None if m is None else text.count("\n", 0, m.start()) + 1


def _fail(text, message, key):
    raise ConfigError(message, field=key, line=_line_of(text, key.split(".")[-1]))


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config string.

    Raises
    ------
    ConfigError
        With the offending field and, when known, its line.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ConfigError(f"malformed TOML: {exc}", line=line) from None
    exp = data.get("experiment")
    if not isinstance(exp, dict):
        raise ConfigError("missing [experiment] table", field="experiment")
    kind = exp.get("kind")
    if kind not in KINDS:
        _fail(text, f"kind must be one of {', '.join(KINDS)}; got {kind!r}", "experiment.kind")
    man = data.get("manifold")
    if not isinstance(man, dict):
        raise ConfigError("missing [manifold] table", field="manifold")
    tol = data.get("tolerances", {})
    cfg = ExperimentConfig(
        kind=kind,
        manifold=man,
        name=str(exp.get("name", kind)),
        rho=exp.get("rho"),
        m=exp.get("m", 0.0 if kind == "lightlike-batch" else 1.0),
        samples=exp.get("samples", 100),
        seed=exp.get("seed", 0),
        rtol=tol.get("rtol", 1e-10),
        atol=tol.get("atol", 1e-10),
        horizon=exp.get("horizon", 10.0),
        allow_inadmissible=bool(exp.get("allow_inadmissible", False)),
        gauge=data.get("gauge", {}),
        audit=data.get("audit", {}),
        out=data.get("output", {}).get("dir"),
        source=text,
    )
    _check_types(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", field=str(p)) from None
    return parse_config(text)


def _number(text, value, key, *, positive=False, integer=False, allow_zero=True):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(text, f"expected a number, got {value!r}", key)
    if integer and not isinstance(value, int):
        _fail(text, f"expected an integer, got {value!r}", key)
    if positive and (value < 0 or (value == 0 and not allow_zero)):
        _fail(text, f"must be positive, got {value!r}", key)
    return value


def _check_types(cfg: ExperimentConfig) -> None:
    t = cfg.source
    _number(t, cfg.m, "experiment.m", positive=True)
    _number(t, cfg.samples, "experiment.samples", positive=True, integer=True, allow_zero=False)
    _number(t, cfg.seed, "experiment.seed", integer=True)
    _number(t, cfg.rtol, "tolerances.rtol", positive=True, allow_zero=False)
    _number(t, cfg.atol, "tolerances.atol", positive=True, allow_zero=False)
    _number(t, cfg.horizon, "experiment.horizon", positive=True, allow_zero=False)
    if cfg.rho is not None:
        if isinstance(cfg.rho, (int, float)) and not isinstance(cfg.rho, bool):
            cfg.rho = [cfg.rho]
        if not isinstance(cfg.rho, list) or not cfg.rho:
            _fail(t, "rho must be a number or a non-empty list", "experiment.rho")
        for r in cfg.rho:
            _number(t, r, "experiment.rho")
    if cfg.kind != "lightlike-batch" and cfg.m == 0:
        _fail(t, "m must be positive for timelike experiments", "experiment.m")


# -- fields -------------------------------------------------------------------


def _term(text, raw, dim, key):
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return Monomial(float(raw), (0,) * dim)
    if isinstance(raw, list) and len(raw) == 2 and isinstance(raw[1], list):
        coef, powers = raw
        if len(powers) != dim or any(not isinstance(p, int) or p < 0 for p in powers):
            _fail(text, f"monomial powers must be {dim} non-negative integers: {raw!r}", key)
        return Monomial(float(_number(text, coef, key)), tuple(powers))
    if isinstance(raw, list) and len(raw) == 3 and raw[0] in ("cos", "sin"):
        kind, coef, wave = raw
        if not isinstance(wave, list) or len(wave) != dim:
            _fail(text, f"wave vector must have {dim} entries: {raw!r}", key)
        return Trig(kind, float(_number(text, coef, key)), tuple(float(w) for w in wave))
    _fail(text, f"cannot read term {raw!r}", key)


def _expansion(text, raw, dim, key):
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        raw = [raw]
    if not isinstance(raw, list):
        _fail(text, f"expected a list of terms, got {raw!r}", key)
    return Expansion(tuple(_term(text, r, dim, key) for r in raw))


def build_manifold(cfg: ExperimentConfig) -> ManifoldSpec:
    """Resolve the ``[manifold]`` table into a validated spec."""
    t = cfg.source
    man = cfg.manifold
    if "gallery" in man:
        name = man["gallery"]
        params = man.get("params", {})
        try:
            return gallery.get(name, **params)
        except KeyError as exc:
            _fail(t, str(exc.args[0]), "manifold.gallery" if name not in gallery.GALLERY else "manifold.params")
        except (InvalidSpec, ValueError) as exc:
            _fail(t, f"gallery spec rejected: {exc}", "manifold.params")
    dim = man.get("dim", 2)
    if not isinstance(dim, int) or dim < 1:
        _fail(t, f"dim must be a positive integer, got {dim!r}", "manifold.dim")
    for key in ("h", "omega", "lam"):
        if key not in man:
            _fail(t, f"inline manifold needs {key!r} (or use gallery = ...)", f"manifold.{key}")
    lam, dlam = scalar_field(_expansion(t, man["lam"], dim, "manifold.lam"))
    om = man["omega"]
    if not isinstance(om, list) or len(om) != dim:
        _fail(t, f"omega must list {dim} components", "manifold.omega")
    omega, domega = covector_field([_expansion(t, c, dim, "manifold.omega") for c in om])
    hh = man["h"]
    if not isinstance(hh, list) or len(hh) != dim or any(not isinstance(r, list) or len(r) != dim for r in hh):
        _fail(t, f"h must be a {dim} x {dim} nested list", "manifold.h")
    h, dh = matrix_field([[_expansion(t, hh[i][j], dim, "manifold.h") for j in range(dim)] for i in range(dim)])
    center = man.get("center", [0.0] * dim)
    if not isinstance(center, list) or len(center) != dim:
        _fail(t, f"center must have {dim} entries", "manifold.center")
    radius = _number(t, man.get("radius", 1.0), "manifold.radius", positive=True, allow_zero=False)
    try:
        return ManifoldSpec(dim, ball(float(radius), tuple(float(c) for c in center)), h, omega, lam,
                            dh, domega, dlam, name=str(man.get("name", "inline")))
    except InvalidSpec as exc:
        _fail(t, f"manifold rejected: {type(exc).__name__}: {exc}", "manifold.lam")


def build_gauge(cfg: ExperimentConfig, spec: ManifoldSpec) -> GaugeTransform:
    """``[gauge]`` table: ``kind = "identity"`` or ``"radial"`` with the
    keyword arguments of :func:`radial_gauge`."""
    t = cfg.source
    g = dict(cfg.gauge)
    kind = g.pop("kind", "radial")
    g.pop("control_scale", None)
    if kind == "identity":
        gauge = identity_gauge(spec.dim)
    elif kind == "radial":
        allowed = {"eps", "A", "c", "phi_amp", "phi_tilt", "mu_amp"}
        extra = set(g) - allowed
        if extra:
            _fail(t, f"unknown gauge keys {sorted(extra)}", f"gauge.{sorted(extra)[0]}")
        dom = spec.domain
        gauge = radial_gauge(center=dom.center, radius=dom.radius, **g)
    else:
        _fail(t, f"gauge kind must be 'identity' or 'radial', got {kind!r}", "gauge.kind")
    try:
        gauge.validate(spec.domain)
    except InvalidGauge as exc:
        _fail(t, f"gauge rejected: {exc}", "gauge.kind")
    return gauge


def resolve_rhos(cfg: ExperimentConfig, spec: ManifoldSpec) -> list:
    """Momenta to run; defaults to two admissible values of opposite sign.

    Raises
    ------
    ConfigError
        If a listed momentum is outside the admissible band and
        ``allow_inadmissible`` is not set.
    """
    if cfg.kind == "lightlike-batch":
        return [-1.0]
    if cfg.rho is None:
        return [float(r) for r in gallery.working_momenta(spec, cfg.m)]
    rhos = [float(r) for r in cfg.rho]
    if not cfg.allow_inadmissible:
        for r in rhos:
            rep = admissible_band(spec, cfg.m, r)
            if not rep.band_ok:
                _fail(cfg.source, f"rho = {r:g} is outside the admissible band {rep.describe()}; "
                      "set allow_inadmissible = true to override", "experiment.rho")
    return rhos
