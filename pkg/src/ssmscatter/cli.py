"""Command-line entry point: ``ssmscatter run | list-gallery | validate``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import gallery
from .audit import admissible_band
from .config import build_manifold, load_config, resolve_rhos
from .errors import ConfigError, SSMError

OUT_ENV = "SSMSCATTER_OUT"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ssmscatter", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", nargs="?", help="TOML config path")
    run.add_argument("--config", dest="config_opt", help="TOML config path")
    run.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./out/<name>)")
    run.add_argument("--seed", type=int, help="override experiment seed")
    run.add_argument("--workers", type=int, default=1, help="parallel batches")
    run.add_argument("--rtol", type=float, help="override integrator rtol")
    run.add_argument("--atol", type=float, help="override integrator atol")

    lg = sub.add_parser("list-gallery", help="print the built-in manifolds")
    lg.add_argument("--m", type=float, default=1.0, help="mass for the admissible band column")

    val = sub.add_parser("validate", help="parse a config and build its manifold without running")
    val.add_argument("config", nargs="?")
    val.add_argument("--config", dest="config_opt")
    return p


def _config_path(args) -> str:
    path = args.config_opt or args.config
    if not path:
        raise ConfigError("no config path given", field="--config")
    return path


def list_gallery(m: float = 1.0, stream=None) -> None:
    stream = stream or sys.stdout
    for name, entry in gallery.GALLERY.items():
        spec = gallery.get(name)
        rep = admissible_band(spec, m)
        params = ", ".join(f"{k}={v:g}" for k, v in entry.defaults.items()) or "-"
        print(f"{name:<18} params: {params:<32} lam in [{rep.A:.4g}, {rep.B:.4g}]", file=stream)
        print(f"{'':<18} {entry.doc}; admissible rho (m={m:g}): {rep.describe()}", file=stream)


def _cmd_run(args) -> int:
    from .experiments import run, write_result

    cfg = load_config(_config_path(args))
    if args.seed is not None:
        cfg.seed = args.seed
    if args.rtol is not None:
        cfg.rtol = args.rtol
    if args.atol is not None:
        cfg.atol = args.atol
    cfg.workers = max(1, args.workers)
    out = args.out or cfg.out or os.environ.get(OUT_ENV) or str(Path("out") / cfg.name)
    result = run(cfg)
    paths = write_result(result, out)
    for a in result.assertions:
        print(a.line())
    print(f"{'PASS' if result.passed else 'FAIL'}: {cfg.name} -> {out} ({len(paths)} files)")
    return 0 if result.passed else 1


def _cmd_validate(args) -> int:
    cfg = load_config(_config_path(args))
    spec = build_manifold(cfg)
    rhos = resolve_rhos(cfg, spec)
    print(f"ok: {cfg.kind} on {spec.name}, rho={rhos}, m={cfg.m:g}, samples={cfg.samples}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "list-gallery":
            list_gallery(args.m)
            return 0
        if args.command == "validate":
            return _cmd_validate(args)
        return _cmd_run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SSMError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
