import json
from pathlib import Path

import numpy as np
import pytest

from ssmscatter import gallery
from ssmscatter.cli import main
from ssmscatter.config import build_gauge, build_manifold, load_config, parse_config, resolve_rhos
from ssmscatter.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = """\
[experiment]
name = "small"
kind = "equivalence-check"
rho = [-2.0]
samples = 4
seed = 3

[manifold]
gallery = "bumpy-lambda"
"""


def test_parse_defaults():
    cfg = parse_config(SMALL)
    assert cfg.kind == "equivalence-check" and cfg.rho == [-2.0] and cfg.samples == 4
    assert cfg.m == 1.0 and cfg.rtol == 1e-10 and cfg.out is None


@pytest.mark.parametrize("text, field, line", [
    (SMALL.replace('"equivalence-check"', '"nope"'), "experiment.kind", 3),
    (SMALL.replace("samples = 4", "samples = -4"), "experiment.samples", 5),
    (SMALL.replace("samples = 4", 'samples = "x"'), "experiment.samples", 5),
    (SMALL.replace("seed = 3", "seed = 3 3"), None, 6),
], ids=["kind", "negative", "type", "toml"])
def test_parse_errors_name_field_and_line(text, field, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == line
    if field is not None:
        assert exc.value.field == field


def test_missing_tables():
    with pytest.raises(ConfigError, match="experiment"):
        parse_config("[manifold]\ngallery = 'flat-disk'\n")
    with pytest.raises(ConfigError, match="manifold"):
        parse_config("[experiment]\nkind = 'scatter-batch'\n")


def test_unknown_gallery_entry():
    with pytest.raises(ConfigError) as exc:
        build_manifold(parse_config(SMALL.replace("bumpy-lambda", "no-such-disk")))
    assert exc.value.line == 9


def test_inline_manifold_matches_formula():
    spec = build_manifold(load_config(CONFIGS / "inline_equivalence.toml"))
    x = np.array([[0.3, -0.4], [0.1, 0.5]])
    h = np.zeros((2, 2, 2))
    h[:, 0, 0] = 1 + 0.2 * x[:, 1] ** 2
    h[:, 1, 1] = 1.0
    assert np.allclose(spec.h(x), h)
    assert np.allclose(spec.omega(x), 0.1 * np.stack([-x[:, 1], x[:, 0]], -1))
    assert np.allclose(spec.lam(x), 1 + 0.1 * np.cos(x[:, 0]))
    assert spec.derivative_mode == "analytic"


def test_resolve_rhos():
    spec = gallery.bumpy_lambda()
    assert resolve_rhos(parse_config(SMALL), spec) == [-2.0]
    bad = SMALL.replace("[-2.0]", "[1.1]")
    with pytest.raises(ConfigError) as exc:
        resolve_rhos(parse_config(bad), spec)
    assert exc.value.field == "experiment.rho" and exc.value.line == 4
    allowed = bad.replace("seed = 3", "seed = 3\nallow_inadmissible = true")
    assert resolve_rhos(parse_config(allowed), spec) == [1.1]
    light = parse_config(SMALL.replace("equivalence-check", "lightlike-batch").replace("bumpy-lambda", "flat-disk"))
    assert resolve_rhos(light, gallery.flat_disk()) == [-1.0] and light.m == 0.0


def test_gauge_table():
    cfg = load_config(CONFIGS / "gauge_invariance.toml")
    spec = build_manifold(cfg)
    g = build_gauge(cfg, spec)
    x = np.array([[0.2, 0.1]])
    assert not np.allclose(g.f(x), x)
    bad = parse_config(SMALL + '\n[gauge]\nkind = "twist"\n')
    with pytest.raises(ConfigError) as exc:
        build_gauge(bad, gallery.bumpy_lambda())
    assert exc.value.field == "gauge.kind"


def _write(tmp_path, text):
    p = tmp_path / "small.toml"
    p.write_text(text)
    return str(p)


def test_cli_run_is_deterministic(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    assert main(["run", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    out = capsys.readouterr().out
    assert "PASS: small" in out
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "summary.json" in files and "summary.txt" in files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["status"] == "PASS"


def test_cli_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SSMSCATTER_OUT", str(tmp_path / "env"))
    assert main(["run", _write(tmp_path, SMALL)]) == 0
    assert (tmp_path / "env" / "summary.txt").read_text().rstrip().endswith("OVERALL PASS")


def test_cli_seed_override_changes_samples(tmp_path):
    cfg = _write(tmp_path, SMALL)
    main(["run", cfg, "--out", str(tmp_path / "a")])
    main(["run", cfg, "--out", str(tmp_path / "b"), "--seed", "11"])
    a = sorted((tmp_path / "a").glob("*.csv"))[0]
    assert a.read_bytes() != (tmp_path / "b" / a.name).read_bytes()


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run", _write(tmp_path, SMALL.replace("samples = 4", "samples = 0"))]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["validate", str(CONFIGS / "magnetic_audit.toml")]) == 0
    assert "ok: simplicity-audit" in capsys.readouterr().out


def test_cli_identity_gauge_deviation(tmp_path):
    text = (CONFIGS / "identity_gauge.toml").read_text().replace("samples = 20", "samples = 5")
    assert main(["run", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert all(a["value"] < 1e-12 for a in summary["assertions"])


def test_list_gallery(capsys):
    assert main(["list-gallery"]) == 0
    out = capsys.readouterr().out
    for name in gallery.GALLERY:
        assert name in out


@pytest.mark.slow
@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_configs_pass(path, tmp_path):
    assert main(["run", str(path), "--out", str(tmp_path)]) == 0
