"""Configuration schema, preset catalog, CLI exit codes and artifact manifests."""
from __future__ import annotations

import hashlib
import json

import pytest
import yaml

from coupledhj.cli import main
from coupledhj.config import ConfigError, list_presets, load_config, load_preset, preset_data, validate

ANCHORED = ["example-4.1", "nonconvex-H0", "remark-4.13", "thm-4.8", "thm-4.9", "thm-4.10", "thm-4.12", "thm-4.13",
            "thm-4.14", "rate-thm1.2", "layer-prop3.1", "dirichlet-thm6.1", "msys-thm5.1", "dpp-prop7.2"]

FAST_CELL = {
    "kind": "cell",
    "name": "quick",
    "hamiltonian": [{"family": "quadratic"}, {"family": "quadratic"}],
    "solver": {"N": 64},
    "cell": {"P": [[0.5]], "expect": {"kind": "square1", "tol": 0.01}},
}


def test_catalog_size_and_anchors():
    names = list(list_presets())
    assert len(names) >= 12
    assert set(ANCHORED) <= set(names)
    assert names == sorted(names)
    assert names == list(list_presets())


@pytest.mark.parametrize("name", list(list_presets()))
def test_every_preset_validates(name):
    cfg = load_preset(name)
    assert cfg.name == name
    # round trip through the dumped form
    assert validate(json.loads(json.dumps(cfg.model_dump(mode="json")))) == cfg


def test_unknown_keys_rejected():
    bad = dict(FAST_CELL, solvr={"N": 64})
    with pytest.raises(ConfigError):
        validate(bad)
    bad = dict(FAST_CELL, cell={"P": [[0.5]], "P_typo": 1})
    with pytest.raises(ConfigError):
        validate(bad)


def test_block_must_match_kind():
    with pytest.raises(ConfigError):
        validate(dict(FAST_CELL, kind="table"))
    with pytest.raises(ConfigError):
        validate(dict(FAST_CELL, table={"axes": [[0.0]]}))


def test_coupling_size_checked():
    with pytest.raises(ConfigError):
        validate(dict(FAST_CELL, coupling={"matrix": [[0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]]}))


def test_unknown_preset_and_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        preset_data("no-such-preset")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_list_presets_command(capsys):
    assert main(["list-presets"]) == 0
    out = capsys.readouterr().out
    assert "example-4.1" in out and "dpp-prop7.2" in out


def write_cfg(tmp_path, data):
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(data))
    return str(p)


def test_malformed_config_exit_2_without_artifacts(tmp_path):
    out = tmp_path / "out"
    bad = dict(FAST_CELL, bogus_key=1)
    assert main(["run", "--config", write_cfg(tmp_path, bad), "--out", str(out)]) == 2
    assert not out.exists()
    p = tmp_path / "broken.yaml"
    p.write_text("kind: [unclosed")
    assert main(["run", "--config", str(p), "--out", str(out)]) == 2
    assert not out.exists()


def test_subcommand_kind_mismatch_exit_2(tmp_path):
    out = tmp_path / "out"
    assert main(["table", "--config", write_cfg(tmp_path, FAST_CELL), "--out", str(out)]) == 2
    assert not out.exists()


def test_override_only_scalars(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, FAST_CELL)
    assert main(["cell", "--config", cfg, "--out", str(out), "--set", "solver.N=[1, 2]"]) == 2
    assert main(["cell", "--config", cfg, "--out", str(out), "--set", "solver.N=8"]) == 2
    assert not out.exists()
    assert main(["cell", "--config", cfg, "--out", str(out), "--set", "solver.N=128"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["solver"]["N"] == 128


def test_cell_run_writes_manifest_with_digests(tmp_path):
    out = tmp_path / "out"
    assert main(["cell", "--config", write_cfg(tmp_path, FAST_CELL), "--out", str(out), "--seed", "3"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["exit_status"] == 0 and manifest["config"]["seed"] == 3
    assert {"numpy", "python", "coupledhj"} <= set(manifest["versions"])
    listed = {a["file"]: a["sha256"] for a in manifest["artifacts"]}
    assert {"cell.csv", "correctors_0.csv", "verdicts.json"} <= set(listed)
    for name, digest in listed.items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    verdicts = json.loads((out / "verdicts.json").read_text())
    assert verdicts["passed"] and all(v["passed"] for v in verdicts["verdicts"].values())


def test_failed_verdict_exit_1(tmp_path):
    data = dict(FAST_CELL, cell={"P": [[0.5]], "expect": {"kind": "const", "value": 3.0, "tol": 0.01}})
    assert main(["run", "--config", write_cfg(tmp_path, data), "--out", str(tmp_path / "o")]) == 1


def test_nonconvergence_exit_3_keeps_partial_artifacts(tmp_path):
    out = tmp_path / "out"
    status = main(["run", "--preset", "remark-4.13", "--out", str(out), "--set", "solver.tol=1e-14",
                   "--set", "solver.max_steps=100", "--set", "solver.N=64"])
    assert status == 3
    assert (out / "manifest.json").exists() and (out / "verdicts.json").exists()
    assert json.loads((out / "verdicts.json").read_text())["error"]


@pytest.mark.parametrize("preset", ["mc-jump-law", "dpp-prop7.2"])
def test_rerun_is_byte_identical(tmp_path, preset):
    bodies = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        main(["run", "--preset", preset, "--out", str(out)])
        bodies.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
    assert bodies[0] and bodies[0] == bodies[1]


def test_seed_changes_mc_output(tmp_path):
    outs = []
    for seed in (0, 1):
        out = tmp_path / f"s{seed}"
        main(["run", "--preset", "mc-jump-law", "--out", str(out), "--seed", str(seed)])
        outs.append((out / "mc.csv").read_bytes())
    assert outs[0] != outs[1]
