import json

import pytest

from beltforge.cli import main
from beltforge.errors import ConfigError, StageDependencyError


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out.strip()
    return code, (json.loads(out.splitlines()[-1]) if out else {})


def test_stage_chain(tiny_config, tmp_path, capsys, warm_kernels):
    out = str(tmp_path / "store")
    code, fit = _run(capsys, "fit-belt", "--config", str(tiny_config), "--out", out)
    assert code == 0
    code, planned = _run(capsys, "plan", "--config", str(tiny_config),
                         "--out", out, "--id", fit["belt_params"])
    assert code == 0
    assert planned["max_violation"] <= 1e-4
    code, corr = _run(capsys, "correct-synth", "--config", str(tiny_config),
                      "--out", out, "--id", planned["path"])
    assert code == 0 and len(corr["corrections"]) == 2
    code, aug = _run(capsys, "augment", "--config", str(tiny_config),
                     "--out", out, "--id", planned["path"])
    assert code == 0 and len(aug["virtual"]) == 6
    code, trained = _run(capsys, "train", "--config", str(tiny_config),
                         "--out", out, "--id", planned["path"])
    assert code == 0
    code, rolled = _run(capsys, "rollout", "--config", str(tiny_config),
                        "--out", out, "--id", trained["policy"])
    assert code == 0
    code, report = _run(capsys, "eval", "--config", str(tiny_config),
                        "--out", out, "--id", rolled["learned_path"])
    assert code == 0
    assert report["mean_rmse"] >= 0
    assert (tmp_path / "store" / report["csv"]).exists()
    manifest = json.loads((tmp_path / "store" / "manifest.json").read_text())
    assert [s["stage"] for s in manifest["stages"]] == [
        "fit-belt", "plan", "correct-synth", "augment", "train", "rollout",
        "eval"]


def test_plan_unconstrained_flags_linear_seed(tiny_config, tmp_path, capsys):
    cfg = json.loads(tiny_config.read_text())
    cfg["scene"] = str(tiny_config.parent / "empty_scene.json")
    (tiny_config.parent / "empty_scene.json").write_text(json.dumps({
        "obstacles": [],
        "pulley_a_center": [5.0, 5.0, 0.0],
        "pulley_b_center": [6.0, 5.0, 0.0],
        "belt_anchor": [5.0, 5.0, 0.0],
        "safety_margin": 0.01,
    }))
    cfg["bounds"] = {"f_lower": 0.0, "f_upper": 1e9}
    free = tiny_config.parent / "free_config.json"
    free.write_text(json.dumps(cfg))
    out = str(tmp_path / "store")
    code, planned = _run(capsys, "plan", "--config", str(free), "--out", out)
    assert code == 0
    assert planned["matches_linear_seed"] is True


def test_pipeline_deterministic(tiny_config, tmp_path, capsys):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(["pipeline", "--config", str(tiny_config), "--out", str(a),
                 "--seed", "9"]) == 0
    assert main(["pipeline", "--config", str(tiny_config), "--out", str(b),
                 "--seed", "9"]) == 0
    capsys.readouterr()
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    names_a = sorted(p.name for p in a.glob("*.json"))
    names_b = sorted(p.name for p in b.glob("*.json"))
    assert names_a == names_b
    for name in names_a:
        if name == "run_log.json":  # timings live outside the manifest
            continue
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_missing_upstream_artifact_exit_code(tiny_config, tmp_path, capsys):
    code = main(["augment", "--config", str(tiny_config),
                 "--out", str(tmp_path / "s"), "--id", "doesnotexist123"])
    capsys.readouterr()
    assert code == StageDependencyError.exit_code


def test_missing_config_exit_code(tmp_path, capsys):
    code = main(["plan", "--config", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "s")])
    capsys.readouterr()
    assert code == ConfigError.exit_code


def test_stage_requires_id(tiny_config, tmp_path, capsys):
    code = main(["train", "--config", str(tiny_config),
                 "--out", str(tmp_path / "s")])
    capsys.readouterr()
    assert code != 0


def test_augment_without_corrections_fails(tiny_config, tmp_path, capsys):
    out = str(tmp_path / "store")
    code, fit = _run(capsys, "fit-belt", "--config", str(tiny_config), "--out", out)
    code, planned = _run(capsys, "plan", "--config", str(tiny_config),
                         "--out", out, "--id", fit["belt_params"])
    code = main(["augment", "--config", str(tiny_config), "--out", out,
                 "--id", planned["path"]])
    capsys.readouterr()
    assert code == StageDependencyError.exit_code
