import copy
import json

import numpy as np
import pytest

from stabgap import ball_cloud, list_catalog
from stabgap.cli import (
    ENV_SEED,
    ENV_WORKERS,
    SCHEMA_VERSION,
    ConfigFileMissing,
    ConfigParseError,
    ConfigValidationError,
    build_experiment,
    emit,
    load_config,
    main,
    parse_config,
    run_experiment,
)
from stabgap.core import ContractViolation

MINIMAL = {"problem": {"name": "riccati"}}

# ladders deep enough that Lipschitz growth washes out of the per-rung
# slopes and the gap curve reaches its discrete plateau
SMALL = {
    "problem": {"name": "riccati"},
    "sampling": {"kind": "grid-in-box", "bounds": [[-1.0, 0.5]], "counts": [12]},
    "ladders": {"T": 1.0, "dt0": 0.25, "dt_depth": 4, "rho0": 0.5, "rho_depth": 5},
    "output": {"format": "both"},
}

SMALL_TOML = """
[problem]
name = "riccati"

[sampling]
kind = "grid-in-box"
bounds = [[-1.0, 0.5]]
counts = [12]

[ladders]
T = 1.0
dt0 = 0.25
dt_depth = 4
rho0 = 0.5
rho_depth = 5

[output]
format = "both"
"""


@pytest.fixture(scope="module")
def small_doc():
    return run_experiment(parse_config(copy.deepcopy(SMALL)))


@pytest.fixture()
def small_config_file(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL_TOML)
    return path


# ---------------------------------------------------------------------------
# config parsing


def test_parse_minimal_fills_catalog_defaults():
    cfg = parse_config(copy.deepcopy(MINIMAL))
    assert cfg.problem == "riccati"
    assert cfg.method == "explicit-euler-riccati"
    assert cfg.sampling is None and cfg.seed is None
    assert cfg.horizon == 1.0 and cfg.dt0 == 0.1
    assert cfg.dt_depth == 6
    assert cfg.rho0 == 0.5 and cfg.rho_depth == 7
    assert cfg.rho_prime == 0.25 and cfg.rho == 0.25
    assert cfg.theta is None and cfg.t_samples == 17
    assert cfg.out_dir == "out" and cfg.out_format == "json"


def test_parse_rejects_unknown_section():
    with pytest.raises(ConfigValidationError, match=r"unknown section \[problems\]"):
        parse_config({"problems": {"name": "riccati"}})


def test_parse_rejects_unknown_key():
    with pytest.raises(ConfigValidationError, match="unknown key problem.flavor"):
        parse_config({"problem": {"name": "riccati", "flavor": "mild"}})


def test_parse_rejects_wrong_types():
    with pytest.raises(ConfigValidationError, match="ladders.T must have type"):
        parse_config({"problem": {"name": "riccati"}, "ladders": {"T": "soon"}})
    # TOML booleans are ints in Python, but not numbers here
    with pytest.raises(ConfigValidationError, match="ladders.T must have type"):
        parse_config({"problem": {"name": "riccati"}, "ladders": {"T": True}})


def test_parse_requires_a_known_problem():
    with pytest.raises(ConfigValidationError, match="problem.name is required"):
        parse_config({})
    with pytest.raises(ConfigValidationError, match="choices"):
        parse_config({"problem": {"name": "burgers"}})


def test_parse_rejects_inapplicable_override():
    with pytest.raises(ConfigValidationError, match="does not apply to 'riccati'"):
        parse_config({"problem": {"name": "riccati", "rate": 2.0}})


def test_parse_rejects_unavailable_method():
    with pytest.raises(ConfigValidationError, match="choices"):
        parse_config({"problem": {"name": "riccati"},
                      "method": {"name": "ftcs-heat"}})


def test_parse_rejects_dt0_exceeding_horizon():
    with pytest.raises(ConfigValidationError, match="exceeds the horizon"):
        parse_config({"problem": {"name": "riccati"},
                      "ladders": {"T": 0.5, "dt0": 0.6}})


def test_parse_validates_sampling_tables():
    base = {"problem": {"name": "riccati"}}
    with pytest.raises(ConfigValidationError, match="sampling.kind is required"):
        parse_config({**base, "sampling": {"count": 5}})
    with pytest.raises(ConfigValidationError, match="sampling.kind must be"):
        parse_config({**base, "sampling": {"kind": "sphere"}})
    with pytest.raises(ConfigValidationError, match="sampling.radius is required"):
        parse_config({**base, "sampling": {"kind": "ball", "center": [0.0],
                                           "count": 5}})
    with pytest.raises(ConfigValidationError, match="does not apply to kind"):
        parse_config({**base, "sampling": {"kind": "grid-in-box",
                                           "bounds": [[0.0, 1.0]], "counts": [3],
                                           "radius": 1.0}})
    with pytest.raises(ConfigValidationError, match="sampling.radius must be positive"):
        parse_config({**base, "sampling": {"kind": "ball", "center": [0.0],
                                           "radius": -1.0, "count": 5}})
    with pytest.raises(ConfigValidationError, match="sampling.count must be positive"):
        parse_config({**base, "sampling": {"kind": "ball", "center": [0.0],
                                           "radius": 1.0, "count": 0}})
    with pytest.raises(ConfigValidationError, match="sampling.seed must be nonnegative"):
        parse_config({**base, "sampling": {"kind": "ball", "center": [0.0],
                                           "radius": 1.0, "count": 5, "seed": -1}})


def test_parse_validates_tolerances():
    base = {"problem": {"name": "riccati"}}
    with pytest.raises(ConfigValidationError, match="rho_prime must be positive"):
        parse_config({**base, "tolerances": {"rho_prime": 0.0}})
    with pytest.raises(ConfigValidationError, match="theta must be finite"):
        parse_config({**base, "tolerances": {"theta": -0.1}})
    with pytest.raises(ConfigValidationError, match="t_samples must be at least 2"):
        parse_config({**base, "tolerances": {"t_samples": 1}})
    with pytest.raises(ConfigValidationError, match="growth_threshold must be positive"):
        parse_config({**base, "tolerances": {"growth_threshold": 0.0}})
    cfg = parse_config({**base, "tolerances": {"theta": 0.0,
                                               "growth_threshold": 0.02}})
    assert cfg.theta == 0.0
    assert cfg.thresholds.growth_threshold == 0.02


def test_parse_validates_output_and_size():
    with pytest.raises(ConfigValidationError, match="output.format must be one of"):
        parse_config({"problem": {"name": "riccati"},
                      "output": {"format": "yaml"}})
    with pytest.raises(ConfigValidationError, match="size must be at least 2"):
        parse_config({"problem": {"name": "heat", "size": 1}})


# ---------------------------------------------------------------------------
# config loading


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigFileMissing):
        load_config(tmp_path / "nope.toml")


def test_load_config_bad_toml(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[problem\nname = riccati")
    with pytest.raises(ConfigParseError):
        load_config(path)


def test_load_config_round_trips_the_small_experiment(small_config_file):
    assert load_config(small_config_file) == parse_config(copy.deepcopy(SMALL))


# ---------------------------------------------------------------------------
# experiment construction


def test_build_experiment_uses_catalog_defaults():
    problem, method, cloud = build_experiment(parse_config(copy.deepcopy(MINIMAL)))
    entry = list_catalog().get("riccati")
    assert problem.name == "riccati"
    assert method.name == "explicit-euler-riccati"
    assert cloud.fingerprint() == entry.default_cloud.fingerprint()


def test_seed_override_rerolls_only_ball_defaults():
    # the riccati default is a grid, so a seed changes nothing
    cfg = parse_config(copy.deepcopy(MINIMAL)).with_seed(7)
    _, _, cloud = build_experiment(cfg)
    assert cloud.fingerprint() == list_catalog().get("riccati").default_cloud.fingerprint()

    # the heat default is a ball, so the seed regenerates the points
    entry = list_catalog().get("heat")
    cfg = parse_config({"problem": {"name": "heat"}}).with_seed(7)
    _, _, cloud = build_experiment(cfg)
    assert cloud.fingerprint() != entry.default_cloud.fingerprint()
    expected = ball_cloud(seed=7, **entry.default_cloud.params)
    assert np.array_equal(cloud.points, expected.points)


def test_explicit_ball_sampling_defaults_to_seed_42():
    raw = {"problem": {"name": "riccati"},
           "sampling": {"kind": "ball", "center": [0.0], "radius": 0.3,
                        "count": 6}}
    _, _, cloud = build_experiment(parse_config(copy.deepcopy(raw)))
    assert np.array_equal(cloud.points,
                          ball_cloud([0.0], 0.3, 6, seed=42).points)
    raw["sampling"]["seed"] = 5
    _, _, seeded = build_experiment(parse_config(raw))
    assert np.array_equal(seeded.points,
                          ball_cloud([0.0], 0.3, 6, seed=5).points)


def test_build_experiment_rejects_dim_mismatch():
    cfg = parse_config({"problem": {"name": "heat"},
                        "sampling": {"kind": "explicit-list",
                                     "points": [[0.0, 0.0, 0.0]]}})
    with pytest.raises(ConfigValidationError, match="does not match problem dim"):
        build_experiment(cfg)


def test_build_experiment_rejects_unbuildable_sampling():
    cfg = parse_config({"problem": {"name": "riccati"},
                        "sampling": {"kind": "grid-in-box",
                                     "bounds": [[0.0, 1.0], [0.0, 1.0]],
                                     "counts": [3]}})
    with pytest.raises(ConfigValidationError, match="not buildable"):
        build_experiment(cfg)


# ---------------------------------------------------------------------------
# report document and emitters


def test_document_shape_and_determinism(small_doc):
    doc = small_doc
    assert doc["schema_version"] == SCHEMA_VERSION
    assert doc["cloud"]["count"] == 12 and doc["cloud"]["dim"] == 1
    assert len(doc["ladders"]["dt"]) == 5
    assert len(doc["ladders"]["rho"]) == 6
    for kind in ("local", "distant", "full"):
        est = doc["estimates"][kind]
        assert est["kind"] == kind
        assert est["constant"] > 0
        assert {"u_index", "v_index", "n", "dt", "ratio"} <= set(est["witness"])
    assert doc["verdicts"]["gap"] == "bounded"
    assert [imp["status"] for imp in doc["implications"]] == ["holds"] * 4
    text = json.dumps(doc)
    # runtime knobs and wall-clock state must never leak into the report
    assert "workers" not in text
    assert "timestamp" not in text.lower()
    # byte-identical across worker counts
    rerun = run_experiment(parse_config(copy.deepcopy(SMALL)), workers=3)
    assert json.dumps(rerun) == text


def test_emit_json_round_trips(small_doc, tmp_path):
    paths = emit(small_doc, tmp_path, "json")
    assert [p.name for p in paths] == ["report.json"]
    assert json.loads(paths[0].read_text()) == small_doc


def test_emit_csv_bundle(small_doc, tmp_path):
    paths = emit(small_doc, tmp_path, "both")
    assert [p.name for p in paths] == [
        "report.json", "gap_curve.csv", "convergence.csv", "consistency.csv"]

    gap_lines = (tmp_path / "gap_curve.csv").read_text().strip().splitlines()
    assert gap_lines[0] == "rho,L2estimate"
    assert len(gap_lines) == 1 + len(small_doc["ladders"]["rho"])
    for line, rung in zip(gap_lines[1:], small_doc["gap_curve"]["rungs"]):
        rho_text, val_text = line.split(",")
        assert float(rho_text) == rung["rho"]
        assert float(val_text) == rung["constant"]

    conv_lines = (tmp_path / "convergence.csv").read_text().strip().splitlines()
    assert conv_lines[0] == "dt,sup_error"
    assert len(conv_lines) == 1 + len(small_doc["ladders"]["dt"])
    by_dt = {s["dt"]: s["sup_error"] for s in small_doc["convergence"]["samples"]}
    for line in conv_lines[1:]:
        dt_text, err_text = line.split(",")
        assert float(err_text) == by_dt[float(dt_text)]

    cons_lines = (tmp_path / "consistency.csv").read_text().strip().splitlines()
    assert cons_lines[0] == "dt,defect"
    assert len(cons_lines) == 1 + len(small_doc["ladders"]["dt"])


def test_emit_rejects_unknown_format(small_doc, tmp_path):
    with pytest.raises(ContractViolation):
        emit(small_doc, tmp_path, "parquet")


# ---------------------------------------------------------------------------
# command line


def test_main_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    for name in ("riccati", "exponential", "sqrt-drift", "heat", "advection"):
        assert name in out


def test_main_run_small_experiment(small_config_file, tmp_path, capsys):
    out_dir = tmp_path / "results"
    code = main(["run", "--config", str(small_config_file),
                 "--out", str(out_dir)])
    captured = capsys.readouterr()
    assert code == 0
    assert (out_dir / "report.json").is_file()
    assert (out_dir / "gap_curve.csv").is_file()
    assert "local=stable" in captured.out
    assert "implication:" in captured.out
    assert "wrote" in captured.out


def test_main_format_flag_overrides_config(small_config_file, tmp_path, capsys):
    out_dir = tmp_path / "results"
    code = main(["run", "--config", str(small_config_file),
                 "--out", str(out_dir), "--format", "json"])
    capsys.readouterr()
    assert code == 0
    assert (out_dir / "report.json").is_file()
    assert not (out_dir / "gap_curve.csv").exists()


def test_main_gap_subcommand(small_config_file, tmp_path, capsys):
    out_dir = tmp_path / "gap"
    code = main(["gap", "--config", str(small_config_file),
                 "--out", str(out_dir)])
    captured = capsys.readouterr()
    assert code == 0
    assert "gap verdict: bounded" in captured.out
    lines = (out_dir / "gap_curve.csv").read_text().strip().splitlines()
    assert lines[0] == "rho,L2estimate"
    assert len(lines) == 7


def test_main_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 1


def test_main_config_errors_exit_1(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == 1
    assert "error:" in capsys.readouterr().err
    bad = tmp_path / "bad.toml"
    bad.write_text("problem = ")
    assert main(["run", "--config", str(bad)]) == 1
    assert "error:" in capsys.readouterr().err


def test_main_workers_resolution(small_config_file, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(ENV_WORKERS, "not-a-number")
    assert main(["run", "--config", str(small_config_file),
                 "--out", str(tmp_path / "a")]) == 1
    assert ENV_WORKERS in capsys.readouterr().err

    monkeypatch.setenv(ENV_WORKERS, "0")
    assert main(["run", "--config", str(small_config_file),
                 "--out", str(tmp_path / "b")]) == 1
    capsys.readouterr()

    monkeypatch.setenv(ENV_WORKERS, "2")
    assert main(["run", "--config", str(small_config_file),
                 "--out", str(tmp_path / "c")]) == 0
    capsys.readouterr()

    # the flag wins over the environment
    monkeypatch.setenv(ENV_WORKERS, "not-a-number")
    assert main(["run", "--config", str(small_config_file),
                 "--out", str(tmp_path / "d"), "--workers", "1"]) == 0
    capsys.readouterr()


def test_main_seed_env_must_be_integer(small_config_file, tmp_path,
                                       monkeypatch, capsys):
    monkeypatch.setenv(ENV_SEED, "lucky")
    assert main(["run", "--config", str(small_config_file),
                 "--out", str(tmp_path / "a")]) == 1
    assert ENV_SEED in capsys.readouterr().err


def test_main_violated_implication_exits_2(small_doc, small_config_file,
                                           tmp_path, monkeypatch, capsys):
    doctored = copy.deepcopy(small_doc)
    doctored["implications"][1]["status"] = "violated"
    monkeypatch.setattr("stabgap.cli.run_experiment",
                        lambda cfg, workers=1: doctored)
    code = main(["run", "--config", str(small_config_file),
                 "--out", str(tmp_path / "v"), "--format", "json"])
    capsys.readouterr()
    assert code == 2


def test_main_single_point_cloud_degrades_gracefully(tmp_path, capsys):
    path = tmp_path / "single.toml"
    path.write_text("""
[problem]
name = "riccati"

[sampling]
kind = "explicit-list"
points = [[0.0]]

[ladders]
dt0 = 0.25
dt_depth = 1
rho_depth = 3
""")
    code = main(["run", "--config", str(path), "--out", str(tmp_path / "out"),
                 "--format", "json"])
    captured = capsys.readouterr()
    assert code == 0
    assert "local=inconclusive" in captured.out
    assert "warning:" in captured.err
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    assert doc["estimates"]["local"] is None
    assert doc["checks"]["partition_identity"]["vacuous"]
    assert doc["checks"]["convergence_bound"]["status"] == "hypothesis-not-met"
