import json
from fractions import Fraction
from pathlib import Path

import pytest

from orbitrewire.cli import main
from orbitrewire.config import RunConfig, parse_rational
from orbitrewire.errors import ConfigError
from orbitrewire.generate import generate_system, make_target_set
from orbitrewire.runner import execute, verify_report_file
from orbitrewire.space import FiniteSpace


BASE_CONFIG = {
    "space_size": 2048,
    "epsilon": "4/5",
    "seed": 3,
    "alpha": [{"name": "rotation", "step": 1}, {"name": "rotation", "step": 3}],
    "beta": [{"name": "rotation", "step": 1}, {"name": "rotation", "step": 7}],
    "window": [[[1]], [[1]]],
    "target_sets": [{"type": "residue", "modulus": 2, "residues": [0]}],
}


def write_config(tmp_path: Path, overrides=None) -> Path:
    data = dict(BASE_CONFIG)
    data.update(overrides or {})
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path


def test_parse_rational_forms():
    assert parse_rational("1/3") == Fraction(1, 3)
    assert parse_rational("0.24") == Fraction(6, 25)
    assert parse_rational(2) == 2
    assert parse_rational({"num": 3, "den": 7}) == Fraction(3, 7)
    with pytest.raises(ConfigError):
        parse_rational("x/y")


def test_config_validation_errors():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({})
    bad = dict(BASE_CONFIG)
    bad["epsilon"] = "0"
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)
    bad = dict(BASE_CONFIG)
    del bad["beta"]
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)
    bad = dict(BASE_CONFIG)
    bad["space_size"] = -5
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_generate_templates_validate():
    sp = FiniteSpace(36)
    sys = generate_system(sp, [{"name": "rotation", "step": 1}])
    assert sys.factors[0].orbits().is_transitive
    grid = generate_system(sp, [{"name": "grid_shift", "dims": [6, 6]}])
    assert grid.factors[0].orbits().is_transitive
    prod = generate_system(sp, [{"name": "product_cycle", "dims": [6, 6]}])
    assert prod.factors[0].orbits().n_orbits == 6
    with pytest.raises(ConfigError):
        generate_system(sp, [{"name": "grid_shift", "dims": [5, 5]}])
    with pytest.raises(ConfigError):
        generate_system(sp, [{"name": "nope"}])


def test_make_target_set_kinds():
    sp = FiniteSpace(10)
    assert make_target_set(sp, {"type": "interval", "start": 8, "length": 4}).members == {8, 9, 0, 1}
    assert make_target_set(sp, {"type": "residue", "modulus": 2, "residues": [1]}).size == 5
    assert make_target_set(sp, {"type": "indices", "members": [1, 2]}).members == {1, 2}
    with pytest.raises(ConfigError):
        make_target_set(sp, {"type": "mystery"})


def test_cli_run_and_verify_and_report(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    report_path = out / "report.json"
    assert report_path.exists()
    assert (out / "summary.csv").exists()
    assert main(["verify", str(report_path)]) == 0
    assert main(["report", str(report_path), "--csv", str(tmp_path / "again.csv")]) == 0
    assert (tmp_path / "again.csv").read_bytes() == (out / "summary.csv").read_bytes()


def test_cli_exit_code_2_on_config_errors(tmp_path):
    missing = tmp_path / "nope.json"
    assert main(["run", str(missing)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == 2
    noepsilon = write_config(tmp_path, {"epsilon": "0"})
    assert main(["run", str(noepsilon)]) == 2
    nobeta = dict(BASE_CONFIG)
    del nobeta["beta"]
    p = tmp_path / "nobeta.json"
    p.write_text(json.dumps(nobeta))
    assert main(["run", str(p)]) == 2


def test_cli_exit_code_1_on_stage_failure(tmp_path):
    # non-transitive target factor with no ergodization: pipeline error
    cfg = write_config(tmp_path, {"beta": [{"name": "rotation", "step": 2},
                                           {"name": "rotation", "step": 7}]})
    assert main(["run", str(cfg)]) == 1


def test_cli_generate_subcommand(tmp_path):
    out_cfg = tmp_path / "gen.json"
    assert main(["generate", "--scenario", "two-rotations", "--space-size", "4096",
                 "--epsilon", "1/2", "--seed", "5", "--out", str(out_cfg)]) == 0
    data = json.loads(out_cfg.read_text())
    assert data["space_size"] == 4096
    RunConfig.from_dict(data)


def test_cli_flag_overrides(tmp_path):
    cfg = write_config(tmp_path)
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    assert main(["run", str(cfg), "--seed", "9", "--out", str(out1)]) == 0
    assert main(["run", str(cfg), "--seed", "10", "--out", str(out2)]) == 0
    r1 = json.loads((out1 / "report.json").read_text())
    r2 = json.loads((out2 / "report.json").read_text())
    assert r1["config"]["seed"] == 9
    assert r2["config"]["seed"] == 10


def test_run_reports_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    out1 = tmp_path / "r1"
    out2 = tmp_path / "r2"
    assert main(["run", str(cfg), "--out", str(out1)]) == 0
    assert main(["run", str(cfg), "--out", str(out2)]) == 0
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
    assert (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()


def test_execute_report_consistency(tmp_path):
    config = RunConfig.from_dict(dict(BASE_CONFIG))
    result, report = execute(config)
    wd = report["final"]["weak_discrepancy"]
    assert Fraction(wd["num"], wd["den"]) == result.report.final_discrepancy
    assert report["final"]["orbit_equivalence"] is True
    # serialized witness re-verifies from disk
    out = tmp_path / "out"
    from orbitrewire.runner import write_report_files
    json_path, _ = write_report_files(report, out)
    assert verify_report_file(json_path)


def test_ergodize_budget_path(tmp_path):
    cfg = write_config(tmp_path, {
        "beta": [{"name": "rotation", "step": 2}, {"name": "rotation", "step": 7}],
        "ergodize_budget": "1/100",
    })
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["final"]["orbit_equivalence"] is True


def test_cli_override_eps_prime_flag(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--override-eps-prime", "1/50",
                 "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["eps_prime"] == {"num": 1, "den": 50, "approx": 0.02}


def test_explicit_template_and_serialization():
    sp = FiniteSpace(6)
    sys = generate_system(sp, [{
        "name": "explicit", "rank": 1, "torsion": [],
        "arrays": [[1, 2, 3, 4, 5, 0]],
    }])
    assert sys.factors[0].orbits().is_transitive
    from orbitrewire import Labeling, PointSet
    lab = Labeling.from_symbols(sp, list("aabbab"), alphabet=("a", "b"))
    assert lab.codes_list() == [0, 0, 1, 1, 0, 1]
    assert PointSet.from_indices(sp, [4, 1]).to_sorted_list() == [1, 4]
