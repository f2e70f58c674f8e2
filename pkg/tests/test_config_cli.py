import csv
import json
import re

import numpy as np
import pytest

from cavopt import cli
from cavopt.config import ConfigError, build, config_hash, load, read_config, scenario_names
from cavopt.optimizer import OptimizationError

from conftest import unit_square_net


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_shipped_scenarios_load():
    names = scenario_names()
    assert {"rectangle", "rectangle_sweep", "chain_penalty", "chain_flatness", "pillbox"} <= set(names)
    for name in names:
        sc = load(name)
        assert sc.p0.size == sc.pipeline.n_params


@pytest.mark.parametrize("patch, pointer", [
    (lambda d: d["optimizer"].update(p0=[1.5]), "/optimizer/p0/0"),
    (lambda d: d["geometry"].update(kind="torus"), "/geometry/kind"),
    (lambda d: d["objective"].update(bogus=1), "/objective"),
    (lambda d: d.update(extra=True), ""),
    (lambda d: d["tracking"].update(mode=0), "/tracking/mode"),
    (lambda d: d["tracking"].update(mode=99), "/tracking/mode"),
    (lambda d: d["optimizer"].update(p0=[0.5, 0.5]), "/optimizer/p0"),
    (lambda d: d["discretization"].update(kind="hdiv"), "/discretization/kind"),
])
def test_schema_errors_carry_pointer(patch, pointer):
    data = read_config("rectangle")
    patch(data)
    with pytest.raises(ConfigError) as info:
        build(data)
    assert info.value.pointer == pointer


def test_config_hash_is_canonical():
    data = read_config("rectangle")
    shuffled = json.loads(json.dumps(dict(reversed(list(data.items())))))
    assert config_hash(shuffled) == config_hash(data)
    assert re.fullmatch(r"[0-9a-f]{64}", config_hash(data))


def test_explicit_control_path_reproduces_rectangle():
    net = unit_square_net()
    base = net.with_points(net.points * [0.0, 1.0]).to_dict()
    data = read_config("rectangle")
    data["geometry"] = {"kind": "explicit-control-path", "bounds": [[0.5, 1.5]], "base_net": base,
                        "paths": [[[0, 0], [0, 0], [1, 0], [1, 0]]]}
    path_sc, rect_sc = build(data), load("rectangle")
    for p in (0.1, 0.7):
        a = path_sc.pipeline.solve(np.array([p])).solution.eigenvalues
        b = rect_sc.pipeline.solve(np.array([p])).solution.eigenvalues
        np.testing.assert_allclose(a, b, rtol=1e-10)


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "x"}))
    assert cli.main(["solve", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "config error at" in capsys.readouterr().err
    assert cli.main(["solve", "--config", "nonexistent", "--out", str(tmp_path)]) == 2
    assert cli.main(["solve", "--config", "rectangle", "--p", "2", "--out", str(tmp_path)]) == 2


def test_solve_and_single_sample_sweep_agree(tmp_path):
    assert cli.main(["solve", "--config", "rectangle", "--p", "0.4", "--out", str(tmp_path)]) == 0
    assert cli.main(["sweep", "--config", "rectangle", "--p", "0.4", "--samples", "1",
                     "--out", str(tmp_path)]) == 0
    solve = json.loads((tmp_path / "solve.json").read_text())
    table = rows(tmp_path / "sweep.csv")
    assert len(table) == 2
    header, row = table
    freqs = [float(row[header.index("f_%d" % (j + 1))]) for j in range(len(solve["frequencies"]))]
    np.testing.assert_allclose(freqs, solve["frequencies"], rtol=1e-14)
    assert solve["config_sha256"] == config_hash(read_config("rectangle"))
    assert solve["kernel_dimension"] == 0


def test_optimize_outputs(tmp_path):
    assert cli.main(["optimize", "--config", "rectangle", "--out", str(tmp_path)]) == 0
    result = json.loads((tmp_path / "result.json").read_text())
    for key in ("p_opt", "f_opt", "f_ref", "relative_error", "k_opt", "iterations", "function_calls",
                "crossing_warnings", "config_sha256", "schema_version", "metadata", "stop_reason"):
        assert key in result
    table = rows(tmp_path / "iterations.csv")
    assert table[0] == ["iter", "p1", "g", "f", "k", "phi", "warning"]
    assert len(table) == result["iterations"] + 2
    assert table[1][0] == "0" and table[1][4] == "1"
    assert result["relative_error"] < 1e-5


def test_pillbox_tracking_switch(tmp_path):
    on, off = tmp_path / "on", tmp_path / "off"
    assert cli.main(["optimize", "--config", "pillbox", "--out", str(on)]) == 0
    assert cli.main(["optimize", "--config", "pillbox", "--tracking", "off", "--out", str(off)]) == 0
    r_on = json.loads((on / "result.json").read_text())
    r_off = json.loads((off / "result.json").read_text())
    assert r_on["mode_label"] == "TM010" and len(r_on["crossing_warnings"]) == 1
    assert r_off["mode_label"] == "TE111" and r_off["crossing_warnings"] == []
    assert r_on["physical_opt"][0] == pytest.approx(0.03825, abs=2e-5)
    assert any(row[-1].startswith("CROSSING") for row in rows(on / "iterations.csv")[1:])


def test_field_output_one_peak_per_cell(tmp_path):
    assert cli.main(["field", "--config", "chain_flatness", "--samples", "32", "--out", str(tmp_path)]) == 0
    table = rows(tmp_path / "axis.csv")
    header = table[0]
    assert header == ["xi", "x", "y", "value", "cell", "peak"]
    body = table[1:]
    assert len(body) == 96
    peaks = [r for r in body if r[5] == "1"]
    assert sorted(r[4] for r in peaks) == ["1", "2", "3"]
    summary = json.loads((tmp_path / "field.json").read_text())
    assert 0 < summary["eta1"] <= 1 and 0 < summary["eta2"] <= 1


def test_check_derivatives_exit_codes(tmp_path):
    assert cli.main(["check-derivatives", "--config", "rectangle", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "derivatives.json").read_text())
    assert report["passed"] and report["failures"] == []
    assert cli.main(["check-derivatives", "--config", "chain_penalty", "--delta", "0.2",
                     "--out", str(tmp_path)]) == 4


def test_numerical_failure_exit_code(tmp_path, monkeypatch, capsys):
    def boom(objective, p0, cfg):
        try:
            raise FloatingPointError("singular")
        except FloatingPointError as exc:
            partial = type("Partial", (), {"error": "FloatingPointError: singular", "iterations": 2,
                                            "function_calls": 5})()
            raise OptimizationError(str(exc), partial) from exc

    monkeypatch.setattr(cli, "optimize", boom)
    assert cli.main(["optimize", "--config", "rectangle", "--out", str(tmp_path)]) == 3
    error = json.loads((tmp_path / "error.json").read_text())
    assert error["iterations"] == 2 and "singular" in error["error"]
    assert "optimization failed" in capsys.readouterr().err


def test_argparse_rejects_unknown_flags():
    with pytest.raises(SystemExit) as info:
        cli.main(["solve", "--config", "rectangle", "--bogus"])
    assert info.value.code == 2
