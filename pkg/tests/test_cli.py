import json
import math

import pytest

from solitonqm.cli import (
    COMMAND_PARAMS,
    EXIT_FAIL,
    EXIT_PASS,
    EXIT_USAGE,
    UsageError,
    execute,
    main,
    parse_config,
)


def test_defaults():
    cfg = parse_config(["soliton-solve"])
    assert cfg.command == "soliton-solve" and cfg.workers == 1 and cfg.label is None
    assert cfg.parameters["omega"] == 0.9 and cfg.parameters["lambda"] == pytest.approx(4 * math.pi)
    assert parse_config(["ensemble-born"]).parameters["cell_volume"] is None


def test_flags_and_global_positions():
    cfg = parse_config(["--seed", "7", "epr-exact", "--n-angles", "5", "--workers", "3"])
    assert (cfg.seed, cfg.workers, cfg.parameters["n_angles"]) == (7, 3, 5)
    assert parse_config(["qubit-chsh", "--refine", "no"]).parameters["refine"] is False


def test_precedence_file_then_flag(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# model\nomega = 0.5\nspacing=0.02\nseed = 11\n")
    cfg = parse_config(["soliton-solve", "--config", str(f), "--omega", "0.7"])
    assert cfg.parameters["omega"] == 0.7
    assert cfg.parameters["spacing"] == 0.02 and cfg.seed == 11


@pytest.mark.parametrize("argv", [
    [], ["no-such-command"], ["soliton-solve", "--no-such-flag", "1"],
    ["soliton-solve", "--omega", "fast"], ["epr-exact", "--workers", "0"],
])
def test_usage_errors(argv):
    with pytest.raises(UsageError):
        parse_config(argv)
    assert main(argv) == EXIT_USAGE


def test_unknown_config_key(tmp_path):
    f = tmp_path / "bad.cfg"
    f.write_text("omgea = 0.5\n")
    assert main(["soliton-solve", "--config", str(f)]) == EXIT_USAGE
    f.write_text("just words\n")
    assert main(["soliton-solve", "--config", str(f)]) == EXIT_USAGE


def test_invalid_frequency_exit_code(tmp_path):
    code = main(["soliton-solve", "--omega", "1.5", "--output-dir", str(tmp_path)])
    assert code not in (EXIT_PASS, EXIT_FAIL)


def test_every_command_has_a_handler():
    from solitonqm.cli import HANDLERS
    assert set(HANDLERS) == set(COMMAND_PARAMS)


def test_epr_exact_run(tmp_path, capsys):
    code = main(["epr-exact", "--n-angles", "19", "--output-dir", str(tmp_path), "--label", "r1"])
    assert code == EXIT_PASS
    run = tmp_path / "epr-exact" / "r1"
    report = json.loads((run / "report.json").read_text())
    assert report["passed"] and report["config"]["parameters"]["n_angles"] == 19
    lines = (run / "curve.csv").read_text().splitlines()
    assert lines[0] == "theta,qm,soliton_exact,soliton_mc,mc_stderr" and len(lines) == 20
    assert "PASS" in capsys.readouterr().out


def test_chsh_triangle(tmp_path):
    rep = execute(parse_config(["qubit-chsh", "--resolution", "64", "--output-dir", str(tmp_path)]))
    assert rep.passed
    assert rep.summary["max_S"] == pytest.approx(2.0, abs=1e-9)


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SOLITONQM_OUTPUT", str(tmp_path / "env"))
    assert main(["qubit-circuit", "--label", "x"]) == EXIT_PASS
    assert (tmp_path / "env" / "qubit-circuit" / "x" / "report.json").exists()


SMALL_RUNS = [
    ["ensemble-born", "--n-trials", "2000", "--domain-length", "400"],
    ["wiener-check", "--n-paths", "2000", "--n-cov-paths", "4000", "--n-intervals", "64"],
    ["qubit-correlation", "--n-samples", "5000", "--n-pairs", "8"],
]


@pytest.mark.parametrize("argv", SMALL_RUNS, ids=lambda a: a[0])
def test_csv_independent_of_workers(tmp_path, argv):
    out = {}
    for w in (1, 8):
        rep = execute(parse_config(argv + ["--workers", str(w), "--output-dir", str(tmp_path / str(w)),
                                           "--label", "r"]))
        out[w] = {p.name: p.read_bytes() for p in rep.files if p.suffix == ".csv"}
    assert out[1] and out[1] == out[8]
