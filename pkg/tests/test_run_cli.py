import json
from pathlib import Path

import pytest

from shear_damping.harness import RunConfig, parse_run_config
from shear_damping.run import _build_parser, _load_profile, _overrides, _select, main


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch, tmp_path: Path):
    for name in ("SHEAR_DAMPING_OUTPUT_DIR", "SHEAR_DAMPING_JOBS", "SHEAR_DAMPING_CACHE", "SHEAR_DAMPING_SEED"):
        # setenv first so teardown also removes values loaded from a .env file
        monkeypatch.setenv(name, "")
        monkeypatch.delenv(name)
    monkeypatch.setenv("SHEAR_DAMPING_ENV", str(tmp_path / "missing.env"))


def _config(tmp_path: Path, payload) -> str:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def test_parser_exposes_every_experiment():
    parser = _build_parser()
    args = parser.parse_args(["scan", "--seed", "4", "--jobs", "2"])
    assert (args.command, args.seed, args.jobs) == ("scan", 4, 2)
    with pytest.raises(SystemExit):
        parser.parse_args(["run"])


def test_single_experiment_command_writes_artifact(tmp_path: Path):
    out = tmp_path / "out"
    assert main(["cutoff", "--out", str(out)]) == 0
    assert (out / "cutoff" / "cutoff.csv").exists()
    assert (out / "manifest.json").exists()


def test_output_dir_falls_back_to_environment(tmp_path: Path, monkeypatch):
    out = tmp_path / "from-env"
    monkeypatch.setenv("SHEAR_DAMPING_OUTPUT_DIR", str(out))
    assert main(["cutoff"]) == 0
    assert (out / "summary.csv").exists()


def test_env_file_supplies_defaults(tmp_path: Path):
    out = tmp_path / "dotenv-out"
    env = tmp_path / "lab.env"
    env.write_text(f"SHEAR_DAMPING_OUTPUT_DIR={out}\nSHEAR_DAMPING_SEED=5\n", encoding="utf-8")
    assert main(["--env", str(env), "cutoff"]) == 0
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["seed"] == 5


def test_jobs_must_be_positive(tmp_path: Path):
    with pytest.raises(SystemExit) as excinfo:
        main(["cutoff", "--jobs", "0", "--out", str(tmp_path)])
    assert excinfo.value.code == 2


def test_invalid_config_exits_with_config_error(tmp_path: Path, capsys):
    path = _config(tmp_path, {"weight": {"lam": 0.2, "lam_prime": 0.4}, "experiments": ["cutoff"]})
    assert main(["run", "--config", path, "--out", str(tmp_path / "out")]) == 2
    assert "config error" in capsys.readouterr().err


def test_accept_requires_every_criterion(tmp_path: Path, capsys):
    path = _config(tmp_path, {"experiments": [{"kind": "cutoff", "criterion": 1}]})
    assert main(["accept", "--config", path, "--out", str(tmp_path / "out")]) == 2
    assert "without an experiment" in capsys.readouterr().err


def test_failing_criterion_sets_exit_code(tmp_path: Path):
    path = _config(
        tmp_path,
        {"experiments": ["cutoff", {"id": "broken", "kind": "evolve", "criterion": 1, "params": {"ks": [0]}}]},
    )
    out = tmp_path / "out"
    assert main(["run", "--config", path, "--out", str(out)]) == 1
    result = json.loads((out / "broken" / "result.json").read_text(encoding="utf-8"))
    assert result["status"] == "error"


def test_report_rebuilds_summary(tmp_path: Path):
    out = tmp_path / "out"
    assert main(["cutoff", "--out", str(out)]) == 0
    (out / "summary.csv").unlink()
    assert main(["report", "--out", str(out)]) == 0
    assert (out / "summary.csv").read_text(encoding="utf-8").startswith("experiment,quantity,fitted,reference")


def test_report_without_ledger_is_usage_error(tmp_path: Path):
    with pytest.raises(SystemExit) as excinfo:
        main(["report", "--out", str(tmp_path)])
    assert excinfo.value.code == 2


def test_evolve_flags_become_experiment_params(tmp_path: Path):
    profile = tmp_path / "bump.json"
    profile.write_text(json.dumps({"profile": {"kind": "bump", "amplitude": 0.05}}), encoding="utf-8")
    args = _build_parser().parse_args(
        ["evolve", "--profile", str(profile), "--k", "1..4", "--T", "20", "--dt", "auto", "--n", "512"]
    )
    cfg = _select(RunConfig(), "evolve", _overrides(args), _load_profile(args.profile))
    (spec,) = cfg.experiments
    assert spec.params == {"ks": [1, 2, 3, 4], "T": 20.0, "dt": None, "n": 512}
    assert spec.profile == {"kind": "bump", "amplitude": 0.05}


def test_flags_override_config_entries(tmp_path: Path):
    path = _config(tmp_path, {"experiments": [{"id": "orr", "kind": "evolve", "params": {"ks": [1], "T": 5}}]})
    args = _build_parser().parse_args(["evolve", "--config", path, "--k", "2,3", "--dt", "0.01"])
    cfg = _select(parse_run_config(Path(path)), "evolve", _overrides(args), None)
    (spec,) = cfg.experiments
    assert spec.id == "orr"
    assert spec.params == {"ks": [2, 3], "T": 5, "dt": 0.01}
    assert _load_profile("remark") == {"kind": "remark"}


@pytest.mark.parametrize(
    "argv",
    [
        ["evolve", "--k", "0..0"],
        ["evolve", "--k", "3..1"],
        ["evolve", "--dt", "-1"],
        ["spectral", "--eps", "2^-6..2^-3"],
        ["spectral", "--eps", "0.001"],
        ["spectral", "--y0-grid", "8"],
        ["spectral", "--t", "a,b"],
    ],
)
def test_malformed_ranges_are_usage_errors(argv, tmp_path: Path):
    with pytest.raises(SystemExit) as excinfo:
        main([*argv, "--out", str(tmp_path)])
    assert excinfo.value.code == 2


def test_spectral_flags_assemble_the_stream(tmp_path: Path):
    out = tmp_path / "out"
    argv = ["spectral", "--profile", "couette", "--k", "1", "--t", "0,2", "--y0-grid", "64", "--eps", "2^-2..2^-3"]
    main([*argv, "--out", str(out)])
    result = json.loads((out / "spectral" / "result.json").read_text(encoding="utf-8"))
    assert result["status"] != "error"
    assert result["summary"]["n"] == 64
    assert result["summary"]["schedule"] == [0.25, 0.125]
    header = (out / "spectral" / "stream_k1.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "y,psi_abs_t0,psi_abs_t2"


def test_cutoff_csv_goes_to_stdout(tmp_path: Path, capsys):
    out = tmp_path / "out"
    assert main(["cutoff", "--a", "1", "--n", "64", "--csv", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "x,psi_a1,phi\n" in printed
    assert (out / "cutoff" / "cutoff.csv").read_text(encoding="utf-8") in printed


def test_cutoff_csv_copies_to_a_path(tmp_path: Path):
    target = tmp_path / "tables" / "cutoff.csv"
    out = tmp_path / "out"
    assert main(["cutoff", "--a", "1", "--a", "2", "--n", "33", "--csv", str(target), "--out", str(out)]) == 0
    assert target.read_bytes() == (out / "cutoff" / "cutoff.csv").read_bytes()
    assert target.read_text(encoding="utf-8").splitlines()[0] == "x,psi_a1,psi_a2,phi"


def test_unreadable_profile_file_is_config_error(tmp_path: Path, capsys):
    broken = tmp_path / "profile.json"
    broken.write_text("{not json", encoding="utf-8")
    assert main(["evolve", "--profile", str(broken), "--out", str(tmp_path / "out")]) == 2
    assert "invalid JSON in profile file" in capsys.readouterr().err
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"kind": "vortex"}), encoding="utf-8")
    assert main(["evolve", "--profile", str(wrong), "--out", str(tmp_path / "out")]) == 2
