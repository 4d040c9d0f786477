import json
from pathlib import Path

import pytest

from shear_damping.cache_meta import hash_config
from shear_damping.harness import (
    ACCEPTANCE_CRITERIA,
    ConfigError,
    ExperimentResult,
    ExperimentSpec,
    RunArtifact,
    RunConfig,
    WeightParams,
    acceptance_gaps,
    check_run_config,
    compare_solvers,
    execute,
    parse_run_config,
    report_from_ledger,
    run,
    run_config_from_dict,
)
from shear_damping.manifest import RunManifest, append_ledger, load_manifest, read_ledger
from shear_damping.validation import SchemaValidationError

ROOT = Path(__file__).resolve().parents[1]


def _write_config(tmp_path: Path, payload) -> Path:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def test_experiments_accept_names_and_objects():
    cfg = run_config_from_dict(
        {"experiments": ["cutoff", {"id": "bump-check", "kind": "check-profile", "criterion": 1}]}
    )
    assert [spec.id for spec in cfg.experiments] == ["cutoff", "bump-check"]
    assert cfg.experiments[1].criterion == 1
    assert cfg.weight.primed == pytest.approx(0.16)


def test_unknown_kind_is_rejected():
    with pytest.raises(ConfigError, match="unknown experiment kind"):
        run_config_from_dict({"experiments": ["vortex-merger"]})


@pytest.mark.parametrize(
    "payload, message",
    [
        ({"weight": {"lam": 0.2, "lam_prime": 0.3}}, "lambda' < lambda"),
        ({"spectral": {"eps": [6, 3]}}, "eps schedule must shrink"),
        ({"profile": {"kind": "bump", "theta0": 0.05, "theta1": 0.06}}, "theta1 < theta0"),
        ({"experiments": ["cutoff", "cutoff"]}, "duplicate experiment ids"),
        ({"experiments": [{"kind": "cutoff", "criterion": 10}]}, "unknown acceptance criterion"),
        (
            {"experiments": [{"id": "a", "kind": "cutoff", "criterion": 2}, {"id": "b", "kind": "scan", "criterion": 2}]},
            "more than one experiment",
        ),
    ],
)
def test_inconsistent_configs_are_rejected(payload, message):
    with pytest.raises(ConfigError, match=message):
        run_config_from_dict(payload)


def test_schema_rejects_coarse_solver_grid(tmp_path: Path):
    path = _write_config(tmp_path, {"solver": {"n": 8}})
    with pytest.raises(SchemaValidationError, match="solver/n"):
        parse_run_config(path)


def test_non_object_config_is_rejected(tmp_path: Path):
    path = _write_config(tmp_path, ["cutoff"])
    with pytest.raises(RuntimeError, match="expected object"):
        parse_run_config(path)


def test_shipped_configs_parse():
    acceptance = parse_run_config(ROOT / "configs" / "acceptance.json")
    assert acceptance_gaps(acceptance) == []
    assert sorted(spec.criterion for spec in acceptance.experiments) == list(ACCEPTANCE_CRITERIA)
    parse_run_config(ROOT / "configs" / "smoke.json")
    compare = parse_run_config(ROOT / "configs" / "couette_compare.json")
    assert compare.cache is not None


def test_gaps_list_uncovered_criteria():
    cfg = RunConfig(experiments=(ExperimentSpec(id="a", kind="cutoff", criterion=3),))
    assert acceptance_gaps(cfg) == [1, 2, 4, 5, 6, 7, 8, 9]


def test_config_hash_ignores_output_dir_and_jobs():
    base = RunConfig(experiments=(ExperimentSpec(id="cutoff", kind="cutoff"),))
    moved = RunConfig(experiments=base.experiments, output_dir=Path("elsewhere"), jobs=8)
    reseeded = RunConfig(experiments=base.experiments, seed=1)
    assert hash_config(base.to_dict()) == hash_config(moved.to_dict())
    assert hash_config(base.to_dict()) != hash_config(reseeded.to_dict())


def test_check_run_config_accepts_defaults():
    check_run_config(RunConfig())
    with pytest.raises(ConfigError, match="lambda must be positive"):
        check_run_config(RunConfig(weight=WeightParams(lam=0.0, lam_prime=0.0)))


def test_cutoff_experiment_tabulates_every_cutoff():
    result = execute(ExperimentSpec(id="cutoff", kind="cutoff", params={"points": 65}), RunConfig())
    assert result.status == "pass"
    (table,) = result.tables
    assert table.columns == ("x", "psi_a1", "psi_a2", "phi")
    assert table.rows.shape == (65, 4)


def test_couette_profile_check_passes(capsys):
    result = execute(ExperimentSpec(id="check", kind="check-profile"), RunConfig())
    assert result.passed
    assert result.summary["assumptions"]["first_failure"] is None
    assert capsys.readouterr().out.count("[profile] name=couette") == 1


def test_scan_writes_min_sv_and_s_ratio_tables(tmp_path: Path):
    params = {"kmax": 2, "y0_points": 3, "n": 128, "eps": [3, 4]}
    cfg = RunConfig(experiments=(ExperimentSpec(id="scan", kind="scan", params=params),))
    artifact = run(cfg, tmp_path)
    (result,) = artifact.results
    assert result.status == "pass"
    lines = (tmp_path / "scan" / "min_sv.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "k,y0,eps,min_sv"
    assert len(lines) == 1 + 2 * 3 * 2
    assert (tmp_path / "scan" / "min_sv.gp").exists()
    assert (tmp_path / "scan" / "s_ratio.csv").exists()
    summary = json.loads((tmp_path / "scan" / "result.json").read_text(encoding="utf-8"))["summary"]
    assert summary["s_ratio_constant"] == 0.0


def test_runner_failures_become_error_results():
    bad_modes = execute(ExperimentSpec(id="e", kind="evolve", params={"ks": [0]}), RunConfig())
    assert bad_modes.status == "error"
    assert "nonzero modes" in bad_modes.message
    mismatch = execute(ExperimentSpec(id="c", kind="compare", params={"n": 512, "evolve_n": 1024}), RunConfig())
    assert mismatch.status == "error"
    assert "grid mismatch" in mismatch.message


def test_compare_solvers_rejects_inconsistent_grids():
    spec = ExperimentSpec(id="c", kind="compare", params={"n": 256, "evolve_n": 512})
    with pytest.raises(ConfigError, match="evolve_n=512"):
        compare_solvers(spec, RunConfig())


def test_exit_code_counts_only_tagged_failures(tmp_path: Path):
    manifest = RunManifest(run_id="r", config_hash="h", config={}, seed=0, started_utc="")
    untagged = ExperimentResult(id="a", kind="cutoff", criterion=None, status="fail")
    tagged = ExperimentResult(id="b", kind="scan", criterion=5, status="error")
    assert RunArtifact(out_dir=tmp_path, manifest=manifest, results=(untagged,)).exit_code == 0
    assert RunArtifact(out_dir=tmp_path, manifest=manifest, results=(untagged, tagged)).exit_code == 1


def test_empty_run_writes_manifest_and_header_only_summary(tmp_path: Path):
    artifact = run(RunConfig(), tmp_path)
    assert artifact.exit_code == 0
    assert (tmp_path / "summary.csv").read_text(encoding="utf-8") == "experiment,quantity,fitted,reference\n"
    manifest = load_manifest(tmp_path / "manifest.json")
    assert manifest is not None
    assert manifest.experiments == ()
    assert set(manifest.outputs) == {"summary.csv"}
    assert not (tmp_path / "ledger.jsonl").exists()


def _quick_config() -> RunConfig:
    return RunConfig(
        experiments=(
            ExperimentSpec(id="cutoff", kind="cutoff", params={"points": 129}),
            ExperimentSpec(id="couette-check", kind="check-profile"),
        ),
        jobs=2,
    )


def test_run_writes_results_ledger_and_tables(tmp_path: Path):
    artifact = run(_quick_config(), tmp_path)
    assert [r.id for r in artifact.results] == ["cutoff", "couette-check"]
    for name in ("cutoff/result.json", "couette-check/result.json", "cutoff/cutoff.csv", "cutoff/cutoff.gp"):
        assert (tmp_path / name).exists(), name
    ledger = read_ledger(tmp_path / "ledger.jsonl")
    assert [row["id"] for row in ledger] == ["cutoff", "couette-check"]
    assert all(row["run_id"] == artifact.manifest.run_id for row in ledger)
    assert "summary" not in ledger[0]
    manifest = load_manifest(tmp_path / "manifest.json")
    assert manifest.experiments == ("cutoff", "couette-check")
    assert "cutoff/cutoff.csv" in manifest.outputs
    assert manifest.run_id.endswith(manifest.config_hash[:12])


def test_run_outputs_are_reproducible(tmp_path: Path):
    first = run(_quick_config(), tmp_path / "a")
    second = run(_quick_config(), tmp_path / "b")
    assert first.manifest.config_hash == second.manifest.config_hash
    for name in ("cutoff/cutoff.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_report_rebuilds_summary_from_latest_ledger_rows(tmp_path: Path):
    ledger = tmp_path / "ledger.jsonl"
    append_ledger(ledger, {"id": "orr", "fitted": [{"label": "orr:k1", "quantity": "psi", "value": -1.5}]})
    append_ledger(ledger, {"id": "orr", "fitted": [{"label": "orr:k1", "quantity": "psi", "value": -2.0}]})
    lines = report_from_ledger(tmp_path).read_text(encoding="utf-8").splitlines()
    assert lines[1] == "orr:k1,psi,-2.0000000000000000e+00,-2.0000000000000000e+00"
    assert sum(line.startswith("orr:") for line in lines) == 1


@pytest.mark.slow
def test_couette_spectral_route_matches_time_stepper(tmp_path: Path):
    spec = ExperimentSpec(
        id="compare", kind="compare", params={"ks": [1], "times": [0, 10, 20], "n": 1024, "eps": [4, 7]}
    )
    result = execute(spec, RunConfig(cache=str(tmp_path / "slices.sqlite")))
    assert result.status == "pass", result.message
    assert result.summary["max_error"] <= 1e-2
