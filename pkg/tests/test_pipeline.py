import json

import pytest

from newtonsing import pipeline
from newtonsing.pipeline import (
    EXIT_BUDGET,
    EXIT_CHECK,
    EXIT_HYPOTHESIS,
    EXIT_PASS,
    ConfigError,
    RunConfig,
    emit_report,
    run_pipeline,
    verify_manifest,
)

FAST = {"sublevel": 100_000, "rectangles": 4000, "amgm": 20_000}


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("x1x2")
    m = run_pipeline(RunConfig(poly="x1*x2", output_dir=str(out)))
    return m, out


def test_example_passes_every_stage(full_run):
    m, out = full_run
    assert m.exit_code == EXIT_PASS and m.passed
    assert [s.name for s in m.stages] == ["analyze", "hypotheses", "verify-kernel", "verify-estimates"]
    assert all(s.status == "pass" for s in m.stages)
    est = json.loads((out / "estimates.json").read_text())
    names = {c["name"] for c in est["checks"]}
    assert names == {"sublevel_fit", "rectangle_estimators", "amgm_sup", "fourier_decay", "multiplier_sup",
                     "operator_l2"}


def test_manifest_checksums_verify(full_run):
    m, out = full_run
    listed = {f["path"] for s in m.stages for f in s.files}
    assert listed == {"newton.json", "hypotheses.json", "kernel.json", "estimates.json",
                      "sublevel.csv", "fourier.csv", "multiplier.csv"}
    assert verify_manifest(out / "manifest.json")
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["config_hash"] == RunConfig(poly="x1*x2").hash()
    assert doc["schema_version"] == "1" and doc["exit_code"] == 0


def test_tampered_file_fails_checksum(tmp_path):
    cfg = RunConfig(poly="x1*x2", output_dir=str(tmp_path))
    run_pipeline(cfg, ("analyze",))
    assert verify_manifest(tmp_path / "manifest.json")
    (tmp_path / "newton.json").write_text("{}")
    assert not verify_manifest(tmp_path / "manifest.json")


def test_rationals_are_strings(tmp_path):
    run_pipeline(RunConfig(poly="x1^2*x2+x2^3", output_dir=str(tmp_path)), ("analyze",))
    doc = json.loads((tmp_path / "newton.json").read_text())
    assert doc["delta0"] == "2/3"
    assert doc["newton_distance"] == "3/2"


def test_sublevel_csv_columns(full_run):
    _, out = full_run
    lines = (out / "sublevel.csv").read_text().splitlines()
    assert lines[0] == "eps,measure,stderr"
    assert len(lines) == 14
    eps, meas, err = map(float, lines[1].split(","))
    assert eps == pytest.approx(1e-2) and meas > 0 and err > 0


def test_hypothesis_violation_skips_downstream(tmp_path):
    m = run_pipeline(RunConfig(poly="x1^2-2*x1*x2+x2^2", output_dir=str(tmp_path)))
    assert m.exit_code == EXIT_HYPOTHESIS
    status = {s.name: s.status for s in m.stages}
    assert status == {"analyze": "pass", "hypotheses": "hypothesis", "verify-kernel": "skipped",
                      "verify-estimates": "skipped"}
    assert all("face zero order" in s.reason for s in m.stages if s.status == "skipped")
    assert not (tmp_path / "kernel.json").exists()


def test_rerun_is_byte_identical(tmp_path):
    docs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        cfg = RunConfig(poly="x1^2+x2^2", samples=FAST, L_list=[6, 8], output_dir=str(out),
                        checks=["sublevel", "rectangles", "amgm", "multiplier"])
        run_pipeline(cfg)
        docs.append({p.name: p.read_bytes() for p in out.iterdir() if p.name != "manifest.json"})
    assert docs[0] == docs[1]
    assert set(docs[0]) >= {"newton.json", "hypotheses.json", "kernel.json", "estimates.json", "sublevel.csv"}


def test_stage_crash_is_recorded_and_later_stages_run(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("synthetic failure")

    monkeypatch.setattr(pipeline, "stage_kernel", boom)
    cfg = RunConfig(poly="x1*x2", samples=FAST, output_dir=str(tmp_path), checks=["amgm"])
    m = run_pipeline(cfg)
    status = {s.name: s for s in m.stages}
    assert status["verify-kernel"].status == "error"
    assert "synthetic failure" in status["verify-kernel"].reason
    assert status["verify-estimates"].status == "pass"
    assert m.exit_code == EXIT_CHECK
    assert (tmp_path / "manifest.json").exists()


def test_budget_exhaustion_exit_code(tmp_path, monkeypatch):
    real = pipeline.stage_hypotheses

    def exhausted(b, cfg):
        doc = real(b, cfg)
        doc["budget_exhausted"] = True
        return doc

    monkeypatch.setattr(pipeline, "stage_hypotheses", exhausted)
    m = run_pipeline(RunConfig(poly="x1*x2", output_dir=str(tmp_path)), ("analyze", "hypotheses"))
    assert m.exit_code == EXIT_BUDGET


def test_failed_check_gives_exit_4(tmp_path):
    cfg = RunConfig(poly="x1*x2", samples=FAST, output_dir=str(tmp_path), checks=["sublevel"],
                    tolerances={"delta0": 1e-6})
    m = run_pipeline(cfg)
    assert m.exit_code == EXIT_CHECK
    est = [s for s in m.stages if s.name == "verify-estimates"][0]
    assert est.status == "fail" and "sublevel_fit" in est.reason


def test_estimates_stage_alone_writes_analysis(tmp_path):
    cfg = RunConfig(poly="x1*x2", samples=FAST, output_dir=str(tmp_path), checks=["amgm"])
    m = run_pipeline(cfg, ("verify-estimates",))
    assert m.exit_code == EXIT_PASS
    assert (tmp_path / "newton.json").exists()


def test_three_variable_run_skips_grid_checks(tmp_path):
    cfg = RunConfig(poly="x1*x2*x3", samples=FAST, output_dir=str(tmp_path),
                    checks=["multiplier", "operator"])
    m = run_pipeline(cfg, ("verify-estimates",))
    est = json.loads((tmp_path / "estimates.json").read_text())
    assert all(c["skipped"] for c in est["checks"])
    assert m.exit_code == EXIT_PASS


@pytest.mark.parametrize("kwargs", [
    {"poly": "x1^"},
    {"poly": "x1*x2", "R": 0},
    {"poly": "x1*x2", "samples": {"sublevel": 0}},
    {"poly": "x1*x2", "samples": {"hypotheses": 10}},
    {"poly": "x1*x2", "checks": ["nope"]},
    {"poly": "x1*x2", "tolerances": {"nope": 1}},
    {"poly": "x1*x2", "L_list": []},
])
def test_invalid_configs_rejected(kwargs):
    with pytest.raises(ConfigError):
        RunConfig(**kwargs).validate()


def test_config_round_trip_and_hash():
    cfg = RunConfig(poly="x1*x2^3", seed=4, output_dir="a")
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    assert again.nvars == 2 and again.pairing_L == 20
    assert RunConfig(poly="x1*x2^3", seed=4, output_dir="b").hash() == cfg.hash()
    assert RunConfig(poly="x1*x2^3", seed=5).hash() != cfg.hash()
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"poly": "x1", "bogus": 1})


def test_emit_report_needs_directory(tmp_path, full_run):
    m, _ = full_run
    with pytest.raises(OSError):
        emit_report(m, tmp_path / "missing")
