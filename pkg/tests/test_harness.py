import dataclasses
import json
from collections import Counter

import numpy as np
import pytest

from sou_privacy.attack import AttackConfig
from sou_privacy.audio import load_wav, read_manifest
from sou_privacy.featurestore import FeatureSet
from sou_privacy.harness.cli import main
from sou_privacy.harness.experiment import ConfigError, ExperimentConfig, default_scenario_path, prepare_run, run_experiment
from sou_privacy.harness.pipeline import (
    PIPELINE_PLAN,
    LeakageError,
    LedgerGuard,
    LedgerViolation,
    evaluate_role,
    standardize_splits,
    train_role,
)
from sou_privacy.harness.report import emit_report, parse_report, table_header
from sou_privacy.harness.synth import SynthConfig, generate_synthetic_corpus
from sou_privacy.nn import TrainConfig
from sou_privacy.scenario import RunLedger, check_ledger, load_scenario

FAST = {"gender_training": {"epochs": 1}, "diagnosis_training": {"epochs": 1}}


def fast_config(manifest, out, **extra) -> ExperimentConfig:
    return ExperimentConfig.from_dict({"manifest_path": str(manifest), "output_dir": str(out), **FAST, **extra})


# ---------------------------------------------------------------- synthetic corpus


def test_default_corpus_counts(tmp_path):
    manifest = generate_synthetic_corpus(SynthConfig(duration_seconds=0.05), tmp_path)
    rows = read_manifest(manifest)
    assert len(rows) == 160 and len(list((tmp_path / "wav").glob("*.wav"))) == 160
    assert Counter(r.split for r in rows) == {"train": 120, "test": 40}


def test_corpus_is_byte_reproducible(tmp_path):
    cfg = SynthConfig(n_train_recordings=6, n_test_recordings=2, duration_seconds=0.1)
    a, b = generate_synthetic_corpus(cfg, tmp_path / "a"), generate_synthetic_corpus(cfg, tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()
    for wav in (tmp_path / "a" / "wav").iterdir():
        assert wav.read_bytes() == (tmp_path / "b" / "wav" / wav.name).read_bytes()


def test_labels_are_balanced_and_independent(tmp_path):
    cfg = SynthConfig(n_train_recordings=30, n_test_recordings=10, duration_seconds=0.02)
    rows = read_manifest(generate_synthetic_corpus(cfg, tmp_path))
    for split, n in (("train", 30), ("test", 10)):
        part = [r for r in rows if r.split == split]
        for attr, values in (("gender", "MF"), ("diagnosis", ("HC", "PD"))):
            counts = Counter(getattr(r, attr) for r in part)
            assert abs(counts[values[0]] - counts[values[1]]) <= 1
        cells = Counter((r.gender, r.diagnosis) for r in part)
        assert max(cells.values()) - min(cells.values()) <= 1 and len(cells) == 4


def _autocorr_pitch(x, sr, fmin=60.0, fmax=500.0):
    r = np.correlate(x, x, mode="full")[len(x) - 1 :]
    lo, hi = int(sr / fmax), int(sr / fmin)
    k = lo + int(np.argmax(r[lo:hi]))
    a, b, c = r[k - 1], r[k], r[k + 1]
    return sr / (k + 0.5 * (a - c) / (a - 2 * b + c))


def test_female_fundamental_is_near_220_hz(tmp_path):
    cfg = SynthConfig(n_train_recordings=8, n_test_recordings=0, duration_seconds=0.3)
    rows = read_manifest(generate_synthetic_corpus(cfg, tmp_path))
    for row in rows:
        clip = load_wav(row.path)
        target = 220.0 if row.gender == "F" else 120.0
        assert abs(_autocorr_pitch(clip.samples, clip.sample_rate) - target) <= 2.0


def test_diagnosis_cue_is_noise_level(tmp_path):
    cfg = SynthConfig(n_train_recordings=8, n_test_recordings=0, duration_seconds=0.2)
    rows = read_manifest(generate_synthetic_corpus(cfg, tmp_path))
    resid = {}
    for row in rows:
        x = load_wav(row.path).samples
        resid.setdefault(row.diagnosis, []).append(np.std(np.diff(x)))  # high-pass proxy for the noise floor
    assert min(resid["PD"]) > max(resid["HC"])


def test_synth_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown"):
        SynthConfig.from_dict({"n_speakers": 3})


# ---------------------------------------------------------------- pipeline guards


def test_default_plan_passes_for_bundled_scenario():
    s = load_scenario(default_scenario_path())
    guard = LedgerGuard(s)
    guard.check_plan()
    for stage in PIPELINE_PLAN:
        guard.use(stage)
    assert check_ledger(s, guard.ledger).complete
    assert {(e.party, e.resource_id) for e in guard.ledger.entries} >= {
        ("attacker", "attacker_gender_classifier"),
        ("protector", "attacker_gender_classifier"),
    }


def _without_protector_grant(tmp_path, resource_id):
    d = json.loads(default_scenario_path().read_text())
    d["protector"]["opportunity_grants"] = [g for g in d["protector"]["opportunity_grants"] if g["resource_id"] != resource_id]
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(d))
    return path


def test_ledger_violation_aborts_before_any_work(tmp_path, tiny_corpus):
    scenario = _without_protector_grant(tmp_path, "attacker_gender_classifier")
    cfg = fast_config(tiny_corpus, tmp_path / "run", scenario_path=str(scenario))
    with pytest.raises(LedgerViolation, match="attacker_gender_classifier"):
        prepare_run(cfg)
    assert not (tmp_path / "run").exists()


def _fs(split, standardized=True, fitted_on="train"):
    X = np.random.default_rng(0).standard_normal((4, 64, 52))
    return FeatureSet(X, ["a", "a", "b", "b"], np.array([0, 1, 0, 1]), split, np.array(["M", "M", "F", "F"]), np.array(["HC", "HC", "PD", "PD"]), standardized, fitted_on)


def test_leakage_guards():
    with pytest.raises(LeakageError):
        standardize_splits(_fs("test", False, None), [])
    std, train, (test,) = standardize_splits(_fs("train", False, None), [_fs("test", False, None)])
    assert std.fitted_on == "train" and test.fitted_on == "train" and test.standardized
    assert test.X.dtype == np.float64 and np.array_equal(test.X, test.X.astype(np.float32))
    with pytest.raises(LeakageError):
        train_role("gender", test, TrainConfig(epochs=0), 0)
    clf = train_role("gender", train, TrainConfig(epochs=0), 0)
    with pytest.raises(LeakageError):
        evaluate_role(clf, train, "gender")
    with pytest.raises(LeakageError):
        evaluate_role(clf, _fs("test", True, "test"), "gender")


# ---------------------------------------------------------------- experiment


def test_config_loading(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"manifest_path": "m.csv", "seed": 3, "attack": {"epsilon": 0.3}}))
    cfg = ExperimentConfig.load(tmp_path / "c.json")
    assert cfg.manifest_path == str(tmp_path / "m.csv")
    assert cfg.gender_training.batch_size == 32 and cfg.gender_training.epochs == 30
    assert cfg.diagnosis_training.batch_size == 64 and cfg.diagnosis_training.epochs == 50
    assert cfg.train_config("diagnosis").seed == 4 and cfg.attack_config().seed == 3
    assert cfg.attack.epsilon == 0.3 and cfg.attack.alpha == 0.0005
    for bad in ({"seed": 1}, {"manifest_path": "m", "bogus": 1}, {"manifest_path": "m", "attack": {"epsilon": -1}}, {"manifest_path": "m", "seed": -2}):
        (tmp_path / "b.json").write_text(json.dumps(bad))
        with pytest.raises(ConfigError):
            ExperimentConfig.load(tmp_path / "b.json")
    with pytest.raises(ConfigError, match="missing.json"):
        ExperimentConfig.load(tmp_path / "missing.json")


def test_missing_audio_aborts_with_path(tmp_path, tiny_corpus):
    text = tiny_corpus.read_text().replace("wav/train_0003.wav", "wav/gone.wav")
    (tmp_path / "m.csv").write_text(text)
    for wav in (tiny_corpus.parent / "wav").iterdir():
        (tmp_path / "wav").mkdir(exist_ok=True)
        (tmp_path / "wav" / wav.name).write_bytes(wav.read_bytes())
    with pytest.raises(FileNotFoundError, match="gone.wav"):
        prepare_run(fast_config(tmp_path / "m.csv", tmp_path / "run"))


@pytest.fixture(scope="module")
def zero_eps_report(tmp_path_factory, tiny_corpus):
    out = tmp_path_factory.mktemp("run0")
    cfg = fast_config(tiny_corpus, out, attack={"epsilon": 0.0, "alpha": 0.01, "iterations": 3})
    return run_experiment(cfg), out


def test_zero_epsilon_leaves_metrics_unchanged(zero_eps_report):
    report, out = zero_eps_report
    for role in ("gender", "diagnosis"):
        rows = getattr(report, role)
        for g in ("chunk", "recording"):
            assert rows["original"][g] == rows["perturbed"][g]
    assert report.utility_drop == 0.0
    assert report.attack_summary["max_linf"] == 0.0


def test_run_writes_all_artifacts(zero_eps_report):
    report, out = zero_eps_report
    for name in ("report.json", "report.txt", "gender.soum", "diagnosis.soum", "test_perturbed.soum", "ledger.json", "train.soum", "test.soum", "standardizer.soum"):
        assert (out / name).is_file(), name
    ledger = RunLedger.from_json((out / "ledger.json").read_text())
    assert report.ledger["complete"] and report.ledger["n_entries"] == len(ledger.entries) == 10
    assert report.scenario_id == "gender-protection-parkinson"
    assert "output_dir" not in report.config


def test_utility_drop_is_self_consistent(zero_eps_report):
    report, _ = zero_eps_report
    d = report.diagnosis
    assert report.utility_drop == d["original"]["chunk"].acc - d["perturbed"]["chunk"].acc
    assert report.utility_drop_recording == d["original"]["recording"].acc - d["perturbed"]["recording"].acc
    assert report.gender["original"]["chunk"].n == 12 and report.gender["original"]["recording"].n == 4


# ---------------------------------------------------------------- report


def test_table_headers():
    assert table_header("gender") == "ACC AUC F1 R(M) P(M) F1(M) R(F) P(F) F1(F)".split()
    assert table_header("diagnosis") == "ACC AUC F1 R(HC) P(HC) F1(HC) R(PD) P(PD) F1(PD)".split()


def test_text_report_layout(zero_eps_report):
    report, out = zero_eps_report
    text = emit_report(report, "text")
    lines = text.splitlines()
    headers = [ln.split() for ln in lines if ln.split()[:1] == ["ACC"]]
    assert headers.count(table_header("gender")) == 2 and headers.count(table_header("diagnosis")) == 2
    orig = [ln for ln in lines if ln.startswith("Original data")]
    assert len(orig) == 4
    for ln in orig:
        cells = ln[len("Original data"):].split()
        assert len(cells) == 9 and all(c == "n/a" or len(c.split(".")[1]) == 2 for c in cells)
    assert text == emit_report(report, "text") == (out / "report.txt").read_text()


def test_json_report_roundtrip_is_byte_identical(zero_eps_report):
    report, out = zero_eps_report
    doc = (out / "report.json").read_text()
    assert emit_report(parse_report(doc), "json") == doc == emit_report(report, "json")
    d = json.loads(doc)
    row = d["gender"]["original"]["chunk"]
    assert set(row) >= {"acc", "auc", "macro_f1", "weighted_f1", "per_class"}
    assert set(row["per_class"]["M"]) == {"precision", "recall", "f1"}
    with pytest.raises(ValueError):
        emit_report(report, "xml")


# ---------------------------------------------------------------- CLI


def test_cli_scenario_validate_exit_codes(tmp_path, capsys):
    assert main(["scenario", "validate", str(default_scenario_path())]) == 0
    bad = json.loads(default_scenario_path().read_text())
    bad["protector"]["utility_objectives"] = []
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    assert main(["scenario", "validate", str(tmp_path / "bad.json")]) == 1
    assert "protector.objective" in capsys.readouterr().out
    (tmp_path / "broken.json").write_text("{\n  \"id\": ")
    assert main(["scenario", "validate", str(tmp_path / "broken.json")]) == 1
    assert main(["scenario", "validate", str(tmp_path / "nope.json")]) == 2


def test_cli_check_ledger(tmp_path):
    ledger = RunLedger()
    ledger.record("protector", "extra_training_data", "train")
    (tmp_path / "l.json").write_text(ledger.to_json())
    assert main(["scenario", "check-ledger", str(default_scenario_path()), str(tmp_path / "l.json")]) == 1


def test_cli_usage_and_io_errors(tmp_path, capsys):
    assert main(["frobnicate"]) == 2
    assert main(["train", "--role", "age", "--run", "x"]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    assert "missing.json" in capsys.readouterr().err
    assert main(["report", "--run", str(tmp_path)]) == 2
    assert main(["--version"]) == 0


def test_cli_synth(tmp_path):
    (tmp_path / "s.json").write_text(json.dumps({"n_train_recordings": 4, "n_test_recordings": 4, "duration_seconds": 0.05, "output_dir": "corpus"}))
    assert main(["synth", "--config", str(tmp_path / "s.json")]) == 0
    assert len(read_manifest(tmp_path / "corpus" / "manifest.csv")) == 8
    (tmp_path / "t.json").write_text(json.dumps({"speakers": 3}))
    assert main(["synth", "--config", str(tmp_path / "t.json"), "--out", str(tmp_path / "x")]) == 2


def test_cli_staged_run_echoes_attack_flags(tmp_path, tiny_corpus, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"manifest_path": str(tiny_corpus), **FAST}))
    run = str(tmp_path / "run")
    assert main(["prepare", "--config", str(tmp_path / "c.json"), "--out", run]) == 0
    assert main(["train", "--role", "gender", "--run", run]) == 0
    assert main(["train", "--role", "diagnosis", "--run", run]) == 0
    assert main(["attack", "--model", f"{run}/gender.soum", "--eps", "0.1", "--alpha", "0.0005", "--iters", "20", "--run", run]) == 0
    assert main(["evaluate", "--run", run]) == 0
    capsys.readouterr()
    assert main(["report", "--run", run, "--format", "json"]) == 0
    out = capsys.readouterr().out
    assert out == (tmp_path / "run" / "report.json").read_text()
    assert json.loads(out)["config"]["attack"] == {"epsilon": 0.1, "alpha": 0.0005, "iterations": 20, "method": "pgd", "random_start": False}


def test_cli_stage_out_of_order_is_io_error(tmp_path, tiny_corpus):
    (tmp_path / "c.json").write_text(json.dumps({"manifest_path": str(tiny_corpus), **FAST}))
    run = str(tmp_path / "run")
    assert main(["prepare", "--config", str(tmp_path / "c.json"), "--out", run]) == 0
    assert main(["attack", "--run", run]) == 2
    assert main(["evaluate", "--run", str(tmp_path / "elsewhere")]) == 2


def test_cli_ledger_violation_exits_1(tmp_path, tiny_corpus):
    scenario = _without_protector_grant(tmp_path, "target_speech")
    assert main(["prepare", "--manifest", str(tiny_corpus), "--scenario", str(scenario), "--out", str(tmp_path / "r")]) == 1
