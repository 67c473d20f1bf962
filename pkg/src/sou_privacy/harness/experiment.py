"""Experiment configuration, run-directory stages and the end-to-end runner.

A run directory holds every artifact of one experiment::

    run.json              resolved configuration (paths made absolute)
    train.soum test.soum  standardized chunk features
    standardizer.soum     per-mel-bin statistics fitted on the train split
    gender.soum           attacker gender classifier
    diagnosis.soum        protector diagnosis classifier
    test_perturbed.soum   protected test features
    attack.json           attack configuration and loss summary
    ledger.json           every resource use, in order
    report.json report.txt

``run_experiment`` chains the stage functions below; the CLI exposes them one
by one.  Both paths go through the files, so a staged run and a single ``run``
produce the same bytes.
"""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .. import __version__
from ..attack import AttackConfig
from ..audio import read_manifest
from ..featurestore import FeatureSet, load_features, load_standardizer, save_features, save_standardizer
from ..features import MelConfig, StftConfig
from ..metrics import MetricRow
from ..nn import CNNClassifier, TrainConfig, load_model, save_model
from ..scenario import RunLedger, ScenarioOfUse, check_ledger, load_scenario, validate_scenario
from .pipeline import ROLES, LedgerGuard, evaluate_role, featurize_rows, protect_features, standardize_splits, train_role

__all__ = [
    "ConfigError",
    "ScenarioInvalid",
    "FeatureConfig",
    "ExperimentConfig",
    "RunReport",
    "default_scenario_path",
    "prepare_run",
    "train_run",
    "attack_run",
    "evaluate_run",
    "run_experiment",
]

log = logging.getLogger(__name__)

RUN_FILE = "run.json"
LEDGER_FILE = "ledger.json"
ATTACK_FILE = "attack.json"


class ConfigError(ValueError):
    """Malformed or unreadable experiment configuration / run directory."""


class ScenarioInvalid(RuntimeError):
    def __init__(self, report):
        self.report = report
        super().__init__("scenario is incomplete: " + "; ".join(f.message for f in report.errors))


def default_scenario_path() -> Path:
    return Path(str(resources.files("sou_privacy") / "data" / "scenarios" / "table3_gender_protection.json"))


@dataclass(frozen=True)
class FeatureConfig:
    window_len: int = 661
    hop: int = 330
    fft_size: int = 1024
    n_mels: int = 64
    f_min: float = 0.0
    f_max: float | None = None
    chunk_seconds: float = 0.4
    overlap: float = 0.5

    @property
    def stft(self) -> StftConfig:
        return StftConfig(self.window_len, self.hop, self.fft_size)

    @property
    def mel(self) -> MelConfig:
        return MelConfig(self.n_mels, self.f_min, self.f_max)


def _train_dict(cfg: TrainConfig) -> dict:
    d = dataclasses.asdict(cfg)
    del d["seed"]  # derived from the experiment seed
    return d


def _build(cls, raw, where: str, drop=()):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)} - set(drop)
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run needs.  ``seed`` drives every random generator.

    The gender classifier trains with ``seed``, the diagnosis classifier with
    ``seed + 1``, and random PGD starts (if enabled) use ``seed``.
    """

    manifest_path: str
    output_dir: str = "run"
    scenario_path: str | None = None
    seed: int = 0
    features: FeatureConfig = field(default_factory=FeatureConfig)
    gender_training: TrainConfig = field(default_factory=lambda: TrainConfig(batch_size=32, epochs=30))
    diagnosis_training: TrainConfig = field(default_factory=lambda: TrainConfig(batch_size=64, epochs=50))
    attack: AttackConfig = field(default_factory=AttackConfig)

    @property
    def scenario_file(self) -> Path:
        return Path(self.scenario_path) if self.scenario_path else default_scenario_path()

    def train_config(self, role: str) -> TrainConfig:
        base = self.gender_training if role == "gender" else self.diagnosis_training
        return dataclasses.replace(base, seed=self.seed + (0 if role == "gender" else 1))

    def attack_config(self) -> AttackConfig:
        return dataclasses.replace(self.attack, seed=self.seed)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("experiment config must be a JSON object")
        allowed = {"manifest_path", "output_dir", "scenario_path", "seed", "features", "gender_training", "diagnosis_training", "attack"}
        unknown = sorted(set(raw) - allowed)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        if "manifest_path" not in raw:
            raise ConfigError("config needs manifest_path")
        base_dir = base_dir or Path.cwd()

        def resolve(p):
            if p is None:
                return None
            if not isinstance(p, str):
                raise ConfigError(f"paths must be strings, got {p!r}")
            return str((base_dir / p).resolve())

        seed = raw.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
        return cls(
            manifest_path=resolve(raw["manifest_path"]),
            output_dir=resolve(raw.get("output_dir", "run")),
            scenario_path=resolve(raw.get("scenario_path")),
            seed=seed,
            features=_build(FeatureConfig, raw.get("features", {}), "features"),
            gender_training=_build(TrainConfig, {"batch_size": 32, "epochs": 30, **raw.get("gender_training", {})}, "gender_training", ("seed",)),
            diagnosis_training=_build(TrainConfig, {"batch_size": 64, "epochs": 50, **raw.get("diagnosis_training", {})}, "diagnosis_training", ("seed",)),
            attack=_build(AttackConfig, raw.get("attack", {}), "attack", ("seed",)),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(raw, path.parent)

    def to_dict(self, include_output: bool = True) -> dict:
        d = {
            "manifest_path": self.manifest_path,
            "scenario_path": str(self.scenario_file),
            "seed": self.seed,
            "features": dataclasses.asdict(self.features),
            "gender_training": _train_dict(self.gender_training),
            "diagnosis_training": _train_dict(self.diagnosis_training),
            "attack": {k: v for k, v in self.attack.to_dict().items() if k != "seed"},
        }
        if include_output:
            d["output_dir"] = self.output_dir
        return d


# ---------------------------------------------------------------- report


def _rows_to_dict(rows: dict) -> dict:
    return {cond: {g: r.to_dict() for g, r in gran.items()} for cond, gran in rows.items()}


def _rows_from_dict(d: dict) -> dict:
    return {cond: {g: MetricRow.from_dict(r) for g, r in gran.items()} for cond, gran in d.items()}


@dataclass(frozen=True)
class RunReport:
    """Metric tables of one run.

    ``gender`` and ``diagnosis`` map ``"original"``/``"perturbed"`` to
    ``{"chunk": MetricRow, "recording": MetricRow}``.  ``utility_drop`` is the
    chunk-level diagnosis accuracy lost to the protection, in points.
    """

    scenario_id: str
    ledger: dict
    gender: dict
    diagnosis: dict
    utility_drop: float
    utility_drop_recording: float
    attack_summary: dict
    config: dict
    seed: int
    version: str = __version__

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "ledger": self.ledger,
            "gender": _rows_to_dict(self.gender),
            "diagnosis": _rows_to_dict(self.diagnosis),
            "utility_drop": self.utility_drop,
            "utility_drop_recording": self.utility_drop_recording,
            "attack_summary": self.attack_summary,
            "config": self.config,
            "seed": self.seed,
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(
            d["scenario_id"], d["ledger"], _rows_from_dict(d["gender"]), _rows_from_dict(d["diagnosis"]),
            d["utility_drop"], d["utility_drop_recording"], d["attack_summary"], d["config"], d["seed"], d["version"],
        )


# ---------------------------------------------------------------- stages


def _read_json(path: Path, what: str) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"{what} not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from exc


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


class _Run:
    """Run-directory state shared by the stage functions."""

    def __init__(self, run_dir):
        self.dir = Path(run_dir)
        raw = _read_json(self.dir / RUN_FILE, "run configuration")
        self.cfg = ExperimentConfig.from_dict(raw, self.dir)
        self.scenario = _load_valid_scenario(self.cfg.scenario_file)
        ledger_path = self.dir / LEDGER_FILE
        ledger = RunLedger.from_json(ledger_path.read_text()) if ledger_path.exists() else RunLedger()
        self.guard = LedgerGuard(self.scenario, ledger)

    def use(self, stage: str) -> None:
        try:
            self.guard.use(stage)
        finally:
            (self.dir / LEDGER_FILE).write_text(self.guard.ledger.to_json())

    def labels(self) -> dict:
        return {r.recording_id: r.labels for r in read_manifest(self.cfg.manifest_path)}

    def features(self, name: str, split: str) -> FeatureSet:
        path = self.dir / name
        if not path.exists():
            raise ConfigError(f"{path} missing; run the earlier stages first")
        return load_features(path, split).attach_labels(self.labels())

    def classifier(self, role: str, path=None) -> CNNClassifier:
        path = Path(path) if path else self.dir / f"{role}.soum"
        if not path.exists():
            raise ConfigError(f"model file not found: {path}")
        return CNNClassifier.from_model(load_model(path), sorted(ROLES[role].labels), ROLES[role].architecture)


def _load_valid_scenario(path: Path) -> ScenarioOfUse:
    if not Path(path).is_file():
        raise ConfigError(f"scenario file not found: {path}")
    scenario = load_scenario(path)
    report = validate_scenario(scenario)
    if not report.complete:
        raise ScenarioInvalid(report)
    return scenario


def prepare_run(cfg: ExperimentConfig, out_dir=None) -> Path:
    """Validate the scenario and the run plan, then featurize and standardize.

    Nothing is read from the manifest's audio until the ledger check passes.
    """
    out = Path(out_dir or cfg.output_dir)
    if not Path(cfg.manifest_path).is_file():
        raise ConfigError(f"manifest not found: {cfg.manifest_path}")
    scenario = _load_valid_scenario(cfg.scenario_file)
    LedgerGuard(scenario).check_plan()
    out.mkdir(parents=True, exist_ok=True)
    cfg = dataclasses.replace(cfg, output_dir=str(out.resolve()))
    _write_json(out / RUN_FILE, cfg.to_dict())
    for stale in (LEDGER_FILE, ATTACK_FILE, "report.json", "report.txt"):
        (out / stale).unlink(missing_ok=True)

    run = _Run(out)
    run.use("prepare")
    rows = read_manifest(cfg.manifest_path)
    splits = featurize_rows(rows, cfg.features.stft, cfg.features.mel, cfg.features.chunk_seconds, cfg.features.overlap)
    for need in ("train", "test"):
        if need not in splits:
            raise ConfigError(f"manifest has no {need} rows")
    std, train, (test,) = standardize_splits(splits["train"], [splits["test"]])
    save_features(out / "train.soum", train)
    save_features(out / "test.soum", test)
    save_standardizer(out / "standardizer.soum", std)
    log.info("prepared %d train / %d test chunks in %s", len(train), len(test), out)
    return out


def train_run(run_dir, role: str) -> Path:
    if role not in ROLES:
        raise ConfigError(f"role must be one of {sorted(ROLES)}, got {role!r}")
    run = _Run(run_dir)
    if load_standardizer(run.dir / "standardizer.soum").fitted_on != "train":
        raise ConfigError("standardizer was not fitted on the train split")
    run.use(f"train_{role}")
    clf = train_role(role, run.features("train.soum", "train"), run.cfg.train_config(role), run.cfg.train_config(role).seed)
    path = run.dir / f"{role}.soum"
    save_model(clf.model_, path)
    return path


def attack_run(run_dir, attack: AttackConfig | None = None, model_path=None) -> Path:
    """PGD-protect the test features with the gender classifier.

    ``attack`` overrides the run's attack configuration; the override is
    written back to ``run.json`` so later stages echo it.
    """
    run = _Run(run_dir)
    if attack is not None:
        raw = _read_json(run.dir / RUN_FILE, "run configuration")
        raw["attack"] = {k: v for k, v in attack.to_dict().items() if k != "seed"}
        _write_json(run.dir / RUN_FILE, raw)
        run = _Run(run_dir)
    run.use("protect")
    clf = run.classifier("gender", model_path)
    perturbed, summary = protect_features(clf, run.features("test.soum", "test"), run.cfg.attack_config())
    save_features(run.dir / "test_perturbed.soum", perturbed)
    _write_json(run.dir / ATTACK_FILE, {"config": run.cfg.attack_config().to_dict(), "summary": summary})
    return run.dir / "test_perturbed.soum"


def evaluate_run(run_dir) -> RunReport:
    from .report import emit_report

    run = _Run(run_dir)
    run.use("evaluate")
    test = run.features("test.soum", "test")
    perturbed = run.features("test_perturbed.soum", "test")
    if perturbed.recording_ids != test.recording_ids or not np.array_equal(perturbed.chunk_index, test.chunk_index):
        raise ConfigError("perturbed features do not line up with the test features")
    attack = _read_json(run.dir / ATTACK_FILE, "attack record")
    tables = {}
    for role in ("gender", "diagnosis"):
        clf = run.classifier(role)
        tables[role] = {"original": evaluate_role(clf, test, role), "perturbed": evaluate_role(clf, perturbed, role)}
    verdict = check_ledger(run.scenario, run.guard.ledger)
    dg = tables["diagnosis"]
    report = RunReport(
        scenario_id=run.scenario.id,
        ledger={"complete": verdict.complete, "n_entries": len(run.guard.ledger.entries), "findings": verdict.to_dict()["findings"]},
        gender=tables["gender"],
        diagnosis=dg,
        utility_drop=dg["original"]["chunk"].acc - dg["perturbed"]["chunk"].acc,
        utility_drop_recording=dg["original"]["recording"].acc - dg["perturbed"]["recording"].acc,
        attack_summary=attack["summary"],
        config=run.cfg.to_dict(include_output=False),
        seed=run.cfg.seed,
    )
    (run.dir / "report.json").write_text(emit_report(report, "json"), encoding="utf-8")
    (run.dir / "report.txt").write_text(emit_report(report, "text"), encoding="utf-8")
    return report


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    out = prepare_run(cfg)
    train_run(out, "gender")
    train_run(out, "diagnosis")
    attack_run(out)
    return evaluate_run(out)
