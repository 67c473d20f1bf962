"""Pipeline stages shared by ``run`` and the per-stage CLI commands."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..attack import AttackConfig, PGDProtector
from ..audio import ManifestRow, load_wav, normalize_amplitude, segment
from ..featurestore import FeatureSet
from ..features import FeatureStandardizer, LogMelFeaturizer, MelConfig, StftConfig, Standardizer
from ..metrics import MetricRow, aggregate_by_recording, metric_row
from ..nn import CNNClassifier, TrainConfig
from ..scenario import RunLedger, ScenarioOfUse, check_ledger

__all__ = [
    "ROLES",
    "RoleSpec",
    "LedgerViolation",
    "LeakageError",
    "LedgerGuard",
    "PIPELINE_PLAN",
    "featurize_rows",
    "standardize_splits",
    "train_role",
    "protect_features",
    "evaluate_role",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RoleSpec:
    name: str
    architecture: str
    label_attr: str
    labels: tuple[str, str]  # column order of the report table
    positive: str


ROLES = {
    "gender": RoleSpec("gender", "gender", "gender", ("M", "F"), "M"),
    "diagnosis": RoleSpec("diagnosis", "diagnosis", "diagnosis", ("HC", "PD"), "PD"),
}


class LedgerViolation(RuntimeError):
    def __init__(self, report):
        self.report = report
        lines = "; ".join(f.message for f in report.errors)
        super().__init__(f"run plan violates the scenario: {lines}")


class LeakageError(RuntimeError):
    pass


# Resource uses of the default pipeline: (party, resource_id, phase).
PIPELINE_PLAN = {
    "prepare": [("attacker", "labeled_training_data", "train")],
    "train_gender": [
        ("attacker", "labeled_training_data", "train"),
        ("attacker", "attacker_gender_classifier", "train"),
    ],
    "train_diagnosis": [("protector", "diagnosis_classifier", "train")],
    "protect": [
        ("protector", "attacker_gender_classifier", "protect"),
        ("protector", "target_speech", "protect"),
    ],
    "evaluate": [
        ("attacker", "attacker_gender_classifier", "attack"),
        ("attacker", "target_speech", "attack"),
        ("protector", "diagnosis_classifier", "evaluate"),
        ("protector", "target_speech", "evaluate"),
    ],
}


class LedgerGuard:
    """Checks resource uses against a scenario before the pipeline touches them."""

    def __init__(self, scenario: ScenarioOfUse, ledger: RunLedger | None = None):
        self.scenario = scenario
        self.ledger = ledger if ledger is not None else RunLedger()

    def check_plan(self, stages=None) -> None:
        stages = list(PIPELINE_PLAN) if stages is None else stages
        plan = RunLedger()
        for stage in stages:
            for entry in PIPELINE_PLAN[stage]:
                plan.record(*entry)
        report = check_ledger(self.scenario, plan)
        if not report.complete:
            raise LedgerViolation(report)

    def use(self, stage: str) -> None:
        for entry in PIPELINE_PLAN[stage]:
            self.ledger.record(*entry)
        report = check_ledger(self.scenario, self.ledger)
        if not report.complete:
            raise LedgerViolation(report)


def featurize_rows(
    rows: list[ManifestRow],
    stft: StftConfig = StftConfig(),
    mel: MelConfig = MelConfig(),
    chunk_seconds: float = 0.4,
    overlap: float = 0.5,
) -> dict[str, FeatureSet]:
    """Load, normalize, chunk and featurize every manifest row; one FeatureSet per split."""
    by_split: dict[str, dict[str, list]] = {}
    featurizers: dict[int, LogMelFeaturizer] = {}
    for row in rows:
        if not row.path.is_file():
            raise FileNotFoundError(f"audio file not found: {row.path}")
        clip = normalize_amplitude(load_wav(row.path, row.recording_id, row.labels))
        if clip.silent:
            log.warning("%s is silent", row.path)
        chunks = segment(clip, chunk_seconds, overlap)
        fz = featurizers.get(clip.sample_rate)
        if fz is None:
            fz = LogMelFeaturizer(clip.sample_rate, stft.window_len, stft.hop, stft.fft_size, mel.n_mels, mel.f_min, mel.f_max)
            fz.fit(chunks[0].samples[None])
            featurizers[clip.sample_rate] = fz
        feats = fz.transform(np.stack([c.samples for c in chunks]))
        acc = by_split.setdefault(row.split, {"X": [], "rid": [], "k": [], "gender": [], "diagnosis": []})
        for c, f in zip(chunks, feats):
            acc["X"].append(f)
            acc["rid"].append(row.recording_id)
            acc["k"].append(c.chunk_index)
            acc["gender"].append(row.gender)
            acc["diagnosis"].append(row.diagnosis)
    out = {}
    for split, acc in by_split.items():
        shapes = {x.shape for x in acc["X"]}
        if len(shapes) != 1:
            raise ValueError(f"{split}: feature shapes differ across recordings {sorted(shapes)}; sample rates must match")
        out[split] = FeatureSet(
            np.stack(acc["X"]), acc["rid"], np.array(acc["k"], dtype=np.int64), split,
            np.array(acc["gender"]), np.array(acc["diagnosis"]),
        )
    return out


def _f32_exact(X: np.ndarray) -> np.ndarray:
    # stores hold float32; rounding here keeps in-memory and on-disk runs identical
    return X.astype(np.float32).astype(np.float64)


def standardize_splits(train: FeatureSet, others: list[FeatureSet]) -> tuple[Standardizer, FeatureSet, list[FeatureSet]]:
    """Fit per-mel-bin statistics on ``train`` only and apply them to every split."""
    if train.split != "train":
        raise LeakageError(f"standardizer must be fitted on the train split, got {train.split!r}")
    est = FeatureStandardizer().fit(train.X)
    s = est.to_standardizer("train")

    def apply(fs: FeatureSet) -> FeatureSet:
        out = fs.with_values(_f32_exact(est.transform(fs.X)))
        out.standardized, out.fitted_on = True, s.fitted_on
        return out

    return s, apply(train), [apply(fs) for fs in others]


def _require(fs: FeatureSet, split: str) -> None:
    if fs.split != split:
        raise LeakageError(f"expected {split} features, got {fs.split}")
    if not fs.standardized or fs.fitted_on != "train":
        raise LeakageError(f"{split} features must be standardized with train-split statistics")


def train_role(role: str, train: FeatureSet, cfg: TrainConfig, seed: int) -> CNNClassifier:
    _require(train, "train")
    spec = ROLES[role]
    clf = CNNClassifier(
        architecture=spec.architecture,
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        learning_rate=cfg.lr,
        shuffle=cfg.shuffle,
        random_state=seed,
    )
    log.info("training %s classifier on %d chunks", role, len(train))
    return clf.fit(train.X, getattr(train, spec.label_attr))


def protect_features(gender_clf: CNNClassifier, test: FeatureSet, cfg: AttackConfig):
    """PGD/FGSM-perturb the test features; returns ``(perturbed, summary)``."""
    _require(test, "test")
    protector = PGDProtector(gender_clf, cfg.epsilon, cfg.alpha, cfg.iterations, cfg.method, cfg.random_start, cfg.seed)
    X_adv = protector.fit().transform(test.X, test.gender)
    final_losses = [t[-1] for t in protector.loss_traces_] if len(test) else []
    summary = {
        "n_chunks": len(test),
        "max_linf": float(protector.linf_.max()) if len(test) else 0.0,
        "mean_initial_loss": float(np.mean([t[0] for t in protector.loss_traces_])) if len(test) else 0.0,
        "mean_final_loss": float(np.mean(final_losses)) if len(test) else 0.0,
    }
    return test.with_values(X_adv), summary


def evaluate_role(clf: CNNClassifier, fs: FeatureSet, role: str) -> dict[str, MetricRow]:
    """Chunk-level and recording-level (mean probability) metric rows."""
    _require(fs, "test")
    spec = ROLES[role]
    truth = getattr(fs, spec.label_attr)
    probs = clf.predict_proba(fs.X)
    pos = int(np.flatnonzero(clf.classes_ == spec.positive)[0])
    chunk = metric_row(probs[:, pos], clf.classes_[probs.argmax(axis=1)], truth, spec.positive, spec.labels)
    _, rec_probs, rec_truth = aggregate_by_recording(fs.recording_ids, probs, truth)
    recording = metric_row(
        rec_probs[:, pos], clf.classes_[rec_probs.argmax(axis=1)], rec_truth, spec.positive, spec.labels
    )
    return {"chunk": chunk, "recording": recording}
