"""Synthetic stand-in corpus with a pitch cue for gender and a noise cue for diagnosis.

Every recording is a harmonic tone at 120 Hz (M) or 220 Hz (F), detuned per
speaker by at most ``detune_hz``, plus white noise whose level encodes the
diagnosis (low for HC, high for PD).  Labels follow a balanced 2x2 design, so
gender and diagnosis are independent and each is balanced within one
recording per split.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..audio import EXPECTED_RATE, write_manifest, write_wav

__all__ = ["SynthConfig", "balanced_labels", "synth_recording", "generate_synthetic_corpus"]


@dataclass(frozen=True)
class SynthConfig:
    n_train_recordings: int = 120
    n_test_recordings: int = 40
    duration_seconds: float = 0.8
    sample_rate: int = EXPECTED_RATE
    f0_male: float = 120.0
    f0_female: float = 220.0
    detune_hz: float = 1.5
    n_harmonics: int = 12
    noise_hc: float = 0.02
    noise_pd: float = 0.1
    noise_jitter: float = 0.25
    seed: int = 7

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - fields)
        if unknown:
            raise ValueError(f"unknown synth config key(s): {', '.join(unknown)}")
        return cls(**d)


def balanced_labels(n: int, rng: np.random.Generator) -> list[tuple[str, str]]:
    """``n`` (gender, diagnosis) pairs cycling the four cells, then shuffled."""
    cells = [("M", "HC"), ("F", "PD"), ("M", "PD"), ("F", "HC")]
    labels = [cells[i % 4] for i in range(n)]
    order = rng.permutation(n)
    return [labels[i] for i in order]


def synth_recording(gender: str, diagnosis: str, cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    n = int(round(cfg.duration_seconds * cfg.sample_rate))
    t = np.arange(n) / cfg.sample_rate
    f0 = (cfg.f0_male if gender == "M" else cfg.f0_female) + rng.uniform(-cfg.detune_hz, cfg.detune_hz)
    tilt = rng.uniform(0.8, 1.4)  # speaker-specific spectral rolloff
    phases = rng.uniform(0, 2 * np.pi, cfg.n_harmonics)
    tone = np.zeros(n)
    for k in range(1, cfg.n_harmonics + 1):
        if k * f0 >= cfg.sample_rate / 2:
            break
        tone += np.sin(2 * np.pi * k * f0 * t + phases[k - 1]) / k**tilt
    tone /= np.max(np.abs(tone))
    level = cfg.noise_hc if diagnosis == "HC" else cfg.noise_pd
    level *= np.exp(rng.uniform(-cfg.noise_jitter, cfg.noise_jitter))
    x = 0.5 * tone + level * rng.standard_normal(n)
    return x / max(1.0, np.max(np.abs(x)) / 0.99)


def generate_synthetic_corpus(cfg: SynthConfig, out_dir) -> Path:
    """Write WAVs under ``out_dir/wav`` and ``out_dir/manifest.csv``; returns the manifest path."""
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for split, count in (("train", cfg.n_train_recordings), ("test", cfg.n_test_recordings)):
        for i, (gender, diagnosis) in enumerate(balanced_labels(count, rng)):
            rid = f"{split}_{i:04d}"
            write_wav(wav_dir / f"{rid}.wav", synth_recording(gender, diagnosis, cfg, rng), cfg.sample_rate)
            rows.append(
                {
                    "path": f"wav/{rid}.wav",
                    "recording_id": rid,
                    "speaker_id": f"spk_{rid}",
                    "diagnosis": diagnosis,
                    "gender": gender,
                    "split": split,
                    "utterance": "sustained_tone",
                }
            )
    manifest = out_dir / "manifest.csv"
    write_manifest(manifest, rows)
    (out_dir / "synth_config.json").write_text(json.dumps(dataclasses.asdict(cfg), indent=2) + "\n")
    return manifest
