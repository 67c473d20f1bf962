"""Loading labeled recordings, amplitude normalization and fixed-length chunking."""
from __future__ import annotations

import csv
import dataclasses
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

__all__ = [
    "EXPECTED_RATE",
    "AudioClip",
    "AudioChunk",
    "ManifestRow",
    "ManifestError",
    "WavError",
    "load_wav",
    "write_wav",
    "normalize_amplitude",
    "chunk_geometry",
    "segment",
    "read_manifest",
    "write_manifest",
    "MANIFEST_COLUMNS",
]

EXPECTED_RATE = 44100
MANIFEST_COLUMNS = ("path", "recording_id", "speaker_id", "diagnosis", "gender", "split", "utterance")
DIAGNOSES = ("HC", "PD")
GENDERS = ("M", "F")
SPLITS = ("train", "test")


class WavError(ValueError):
    pass


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    recording_id: str = ""
    labels: dict = field(default_factory=dict)
    silent: bool = False

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class AudioChunk:
    samples: np.ndarray
    parent_id: str
    chunk_index: int
    start_sample: int
    padded: bool = False


@dataclass(frozen=True)
class ManifestRow:
    path: Path
    recording_id: str
    speaker_id: str
    diagnosis: str
    gender: str
    split: str
    utterance: str

    @property
    def labels(self) -> dict:
        return {
            "diagnosis": self.diagnosis,
            "gender": self.gender,
            "speaker_id": self.speaker_id,
            "split": self.split,
            "utterance": self.utterance,
        }


# Full-scale divisors for integer PCM; 24-bit data arrives left-justified in int32.
_INT_SCALE = {np.dtype(np.uint8): None, np.dtype(np.int16): 2.0**15, np.dtype(np.int32): 2.0**31}


def load_wav(path, recording_id: str | None = None, labels: dict | None = None) -> AudioClip:
    """Read a PCM WAV file as mono float64 samples in [-1, 1]."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"audio file not found: {path}")
    try:
        rate, data = wavfile.read(path)
    except (ValueError, EOFError, struct.error) as exc:  # truncated headers surface as struct/EOF errors
        raise WavError(f"{path}: malformed WAV file ({exc})") from None
    if data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in _INT_SCALE:
        x = data.astype(np.float64) / _INT_SCALE[data.dtype]
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise WavError(f"{path}: unsupported sample format {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise WavError(f"{path}: zero-length audio")
    if rate != EXPECTED_RATE:
        warnings.warn(f"{path}: sample rate {rate} Hz, expected {EXPECTED_RATE}; chunk sizes follow the actual rate")
    return AudioClip(x, int(rate), recording_id or path.stem, dict(labels or {}))


def write_wav(path, samples: np.ndarray, sample_rate: int = EXPECTED_RATE) -> None:
    """Write float samples in [-1, 1] as 16-bit PCM."""
    pcm = np.clip(np.round(np.asarray(samples) * 32767.0), -32768, 32767).astype("<i2")
    wavfile.write(path, sample_rate, pcm)


def normalize_amplitude(clip: AudioClip) -> AudioClip:
    """Divide by the peak absolute amplitude; all-zero clips come back flagged silent."""
    peak = np.max(np.abs(clip.samples)) if len(clip.samples) else 0.0
    if peak == 0.0:
        return dataclasses.replace(clip, silent=True)
    return dataclasses.replace(clip, samples=clip.samples / peak, silent=False)


def chunk_geometry(sample_rate: int, chunk_seconds: float = 0.4, overlap: float = 0.5) -> tuple[int, int]:
    """Return ``(chunk_len, hop)`` in samples."""
    if sample_rate <= 0:
        raise ValueError("sample_rate must be positive")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must lie in [0, 1)")
    chunk_len = int(round(chunk_seconds * sample_rate))
    hop = max(1, int(round(chunk_len * (1.0 - overlap))))
    return chunk_len, hop


def segment(clip: AudioClip, chunk_seconds: float = 0.4, overlap: float = 0.5) -> list[AudioChunk]:
    chunk_len, hop = chunk_geometry(clip.sample_rate, chunk_seconds, overlap)
    x = np.asarray(clip.samples, dtype=np.float64)
    n = len(x)
    if n < chunk_len:
        padded = np.zeros(chunk_len)
        padded[:n] = x
        return [AudioChunk(padded, clip.recording_id, 0, 0, padded=True)]
    count = (n - chunk_len) // hop + 1
    return [
        AudioChunk(x[k * hop : k * hop + chunk_len].copy(), clip.recording_id, k, k * hop)
        for k in range(count)
    ]


def read_manifest(path) -> list[ManifestRow]:
    """Read a dataset manifest CSV; relative audio paths resolve against its directory."""
    path = Path(path)
    base = path.parent
    rows: list[ManifestRow] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in MANIFEST_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise ManifestError(f"{path}: missing column(s) {', '.join(missing)}")
        for i, raw in enumerate(reader, start=1):
            where = f"{path}: row {i}"
            diagnosis = (raw["diagnosis"] or "").strip().upper()
            gender = (raw["gender"] or "").strip().upper()
            split = (raw["split"] or "").strip().lower()
            if diagnosis not in DIAGNOSES:
                raise ManifestError(f"{where}: diagnosis {raw['diagnosis']!r} not in {DIAGNOSES}")
            if gender not in GENDERS:
                raise ManifestError(f"{where}: gender {raw['gender']!r} not in {GENDERS}")
            if split not in SPLITS:
                raise ManifestError(f"{where}: split {raw['split']!r} not in {SPLITS}")
            rid = (raw["recording_id"] or "").strip()
            if not rid:
                raise ManifestError(f"{where}: empty recording_id")
            if rid in seen:
                raise ManifestError(f"{where}: duplicate recording_id {rid!r}")
            seen.add(rid)
            audio = Path(raw["path"])
            rows.append(
                ManifestRow(
                    path=audio if audio.is_absolute() else base / audio,
                    recording_id=rid,
                    speaker_id=(raw["speaker_id"] or "").strip(),
                    diagnosis=diagnosis,
                    gender=gender,
                    split=split,
                    utterance=(raw["utterance"] or "").strip(),
                )
            )
    return rows


def write_manifest(path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in MANIFEST_COLUMNS})
