"""Dataset synthesis: level normalization, random excerpts and SNR-exact mixing."""
from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from rtse.errors import ContractError, DataError
from rtse.wavio import SAMPLE_RATE, read_wav

DEFAULT_SNRS = (40.0, 30.0, 20.0, 10.0, 0.0)
DEFAULT_LEVEL_DB = -25.0


@dataclass
class Clip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    source_id: str = ""
    role: str = "speech"
    offset: int = 0  # start sample inside the source (after tiling)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ContractError("clips are mono")
        if self.sample_rate != SAMPLE_RATE:
            raise DataError(f"clip {self.source_id!r} is {self.sample_rate} Hz; only 16 kHz audio is supported")
        if self.role not in ("speech", "noise", "noisy"):
            raise ContractError(f"unknown clip role {self.role!r}")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


def _samples(x) -> np.ndarray:
    return x.samples if isinstance(x, Clip) else np.asarray(x, dtype=np.float64)


def rms_db(x) -> float:
    x = _samples(x)
    return 10.0 * np.log10(np.mean(x * x))


def level_normalize(clip: Clip, target_db: float = DEFAULT_LEVEL_DB) -> Clip:
    """Scale the clip so its RMS level equals ``target_db`` dBFS."""
    x = clip.samples
    power = float(np.mean(x * x)) if len(x) else 0.0
    if power <= 0.0:
        raise DataError(f"clip {clip.source_id!r} is silent and cannot be level-normalized")
    gain = 10.0 ** (target_db / 20.0) / np.sqrt(power)
    return replace(clip, samples=x * gain)


def noise_gain(speech, noise, snr_db: float) -> float:
    e_s = float(np.sum(_samples(speech) ** 2))
    e_n = float(np.sum(_samples(noise) ** 2))
    if e_n <= 0.0:
        raise DataError("noise excerpt is silent; no finite SNR can be reached")
    if e_s <= 0.0:
        raise DataError("speech excerpt is silent")
    return float(np.sqrt(e_s / (e_n * 10.0 ** (snr_db / 10.0))))


def mix_at_snr(speech, noise, snr_db: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scale ``noise`` to the requested global SNR and add it to ``speech``.

    Returns ``(noisy, clean, scaled_noise)`` with ``noisy == clean + scaled_noise``.
    """
    s = _samples(speech)
    n = _samples(noise)
    if s.shape != n.shape:
        raise ContractError(f"speech and noise lengths differ ({s.shape[0]} vs {n.shape[0]})")
    scaled = n * noise_gain(s, n, snr_db)
    return s + scaled, s.copy(), scaled


def measured_snr_db(clean, noise) -> float:
    return 10.0 * np.log10(np.sum(_samples(clean) ** 2) / np.sum(_samples(noise) ** 2))


def random_excerpt(clip: Clip, duration: float, rng: np.random.Generator) -> Clip:
    """Uniformly placed excerpt; shorter clips are tiled first."""
    if not duration > 0:
        raise ContractError("duration must be positive")
    if len(clip) == 0:
        raise DataError(f"clip {clip.source_id!r} is empty")
    n = int(round(duration * clip.sample_rate))
    x = clip.samples
    if len(x) < n:
        x = np.tile(x, -(-n // len(x)))
    offset = int(rng.integers(0, len(x) - n + 1))
    return replace(clip, samples=x[offset : offset + n].copy(), offset=offset)


# -- manifests and datasets -------------------------------------------------


def read_manifest(path) -> list[tuple[str, Path]]:
    """Parse ``role<TAB>path`` lines; relative paths are taken from the manifest's directory."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or parts[0] not in ("speech", "noise"):
            raise DataError(f"{path}:{lineno}: expected 'speech|noise<TAB>path', got {line!r}")
        p = Path(parts[1].strip())
        entries.append((parts[0], p if p.is_absolute() else path.parent / p))
    return entries


def load_clips(manifest) -> tuple[list[Clip], list[Clip]]:
    speech, noise = [], []
    for role, p in read_manifest(manifest):
        clip = Clip(read_wav(p), SAMPLE_RATE, str(p), role)
        (speech if role == "speech" else noise).append(clip)
    return speech, noise


class MixingDataset:
    """Draws level-normalized speech excerpts mixed with noise at a random SNR from a set."""

    def __init__(self, speech: Sequence[Clip], noise: Sequence[Clip], snr_set: Sequence[float] = DEFAULT_SNRS,
                 level_db: float = DEFAULT_LEVEL_DB, max_tries: int = 20):
        if not speech or not noise:
            raise DataError("need at least one speech clip and one noise clip")
        if not snr_set:
            raise ContractError("snr_set is empty")
        self.speech = [level_normalize(c, level_db) for c in speech]
        self.noise = list(noise)
        self.snr_set = [float(s) for s in snr_set]
        self.max_tries = max_tries

    def draw_mix(self, rng: np.random.Generator, n_samples: int) -> dict:
        """One mix with its provenance (source ids, offsets, SNR)."""
        duration = n_samples / SAMPLE_RATE
        for _ in range(self.max_tries):
            si = int(rng.integers(len(self.speech)))
            ni = int(rng.integers(len(self.noise)))
            snr = self.snr_set[int(rng.integers(len(self.snr_set)))]
            s = random_excerpt(self.speech[si], duration, rng)
            n = random_excerpt(self.noise[ni], duration, rng)
            if np.any(s.samples) and np.any(n.samples):
                noisy, clean, scaled = mix_at_snr(s, n, snr)
                return {"noisy": noisy, "clean": clean, "noise": scaled, "snr_db": snr,
                        "speech": s.source_id, "speech_offset": s.offset,
                        "noise_source": n.source_id, "noise_offset": n.offset}
        raise DataError(f"no non-silent excerpt found in {self.max_tries} draws")

    def draw(self, rng: np.random.Generator, n_samples: int) -> tuple[np.ndarray, np.ndarray]:
        mix = self.draw_mix(rng, n_samples)
        return mix["clean"], mix["noise"]


@dataclass
class Triplet:
    clip_id: str
    snr_db: float
    noisy: np.ndarray
    clean: np.ndarray
    noise: np.ndarray


def triplet_name(clip_id: str, snr_db: float) -> str:
    return f"{clip_id}_snr{snr_db:g}.wav"


def load_triplets(dataset_dir) -> list[Triplet]:
    """Read a mixed dataset written by ``rtse mix`` (see :data:`MIX_MANIFEST`)."""
    root = Path(dataset_dir)
    manifest = root / MIX_MANIFEST
    if not manifest.exists():
        raise DataError(f"{root} has no {MIX_MANIFEST}")
    lines = manifest.read_text().splitlines()
    header = lines[0].split("\t")
    out = []
    for line in lines[1:]:
        if not line:
            continue
        row = dict(zip(header, line.split("\t")))
        name = row["file"]
        parts = {}
        for role in ("noisy", "clean", "noise"):
            p = root / role / name
            if not p.exists():
                raise DataError(f"missing {role} file {p}")
            parts[role] = read_wav(p)
        out.append(Triplet(row["id"], float(row["snr_db"]), parts["noisy"], parts["clean"], parts["noise"]))
    return out


MIX_MANIFEST = "mix_manifest.tsv"
MIX_COLUMNS = ("id", "file", "snr_db", "seed", "duration_s", "speech", "speech_offset",
               "noise_source", "noise_offset")


class TripletDataset:
    """Random aligned excerpts of pre-mixed (clean, noise) triplets."""

    def __init__(self, triplets: Sequence[Triplet]):
        if not triplets:
            raise DataError("dataset has no triplets")
        self.triplets = list(triplets)

    def draw(self, rng: np.random.Generator, n_samples: int) -> tuple[np.ndarray, np.ndarray]:
        t = self.triplets[int(rng.integers(len(self.triplets)))]
        reps = -(-n_samples // len(t.clean))
        clean = np.tile(t.clean, reps)
        noise = np.tile(t.noise, reps)
        off = int(rng.integers(0, len(clean) - n_samples + 1))
        return clean[off : off + n_samples].copy(), noise[off : off + n_samples].copy()


def write_mixes(out_dir, dataset: MixingDataset, count: int, duration_s: float, seed: int) -> list[dict]:
    """Write ``count`` noisy/clean/noise triplets plus a reproducibility manifest.

    Mix ``i`` is drawn from ``default_rng([seed, i])``.  If the mixture would clip,
    all three signals are scaled down together (the SNR is unchanged).
    """
    from rtse.wavio import write_wav

    root = Path(out_dir)
    for role in ("noisy", "clean", "noise"):
        (root / role).mkdir(parents=True, exist_ok=True)
    n_samples = int(round(duration_s * SAMPLE_RATE))
    rows = []
    for i in range(count):
        mix = dataset.draw_mix(np.random.default_rng([seed, i]), n_samples)
        peak = np.max(np.abs(mix["noisy"]))
        if peak > 0.99:
            k = 0.99 / peak
            for role in ("clean", "noise"):
                mix[role] = mix[role] * k
            mix["noisy"] = mix["clean"] + mix["noise"]
        clip_id = f"{i:05d}"
        name = triplet_name(clip_id, mix["snr_db"])
        for role in ("noisy", "clean", "noise"):
            write_wav(root / role / name, mix[role])
        rows.append({"id": clip_id, "file": name, "snr_db": f"{mix['snr_db']:g}", "seed": str(seed),
                     "duration_s": f"{duration_s:g}", "speech": os.path.basename(mix["speech"]),
                     "speech_offset": str(mix["speech_offset"]),
                     "noise_source": os.path.basename(mix["noise_source"]),
                     "noise_offset": str(mix["noise_offset"])})
    lines = ["\t".join(MIX_COLUMNS)] + ["\t".join(r[c] for c in MIX_COLUMNS) for r in rows]
    (root / MIX_MANIFEST).write_text("\n".join(lines) + "\n")
    return rows
