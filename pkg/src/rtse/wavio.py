"""Mono 16 kHz WAV reading and writing (16-bit PCM or 32-bit float)."""
from __future__ import annotations

import os

import numpy as np
from scipy.io import wavfile

from rtse.errors import DataError

SAMPLE_RATE = 16000


def read_wav(path, expected_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Read a mono WAV file as float64 samples in [-1, 1].

    There is no resampler: any rate other than ``expected_rate`` is rejected.
    """
    try:
        rate, data = wavfile.read(os.fspath(path))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read WAV file {path}: {exc}") from exc
    if rate != expected_rate:
        raise DataError(
            f"{path}: sample rate {rate} Hz is not supported; audio must be {expected_rate} Hz "
            f"(resample to 16 kHz first)"
        )
    if data.ndim != 1:
        raise DataError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        return data.astype(np.float64) / 2147483648.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise DataError(f"{path}: unsupported sample format {data.dtype}")


def write_wav(path, samples, subtype: str = "float", rate: int = SAMPLE_RATE) -> None:
    """Write mono samples; ``subtype`` is ``"float"`` (32-bit IEEE) or ``"pcm16"``."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("only mono audio can be written")
    if subtype == "float":
        data = x.astype(np.float32)
    elif subtype == "pcm16":
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown WAV subtype {subtype!r}")
    wavfile.write(os.fspath(path), rate, data)
