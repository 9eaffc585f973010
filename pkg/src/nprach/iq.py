"""Interleaved float32 I/Q capture files (little-endian, I first)."""

from __future__ import annotations

import os

import numpy as np


def write_iq(path: str | os.PathLike, samples: np.ndarray) -> None:
    samples = np.asarray(samples)
    if samples.ndim != 1:
        raise ValueError("write one antenna stream per file")
    out = np.empty(2 * samples.size, dtype="<f4")
    out[0::2] = samples.real
    out[1::2] = samples.imag
    out.tofile(path)


def read_iq(path: str | os.PathLike) -> np.ndarray:
    raw = np.fromfile(path, dtype="<f4")
    if raw.size % 2:
        raise ValueError(f"{path}: odd number of float32 values, not an I/Q capture")
    return raw[0::2].astype(np.float64) + 1j * raw[1::2].astype(np.float64)
