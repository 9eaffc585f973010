"""NPRACH preamble formats, sample-domain numerology, hopping and waveforms.

Only FDD formats are modelled. Durations are expressed in multiples of the
LTE basic time unit ``TS = 1 / 30.72 MHz`` so that CP lengths land on integer
sample counts for any sampling rate that is a multiple of 1.92 MHz.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

TS = 1.0 / 30.72e6
DEFAULT_FS = 1.92e6


class ConfigurationError(ValueError):
    """Raised for parameter combinations that cannot be realised."""


@dataclass(frozen=True)
class PreambleFormat:
    format_id: int
    delta_f: float
    P: int
    L: int
    T_cp: float
    T_seq: float
    n_subcarriers: int
    group_size: int
    step_set: tuple[int, ...]

    @property
    def symbol_duration(self) -> float:
        return 1.0 / self.delta_f


FORMATS = {
    0: PreambleFormat(0, 3750.0, 4, 5, 2048 * TS, 5 * 8192 * TS, 48, 12, (1, 6)),
    1: PreambleFormat(1, 3750.0, 4, 5, 8192 * TS, 5 * 8192 * TS, 48, 12, (1, 6)),
    2: PreambleFormat(2, 1250.0, 6, 3, 24576 * TS, 3 * 24576 * TS, 144, 36, (1, 3, 18)),
}


def get_format(format_id: int) -> PreambleFormat:
    try:
        return FORMATS[format_id]
    except KeyError:
        raise ConfigurationError(f"unknown FDD preamble format {format_id!r}") from None


@dataclass(frozen=True)
class Numerology:
    """Sample-domain sizes of one preamble format at a given rate."""

    fs: float
    N: int
    N_cp: int
    L: int
    P: int
    delta_f: float

    @property
    def N_g(self) -> int:
        return self.N_cp + self.L * self.N

    def symbol_group_samples(self, n_rep: int) -> int:
        return n_rep * self.P * self.N_g


def _as_integer(value: float, what: str) -> int:
    n = int(round(value))
    if n <= 0 or abs(value - n) > 1e-6 * max(1.0, abs(value)):
        raise ConfigurationError(f"{what} = {value!r} is not a positive integer")
    return n


def build_numerology(fmt: PreambleFormat, fs: float = DEFAULT_FS) -> Numerology:
    """Realise ``fmt`` on a sample grid of rate ``fs``.

    Raises ConfigurationError when the symbol or CP length would not be an
    integer number of samples.
    """
    N = _as_integer(fs / fmt.delta_f, "samples per symbol fs/delta_f")
    N_cp = _as_integer(fs * fmt.T_cp, "samples per CP fs*T_cp")
    return Numerology(fs=float(fs), N=N, N_cp=N_cp, L=fmt.L, P=fmt.P, delta_f=fmt.delta_f)


@dataclass(frozen=True)
class PreambleConfig:
    format: PreambleFormat
    n_rep: int = 1
    start_subcarrier: int = 0
    hopping_seed: int = 0

    def __post_init__(self):
        if self.n_rep not in {2**j for j in range(8)}:
            raise ConfigurationError(f"n_rep must be a power of two up to 128, got {self.n_rep}")
        if not 0 <= self.start_subcarrier < self.format.n_subcarriers:
            raise ConfigurationError(
                f"start_subcarrier {self.start_subcarrier} outside 0..{self.format.n_subcarriers - 1}"
            )

    @property
    def n_symbol_groups(self) -> int:
        return self.format.P * self.n_rep


@dataclass(frozen=True)
class HoppingPattern:
    n_sc: np.ndarray = field(repr=False)
    P: int

    @property
    def deltas(self) -> np.ndarray:
        """Hopping steps between consecutive symbol groups."""
        return np.diff(self.n_sc)

    @property
    def n_units(self) -> int:
        return len(self.n_sc) // self.P


class UnitAnchors(Protocol):
    """Source of the pseudo-random re-anchoring between basic units.

    Returns ``n_units - 1`` offsets in ``1 .. group_size - 1``; unit ``u``
    starts ``offsets[u - 1]`` subcarriers (cyclically, within the hopping
    group) after the start of unit ``u - 1``.
    """

    def __call__(self, n_units: int, group_size: int) -> np.ndarray: ...


@dataclass(frozen=True)
class SeededAnchors:
    """Default re-anchoring: uniform offsets from a seeded PCG64 stream.

    The offsets depend only on the seed (the cell), so preambles with
    distinct start subcarriers in the same cell never collide.
    """

    seed: int

    def __call__(self, n_units: int, group_size: int) -> np.ndarray:
        rng = np.random.default_rng([0x4E505241, self.seed])
        return rng.integers(1, group_size, size=max(n_units - 1, 0))


def unit_hops(starts, fmt: PreambleFormat) -> np.ndarray:
    """Group-relative subcarriers of one basic unit for each start index.

    ``starts`` may have any shape; a trailing axis of length ``P`` is added.
    """
    n = np.asarray(starts, dtype=np.int64)
    rules = ("parity", 6, "parity") if fmt.format_id in (0, 1) else ("parity", 3, 18, "parity", 3)
    seq = [n]
    for rule in rules:
        if rule == "parity":
            n = np.where(n % 2 == 0, n + 1, n - 1)
        elif rule == 3:
            n = np.where(n % 6 < 3, n + 3, n - 3)
        else:
            n = np.where(n < rule, n + rule, n - rule)
        seq.append(n)
    return np.stack(seq, axis=-1)


def hopping_from_anchors(fmt: PreambleFormat, start_subcarrier, offsets) -> np.ndarray:
    """Vectorised hopping: ``start_subcarrier`` (...,), ``offsets`` (..., n_rep - 1).

    Returns subcarrier indices of shape (..., n_rep * P).
    """
    G = fmt.group_size
    start = np.asarray(start_subcarrier, dtype=np.int64)
    offsets = np.asarray(offsets, dtype=np.int64)
    rel = np.concatenate([(start % G)[..., None], offsets], axis=-1)
    unit_starts = np.cumsum(rel, axis=-1) % G
    hops = unit_hops(unit_starts, fmt)
    return hops.reshape(*hops.shape[:-2], -1) + ((start // G) * G)[..., None]


def generate_hopping(config: PreambleConfig, anchors: UnitAnchors | None = None) -> HoppingPattern:
    """Subcarrier index of every symbol group of the preamble.

    Inside a basic unit the steps follow the fixed pattern of the format
    ((+-1, +-6, -+1) for formats 0/1); between units the start index is
    re-anchored by ``anchors`` (default :class:`SeededAnchors`).
    """
    if anchors is None:
        anchors = SeededAnchors(config.hopping_seed)
    offsets = np.asarray(anchors(config.n_rep, config.format.group_size), dtype=np.int64)
    n_sc = hopping_from_anchors(config.format, config.start_subcarrier, offsets)
    return HoppingPattern(n_sc=n_sc, P=config.format.P)


def generate_waveform(config: PreambleConfig, hopping: HoppingPattern, numerology: Numerology) -> np.ndarray:
    """Baseband preamble samples, unit modulus, ``n_rep * P * N_g`` long.

    Symbol group ``m`` is the tone ``exp(j 2 pi k_m (p - N_cp) / N)`` for
    ``p = 0 .. N_g - 1``, so every symbol starts at zero phase and the CP is
    a cyclic copy of the symbol tail.
    """
    nm = numerology
    k = np.asarray(hopping.n_sc, dtype=np.int64)
    if len(k) != config.n_symbol_groups:
        raise ConfigurationError("hopping pattern length does not match the preamble")
    p = np.arange(nm.N_g, dtype=np.int64) - nm.N_cp
    roots = np.exp(2j * np.pi * np.arange(nm.N) / nm.N)
    # integer phase index keeps periodic samples bit-identical
    return roots[np.mod(np.outer(k, p), nm.N)].ravel()
