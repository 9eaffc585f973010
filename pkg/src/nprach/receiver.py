"""NPRACH detector and estimators for LEO uplinks.

Processing chain for one preamble (format 1 unless stated otherwise):

1. demodulate: skip an extended CP of ``N_cp + L_cp * N`` samples per symbol
   group, DFT the remaining ``L' = L - L_cp`` symbols, read the hopping bin.
2. sg_sum: coherent sum of the ``L'`` symbols of each group.
3. differential: ``Z_m = Y_m * conj(Y_{m+1})`` removes the residual CFO.
4. toa_metric: per basic unit, scatter ``Z_m`` into an array indexed by the
   hopping step, DFT it and combine ``|V_u|**2`` over units and antennas.
5. detect / estimate_toa: threshold the peak, map its bin to a raw delay,
   ambiguous modulo ``1 / delta_f``.
6. compensate_toa / estimate_doppler_rate: strip the delay from ``Z`` and
   search the Doppler rate on a restricted DTFT grid.
7. resolve_ambiguity: pick the delay candidate whose predicted rate is
   closest to the estimate.

All array functions accept leading batch axes, so a Monte Carlo chunk runs
through the chain in a few vectorised calls. Demodulated grids have shape
``(..., n_rx, M, L')``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import GeometryReport, candidate_table
from .waveform import (
    FORMATS,
    ConfigurationError,
    HoppingPattern,
    Numerology,
    PreambleFormat,
    hopping_from_anchors,
)

TOA_PASS_BOUND = 3.646e-6


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class ReceiverConfig:
    """Receiver parameters.

    ``threshold`` is absolute (same units as ``X``); use
    :meth:`Threshold.absolute` to derive it from a calibration artifact.
    """

    l_cp: int = 0
    n_dft: int = 256
    n_dtft: int = 62
    alpha_min_sc: float = -594.0
    alpha_max_sc: float = -101.0
    threshold: float | None = None
    n_rx: int = 2
    toa_pass_bound: float = TOA_PASS_BOUND
    mode: str = "ntn"
    format_id: int = 1

    def __post_init__(self):
        L = FORMATS[self.format_id].L
        if not 0 <= self.l_cp < L:
            raise ConfigurationError(f"l_cp must be in 0..{L - 1}, got {self.l_cp}")
        if self.mode not in ("ntn", "tn"):
            raise ConfigurationError(f"mode must be 'ntn' or 'tn', got {self.mode!r}")
        if self.n_dtft < 1 or self.n_dft < 1 or self.n_rx < 1:
            raise ConfigurationError("n_dft, n_dtft and n_rx must be positive")
        if self.alpha_min_sc > self.alpha_max_sc:
            raise ConfigurationError("alpha_min_sc must not exceed alpha_max_sc")

    @property
    def format(self) -> PreambleFormat:
        return FORMATS[self.format_id]

    @property
    def l_prime(self) -> int:
        return self.format.L - self.l_cp

    @property
    def cp_new(self) -> float:
        return self.format.T_cp + self.l_cp / self.format.delta_f

    @property
    def t_amb(self) -> float:
        """Delay ambiguity period, ``1 / (delta_min * delta_f)``."""
        return 1.0 / self.format.delta_f

    def delta_alpha(self, numerology: Numerology) -> float:
        """Doppler grid step, normalised (``alpha / fs**2 * N_g**2`` units)."""
        span = (self.alpha_max_sc - self.alpha_min_sc) / numerology.fs**2 * numerology.N_g**2
        return span / self.n_dtft

    def with_(self, **kw) -> "ReceiverConfig":
        return replace(self, **kw)


def choose_l_cp(md_rtd: float, fmt: PreambleFormat, tol: float = 1 / 1.92e6) -> int:
    """Smallest ``L_cp`` whose extended CP covers ``md_rtd`` (within ``tol`` seconds)."""
    for l_cp in range(fmt.L):
        if fmt.T_cp + l_cp / fmt.delta_f >= md_rtd - tol:
            return l_cp
    raise ConfigurationError(f"MD-RTD {md_rtd * 1e6:.1f} us exceeds any CP extension of format {fmt.format_id}")


def _deltas(hopping) -> np.ndarray:
    if isinstance(hopping, HoppingPattern):
        return hopping.deltas
    return np.asarray(hopping)


# ---------------------------------------------------------------- demodulation


def demodulate(rx: np.ndarray, config: ReceiverConfig, numerology: Numerology, hopping) -> np.ndarray:
    """Per-symbol DFT bins ``Y[..., rx, m, i]`` read at the hopping subcarriers.

    ``rx`` has shape ``(..., n_rx, n_samples)``; ``hopping`` is a
    :class:`HoppingPattern` or an array of subcarrier indices ``(..., M)``.
    """
    nm = numerology
    n_sc = hopping.n_sc if isinstance(hopping, HoppingPattern) else np.asarray(hopping)
    M = n_sc.shape[-1]
    rx = np.asarray(rx)
    need = M * nm.N_g
    if rx.shape[-1] < need:
        raise ValueError(f"rx holds {rx.shape[-1]} samples, the preamble window needs {need}")
    grid = rx[..., :need].reshape(*rx.shape[:-1], M, nm.N_g)
    start = nm.N_cp + config.l_cp * nm.N
    sym = grid[..., start:].reshape(*grid.shape[:-1], config.l_prime, nm.N)
    # single-bin DFT: dot each block with the conjugate tone of its group
    roots = np.exp(-2j * np.pi * np.arange(nm.N) / nm.N)
    kernel = roots[np.mod(np.multiply.outer(n_sc, np.arange(nm.N)), nm.N)]  # (..., M, N)
    kernel = np.expand_dims(kernel, axis=-3)  # broadcast over antennas
    return np.einsum("...mln,...mn->...ml", sym, kernel)


def sg_sum(Y: np.ndarray) -> np.ndarray:
    return Y.sum(axis=-1)


def differential(Ym: np.ndarray) -> np.ndarray:
    if Ym.shape[-1] < 2:
        raise ValueError("differential processing needs at least two symbol groups")
    return Ym[..., :-1] * np.conj(Ym[..., 1:])


# ---------------------------------------------------------------- ToA metric


def unit_arrays(Z: np.ndarray, hopping, P: int, n_dft: int = 256, mode: str = "ntn") -> np.ndarray:
    """Scatter ``Z[..., rx, m]`` into per-unit arrays ``v[..., rx, u, n_dft]``.

    Entry ``Z_m`` lands at index ``delta_m mod n_dft`` of unit ``m // P``;
    equal steps within one unit add up. In ``tn`` mode all symbols share one
    array.
    """
    Z = np.asarray(Z)
    d = np.broadcast_to(_deltas(hopping), Z.shape[:-2] + Z.shape[-1:])
    n_t = Z.shape[-1]
    if mode == "tn":
        unit = np.zeros(n_t, dtype=np.int64)
        n_units = 1
    else:
        unit = np.arange(n_t) // P
        n_units = int(unit[-1]) + 1
    n_rx = Z.shape[-2]
    batch = int(np.prod(Z.shape[:-2], dtype=np.int64))
    col = np.mod(d, n_dft).reshape(batch, 1, n_t)
    base = (np.arange(batch).reshape(batch, 1, 1) * n_rx + np.arange(n_rx).reshape(1, n_rx, 1)) * n_units
    idx = ((base + unit) * n_dft + col).ravel()
    size = batch * n_rx * n_units * n_dft
    z = Z.reshape(-1)
    v = np.bincount(idx, weights=z.real, minlength=size) + 1j * np.bincount(idx, weights=z.imag, minlength=size)
    return v.reshape(*Z.shape[:-2], n_rx, n_units, n_dft)


def _lag_metric(Z: np.ndarray, d: np.ndarray, P: int, n_dft: int) -> np.ndarray:
    """NTN metric through per-unit lag sums.

    ``|V_u[k]|**2`` is the DFT of the autocorrelation of ``v_u``; each unit
    holds at most ``P`` entries, so summing the ``P * P`` lag products of all
    units and antennas first needs a single DFT per preamble.
    """
    n_t = Z.shape[-1]
    n_units = -(-n_t // P)
    pad = n_units * P - n_t
    if pad:
        Z = np.concatenate([Z, np.zeros(Z.shape[:-1] + (pad,), dtype=Z.dtype)], axis=-1)
        d = np.concatenate([d, np.zeros(d.shape[:-1] + (pad,), dtype=d.dtype)], axis=-1)
    Zu = Z.reshape(*Z.shape[:-1], n_units, P)
    du = d.reshape(*d.shape[:-1], n_units, P)
    # Z_a conj(Z_b) in explicit real arithmetic: a common quarter-turn phasor
    # then only permutes exact products, so X stays bit-identical (complex
    # multiply may fuse terms in an order that breaks this)
    ar, ai = Zu.real[..., :, None], Zu.imag[..., :, None]
    br, bi = Zu.real[..., None, :], Zu.imag[..., None, :]
    Sr = np.sum(ar * br + ai * bi, axis=-4)  # sum over antennas
    Si = np.sum(ai * br - ar * bi, axis=-4)
    lag = np.mod(du[..., :, None] - du[..., None, :], n_dft)
    batch = int(np.prod(Sr.shape[:-3], dtype=np.int64))
    idx = (np.arange(batch).reshape(batch, 1) * n_dft + lag.reshape(batch, -1)).ravel()
    size = batch * n_dft
    R = np.bincount(idx, weights=Sr.ravel(), minlength=size) + 1j * np.bincount(idx, weights=Si.ravel(), minlength=size)
    X = np.fft.fft(R.reshape(batch, n_dft), axis=-1).real
    return X.reshape(*Sr.shape[:-3], n_dft)


def toa_metric(Z: np.ndarray, hopping, config: ReceiverConfig, method: str = "auto") -> np.ndarray:
    """Non-coherent ToA metric ``X[..., k]`` from ``Z[..., rx, m]``.

    ``method="direct"`` builds the per-unit arrays and DFTs each one;
    ``"lag"`` (the default for NTN mode) evaluates the same sum through
    per-unit lag products.
    """
    Z = np.asarray(Z)
    if method == "auto":
        method = "lag" if config.mode == "ntn" else "direct"
    if method == "lag" and config.mode == "ntn":
        d = np.broadcast_to(_deltas(hopping), Z.shape[:-2] + Z.shape[-1:]).astype(np.int64)
        return np.maximum(_lag_metric(Z, d, config.format.P, config.n_dft), 0.0)
    v = unit_arrays(Z, hopping, config.format.P, config.n_dft, config.mode)
    V = np.fft.fft(v, axis=-1)
    return np.sum(V.real**2 + V.imag**2, axis=(-3, -2))


def detect(X: np.ndarray, threshold: float):
    """``(detected, k_max, X_max)``; ties resolve to the lowest index."""
    X = np.asarray(X)
    k_max = np.argmax(X, axis=-1)
    X_max = np.take_along_axis(X, k_max[..., None], axis=-1)[..., 0]
    detected = (X_max >= threshold) & (X_max > 0)
    if X.ndim == 1:
        return bool(detected), int(k_max), float(X_max)
    return detected, k_max, X_max


def estimate_toa(k_max, config: ReceiverConfig):
    """Raw delay in seconds, in ``[0, 1 / delta_f)``."""
    step = 1.0 / (config.n_dft * config.format.delta_f)
    return np.asarray(k_max) * step if np.ndim(k_max) else float(k_max) * step


def compensate_toa(Z: np.ndarray, hopping, d_hat_raw, config: ReceiverConfig) -> np.ndarray:
    """``t_m = Z_m exp(-j 2 pi delta_m d_hat delta_f)``; ``d_hat_raw`` may be batched."""
    d = _deltas(hopping)
    d_hat = np.asarray(d_hat_raw, dtype=float)
    phase = -2 * np.pi * config.format.delta_f * d * d_hat[..., None]
    return Z * np.expand_dims(np.exp(1j * phase), axis=-2)


# ---------------------------------------------------------------- Doppler rate


def doppler_grid(config: ReceiverConfig) -> np.ndarray:
    """Search rates (Hz/s): cell midpoints of ``n_dtft`` equal cells over the beam range."""
    lo, hi = config.alpha_min_sc, config.alpha_max_sc
    if lo == hi:
        return np.array([lo])
    return lo + (np.arange(config.n_dtft) + 0.5) * (hi - lo) / config.n_dtft


@dataclass(frozen=True)
class DopplerEstimate:
    alpha_hat: np.ndarray | float
    q_max: np.ndarray | int
    J: np.ndarray = field(repr=False)
    macs: int = 0


def estimate_doppler_rate(t: np.ndarray, config: ReceiverConfig, numerology: Numerology) -> DopplerEstimate:
    """Restricted-grid DTFT search over ``t[..., rx, n]``.

    ``T(w_q) = sum_n t[n] exp(-j w_q n)`` with ``w_q = -2 pi alpha_q N_g**2 / fs**2``
    and ``J[q] = sum_rx |T(w_q)|**2``. ``macs`` counts complex
    multiply-accumulates for one preamble.
    """
    rates = doppler_grid(config)
    n_rx, n_t = t.shape[-2], t.shape[-1]
    w = -2 * np.pi * rates * numerology.N_g**2 / numerology.fs**2
    E = np.exp(-1j * np.outer(np.arange(n_t), w))  # (n_t, Q)
    T = t @ E
    J = np.sum(T.real**2 + T.imag**2, axis=-2)
    q_max = np.argmax(J, axis=-1)
    alpha_hat = rates[q_max]
    macs = n_rx * n_t * rates.size
    if np.ndim(q_max) == 0:
        return DopplerEstimate(float(alpha_hat), int(q_max), J, macs)
    return DopplerEstimate(alpha_hat, q_max, J, macs)


def estimate_doppler_rate_fft(t: np.ndarray, numerology: Numerology, n_fft: int = 2**16) -> DopplerEstimate:
    """Full-span FFT alternative: peak bin ``p`` maps to ``-p / (n_fft N_g**2)``.

    The unambiguous span is ``fs**2 / N_g**2`` (390.625 kHz/s for format 1 at
    1.92 MHz); bins above half the span are read as negative offsets from the
    span edge. ``macs`` reports the ``n log2 n`` operation count per antenna
    sum.
    """
    T = np.fft.fft(t, n=n_fft, axis=-1)
    J = np.sum(T.real**2 + T.imag**2, axis=-2)
    p = np.argmax(J, axis=-1)
    span = numerology.fs**2 / numerology.N_g**2
    # t rotates by -2 pi alpha~ N_g^2 per step, so the peak sits at p = -alpha~ N_g^2 n_fft
    frac = np.where(p > n_fft // 2, p - n_fft, p) / n_fft
    alpha_hat = -frac * span
    ops = t.shape[-2] * n_fft * int(math.log2(n_fft))
    if np.ndim(p) == 0:
        return DopplerEstimate(float(alpha_hat), int(p), J, ops)
    return DopplerEstimate(alpha_hat, p, J, ops)


def max_doppler_rate(numerology: Numerology) -> float:
    """Unambiguous normalised Doppler-rate span ``fs**2 / N_g**2`` in Hz/s."""
    return numerology.fs**2 / numerology.N_g**2


# ---------------------------------------------------------------- ambiguity


def resolve_ambiguity(d_hat_raw: float, alpha_hat: float, candidates) -> float:
    """Delay of the candidate whose predicted rate is nearest ``alpha_hat``.

    ``candidates`` is a list of ``(toa, predicted_rate)`` pairs; ties go to
    the smaller delay.
    """
    if len(candidates) == 0:
        raise ValueError("empty candidate list")
    best = min(candidates, key=lambda c: (abs(c[1] - alpha_hat), c[0]))
    return best[0]


def resolve_batch(d_hat_raw, alpha_hat, report: GeometryReport, config: ReceiverConfig, margin: float):
    """Vectorised :func:`resolve_ambiguity` over the candidates of :func:`candidate_table`."""
    d = np.asarray(d_hat_raw, dtype=float)
    a = np.asarray(alpha_hat, dtype=float)
    t_amb = config.t_amb
    upper = min(report.md_rtd, config.cp_new) + margin
    j = np.arange(-1, int(np.floor(upper / t_amb)) + 1)
    toa = d[..., None] + j * t_amb
    valid = (toa >= -margin) & (toa <= upper)
    cost = np.where(valid, np.abs(report.rate_at_drtd(toa) - a[..., None]), np.inf)
    pick = np.argmin(cost, axis=-1)  # ties: first, i.e. smallest delay
    out = np.take_along_axis(toa, pick[..., None], axis=-1)[..., 0]
    return np.where(np.isfinite(np.min(cost, axis=-1)), out, np.nan)


# ---------------------------------------------------------------- calibration


@dataclass(frozen=True)
class Threshold:
    """Detection threshold at unit per-bin noise variance.

    ``X`` scales with the fourth power of the noise amplitude, so the
    absolute threshold for a per-bin noise variance ``s2`` is
    ``normalized * s2**2``.
    """

    normalized: float
    pfa: float
    n_rep: int
    l_cp: int
    n_rx: int
    trials: int
    mode: str = "ntn"
    seed: int | None = None

    def absolute(self, bin_noise_var: float) -> float:
        return self.normalized * bin_noise_var**2

    def matches(self, n_rep: int, l_cp: int, n_rx: int, mode: str = "ntn") -> bool:
        return (self.n_rep, self.l_cp, self.n_rx, self.mode) == (n_rep, l_cp, n_rx, mode)


def random_hopping(rng: np.random.Generator, fmt: PreambleFormat, n_rep: int, batch: int, starts=None):
    """Hopping subcarriers ``(batch, n_rep * P)`` with random anchors per trial."""
    if starts is None:
        starts = rng.integers(0, fmt.n_subcarriers, size=batch)
    offsets = rng.integers(1, fmt.group_size, size=(batch, n_rep - 1))
    return hopping_from_anchors(fmt, starts, offsets)


def noise_only_peaks(
    rng: np.random.Generator, config: ReceiverConfig, n_rep: int, trials: int, chunk: int = 256
) -> np.ndarray:
    """``X_max`` of noise-only inputs with unit complex variance per DFT bin."""
    fmt = config.format
    out = np.empty(trials)
    M = n_rep * fmt.P
    for s in range(0, trials, chunk):
        b = min(chunk, trials - s)
        n_sc = random_hopping(rng, fmt, n_rep, b)
        w = rng.standard_normal((b, config.n_rx, M, config.l_prime, 2)) * math.sqrt(0.5)
        Ym = sg_sum(w[..., 0] + 1j * w[..., 1])
        X = toa_metric(differential(Ym), np.diff(n_sc, axis=-1), config)
        out[s : s + b] = X.max(axis=-1)
    return out


def calibrate_threshold(config: ReceiverConfig, n_rep: int, pfa: float = 1e-3, trials: int = 100_000, seed=0) -> Threshold:
    """Empirical ``1 - pfa`` quantile of the noise-only metric peak.

    Bin noise is exactly Gaussian for white input noise, so the calibration
    runs directly in the symbol domain.
    """
    if not 0 < pfa < 1:
        raise CalibrationError("pfa must lie in (0, 1)")
    if trials < 100 / pfa:
        raise CalibrationError(f"{trials} trials cannot resolve a {pfa:g} quantile; need at least {math.ceil(100 / pfa)}")
    peaks = noise_only_peaks(np.random.default_rng(seed), config, n_rep, trials)
    thr = float(np.quantile(peaks, 1 - pfa, method="higher"))
    return Threshold(thr, pfa, n_rep, config.l_cp, config.n_rx, trials, config.mode, seed)


# ---------------------------------------------------------------- pipeline


@dataclass
class DetectionResult:
    detected: bool
    k_max: int
    X_max: float
    d_hat_raw: float = float("nan")
    alpha_hat: float = float("nan")
    candidates: list = field(default_factory=list)
    toa_resolved: float = float("nan")
    q_max: int = -1

    def to_record(self) -> dict:
        def num(x, scale=1.0):
            return None if x is None or not np.isfinite(x) else float(x) * scale

        return {
            "detected": bool(self.detected),
            "k_max": int(self.k_max),
            "d_hat_raw_us": num(self.d_hat_raw, 1e6),
            "alpha_hat_hzps": num(self.alpha_hat),
            "toa_resolved_us": num(self.toa_resolved, 1e6),
            "q_max": int(self.q_max),
            "X_max": float(self.X_max),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record())


def process_symbols(
    Y: np.ndarray,
    hopping,
    config: ReceiverConfig,
    numerology: Numerology,
    report: GeometryReport | None = None,
    margin: float | None = None,
) -> DetectionResult:
    """Run the chain from demodulated bins ``Y[rx, m, i]`` of one preamble."""
    if config.threshold is None:
        raise CalibrationError("receiver threshold is not set")
    Z = differential(sg_sum(Y))
    X = toa_metric(Z, hopping, config)
    detected, k_max, X_max = detect(X, config.threshold)
    res = DetectionResult(detected, k_max, X_max)
    if not detected:
        return res
    res.d_hat_raw = float(estimate_toa(k_max, config))
    t = compensate_toa(Z, hopping, res.d_hat_raw, config)
    est = estimate_doppler_rate(t, config, numerology)
    res.alpha_hat, res.q_max = est.alpha_hat, est.q_max
    if report is None:
        res.toa_resolved = res.d_hat_raw
        return res
    if margin is None:
        margin = 2 * config.toa_pass_bound
    res.candidates = candidate_table(report, config.cp_new, res.d_hat_raw, config.t_amb, margin)
    res.toa_resolved = resolve_ambiguity(res.d_hat_raw, res.alpha_hat, res.candidates)
    return res


def receive(
    rx: np.ndarray,
    hopping: HoppingPattern,
    config: ReceiverConfig,
    numerology: Numerology,
    report: GeometryReport | None = None,
) -> DetectionResult:
    """Full chain from time-domain samples ``rx[n_rx, n_samples]``."""
    return process_symbols(demodulate(rx, config, numerology, hopping), hopping, config, numerology, report)


def with_threshold(
    config: ReceiverConfig, threshold: Threshold, n_rep: int, bin_noise_var: float
) -> ReceiverConfig:
    """Receiver config carrying the absolute threshold for a given noise level."""
    if not threshold.matches(n_rep, config.l_cp, config.n_rx, config.mode):
        raise CalibrationError("threshold was calibrated for a different receiver configuration")
    return replace(config, threshold=threshold.absolute(bin_noise_var))

