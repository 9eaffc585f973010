"""Monte Carlo campaigns: missed detection, false alarm and estimation-error CDFs.

A campaign fixes one beam (MD-RTD, payload), a repetition count and a set of
SNR points. Every trial draws, for each active UE, a delay uniform on
``[0, MD-RTD]`` (quantised to ``1 / (delay_oversample * fs)``), the Doppler
rate found at that differential delay in the footprint and a residual CFO
uniform on ``[-f_off_max, f_off_max]``. The UEs start on adjacent
subcarriers; the middle one is the preamble under test.

Trials are grouped in chunks seeded by ``(master_seed, snr_index, chunk)``
so results do not depend on the number of workers.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .channel import (
    ChannelParams,
    NoiseModel,
    add_noise,
    bin_noise,
    impaired_stream,
    noise_variance,
    superpose,
    symbol_domain_rx,
)
from .geometry import (
    PAYLOAD_SETS,
    SET_2,
    GeometryReport,
    OrbitConfig,
    PayloadSet,
    elevation_for_md_rtd,
    geometry_report,
)
from .receiver import (
    CalibrationError,
    ReceiverConfig,
    calibrate_threshold,
    choose_l_cp,
    Threshold,
    compensate_toa,
    demodulate,
    detect,
    differential,
    estimate_doppler_rate,
    estimate_toa,
    noise_only_peaks,
    resolve_batch,
    sg_sum,
    toa_metric,
)
from .waveform import (
    FORMATS,
    HoppingPattern,
    PreambleConfig,
    build_numerology,
    hopping_from_anchors,
)

OUTCOMES = ("correct", "wrong_preamble", "missed", "bad_toa")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Campaign:
    geometry: GeometryReport
    receiver: ReceiverConfig
    snr_points: tuple = ()
    trials_per_point: int = 20_000
    n_rep: int = 64
    n_active_ue: int = 1
    master_seed: int = 0
    f_off_max: float = 600.0
    fs: float = 1.92e6
    chunk_size: int = 250
    engine: str = "symbol"
    delay_oversample: int = 1

    def __post_init__(self):
        if self.n_active_ue < 1 or self.n_active_ue > 3:
            raise ConfigError("n_active_ue must be 1, 2 or 3")
        if self.trials_per_point < 1:
            raise ConfigError("trials_per_point must be positive")
        if self.engine not in ("symbol", "time"):
            raise ConfigError("engine must be 'symbol' or 'time'")
        if self.delay_oversample < 1:
            raise ConfigError("delay_oversample must be a positive integer")
        PreambleConfig(self.receiver.format, self.n_rep)  # validates n_rep

    @property
    def md_rtd(self) -> float:
        return self.geometry.md_rtd


def beam_report(
    payload: PayloadSet = SET_2,
    elevation: float | None = None,
    md_rtd: float | None = None,
    orbit: OrbitConfig | None = None,
) -> GeometryReport:
    """Geometry of a beam given by its minimum elevation or by its MD-RTD."""
    orbit = orbit or OrbitConfig()
    if (elevation is None) == (md_rtd is None):
        raise ConfigError("give exactly one of elevation or md_rtd")
    if elevation is None:
        elevation = elevation_for_md_rtd(orbit, payload, md_rtd)
    return geometry_report(orbit, payload, elevation)


def make_campaign(
    n_rep: int,
    snr_points,
    payload: PayloadSet = SET_2,
    elevation: float | None = None,
    md_rtd: float | None = None,
    n_rx: int = 2,
    orbit: OrbitConfig | None = None,
    receiver: dict | None = None,
    **kw,
) -> Campaign:
    """Campaign over one beam with a receiver matched to it.

    The CP extension is the smallest one covering the beam MD-RTD and the
    Doppler search spans the rates found inside the footprint.
    """
    geo = beam_report(payload, elevation, md_rtd, orbit)
    rkw = dict(
        l_cp=choose_l_cp(geo.md_rtd, FORMATS[1]),
        alpha_min_sc=geo.alpha_min_sc,
        alpha_max_sc=geo.alpha_max_sc,
        n_rx=n_rx,
    )
    rkw.update(receiver or {})
    return Campaign(geometry=geo, receiver=ReceiverConfig(**rkw), snr_points=tuple(snr_points), n_rep=n_rep, **kw)


@dataclass
class TrialRecord:
    seed: tuple
    D: np.ndarray
    f_off: np.ndarray
    alpha: np.ndarray
    detected: bool
    toa_resolved: float
    alpha_hat: float
    outcome: str


@dataclass
class PointResult:
    snr_db: float
    trials: int
    counts: dict
    toa_err: np.ndarray = field(repr=False)
    alpha_err: np.ndarray = field(repr=False)

    @property
    def missed(self) -> int:
        """Trials without a correct detection (missed, bad ToA or wrong preamble)."""
        return self.trials - self.counts["correct"]

    @property
    def rate(self) -> float:
        return self.missed / self.trials

    def ci(self, conf: float = 0.95) -> tuple[float, float]:
        return clopper_pearson(self.missed, self.trials, conf)


@dataclass
class CampaignResults:
    campaign: Campaign
    points: list
    false_alarm: float | None = None
    false_alarm_trials: int = 0

    def point(self, snr_db: float) -> PointResult:
        for p in self.points:
            if p.snr_db == snr_db:
                return p
        raise KeyError(snr_db)


def clopper_pearson(k: int, n: int, conf: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval for ``k`` successes in ``n`` trials."""
    a = 1 - conf
    lo = 0.0 if k == 0 else stats.beta.ppf(a / 2, k, n - k + 1)
    hi = 1.0 if k == n else stats.beta.ppf(1 - a / 2, k + 1, n - k)
    return float(lo), float(hi)


def classify_trial(truth_D: float, result, toa_pass_bound: float = 3.646e-6, preamble_ok: bool = True) -> str:
    """Outcome of one trial given the true delay and a detection result.

    ``result`` needs ``detected`` and ``toa_resolved`` attributes.
    """
    if not result.detected:
        return "missed"
    if not preamble_ok:
        return "wrong_preamble"
    if not abs(result.toa_resolved - truth_D) <= toa_pass_bound:
        return "bad_toa"
    return "correct"


def _classify_batch(detected, toa, D, bound):
    out = np.full(detected.shape, OUTCOMES.index("correct"))
    out[~(np.abs(toa - D) <= bound)] = OUTCOMES.index("bad_toa")
    out[~detected] = OUTCOMES.index("missed")
    return out


def _draw(rng, camp: Campaign, b: int):
    """Per-trial impairments and hopping for ``b`` trials."""
    fmt = camp.receiver.format
    U = camp.n_active_ue
    s0 = rng.integers(0, fmt.n_subcarriers - U + 1, size=b)
    starts = s0[:, None] + np.arange(U)
    # same cell: every UE shares the unit re-anchoring offsets
    offsets = rng.integers(1, fmt.group_size, size=(b, 1, camp.n_rep - 1))
    n_sc = hopping_from_anchors(fmt, starts, np.broadcast_to(offsets, (b, U, camp.n_rep - 1)))
    q = camp.delay_oversample
    d = np.rint(rng.uniform(0.0, camp.md_rtd, size=(b, U)) * camp.fs * q) / q  # samples
    D = d / camp.fs
    alpha = camp.geometry.rate_at_drtd(D)
    f_off = rng.uniform(-camp.f_off_max, camp.f_off_max, size=(b, U))
    return n_sc, d, D, alpha, f_off


def _target(U: int) -> int:
    return U // 2


def _symbols_time(camp: Campaign, nm, n_sc, d, f_off, alpha, snr_db, rng):
    """Time-domain route: synthesise, impair, add noise and demodulate."""
    b, U, M = n_sc.shape
    fmt = camp.receiver.format
    tgt = _target(U)
    Y = []
    for i in range(b):
        streams = []
        for u in range(U):
            hop = HoppingPattern(n_sc[i, u], fmt.P)
            pre = PreambleConfig(fmt, camp.n_rep, int(n_sc[i, u, 0]))
            ch = ChannelParams(D=d[i, u] / nm.fs, f_off=f_off[i, u], alpha=alpha[i, u])
            streams.append(impaired_stream(pre, hop, ch, nm, camp.delay_oversample))
        seed = int(rng.integers(2**63))
        rx = add_noise(superpose(streams), NoiseModel(snr_db, seed), nm, camp.receiver.n_rx)
        Y.append(demodulate(rx, camp.receiver, nm, n_sc[i, tgt]))
    return np.stack(Y)


def _run_chunk(args):
    camp, thr, snr_idx, chunk_idx, b = args
    snr_db = camp.snr_points[snr_idx]
    rng = np.random.default_rng(np.random.SeedSequence([camp.master_seed, snr_idx, chunk_idx]))
    rc = camp.receiver
    nm = build_numerology(rc.format, camp.fs)
    n_sc, d, D, alpha, f_off = _draw(rng, camp, b)
    tgt = _target(camp.n_active_ue)
    if camp.engine == "symbol":
        Y = symbol_domain_rx(nm, rc.l_cp, n_sc[:, tgt], n_sc, d, f_off, alpha)
        Y = Y[:, None] + bin_noise(rng, (b, rc.n_rx) + Y.shape[1:], snr_db, nm.N)
    else:
        Y = _symbols_time(camp, nm, n_sc, d, f_off, alpha, snr_db, rng)
    bin_var = nm.N * noise_variance(snr_db, nm.N) if np.isfinite(snr_db) else 0.0
    deltas = np.diff(n_sc[:, tgt], axis=-1)
    Z = differential(sg_sum(Y))
    X = toa_metric(Z, deltas, rc)
    detected, k_max, _ = detect(X, thr.absolute(bin_var))
    d_hat = estimate_toa(k_max, rc)
    est = estimate_doppler_rate(compensate_toa(Z, deltas, d_hat, rc), rc, nm)
    toa = resolve_batch(d_hat, est.alpha_hat, camp.geometry, rc, margin=2 * rc.toa_pass_bound)
    truth_D, truth_a = D[:, tgt], alpha[:, tgt]
    outcome = _classify_batch(detected, toa, truth_D, rc.toa_pass_bound)
    ok = outcome == OUTCOMES.index("correct")
    return (
        snr_idx,
        np.bincount(outcome, minlength=len(OUTCOMES)),
        np.abs(toa - truth_D)[ok],
        np.abs(est.alpha_hat - truth_a)[ok],
    )


def _workers(threads: int | None) -> int:
    env = os.environ.get("NPRACH_THREADS")
    if env:
        return max(1, int(env))
    return max(1, threads or 1)


def run_campaign(campaign: Campaign, threshold: Threshold | None, threads: int | None = None) -> CampaignResults:
    """Run every SNR point of ``campaign``; refuses without a matching threshold."""
    rc = campaign.receiver
    if threshold is None:
        raise CalibrationError("run_campaign needs a calibrated threshold")
    if not threshold.matches(campaign.n_rep, rc.l_cp, rc.n_rx, rc.mode):
        raise CalibrationError(
            f"threshold calibrated for (n_rep, l_cp, n_rx, mode) = "
            f"{(threshold.n_rep, threshold.l_cp, threshold.n_rx, threshold.mode)}, campaign needs "
            f"{(campaign.n_rep, rc.l_cp, rc.n_rx, rc.mode)}"
        )
    jobs = []
    for s in range(len(campaign.snr_points)):
        for c, start in enumerate(range(0, campaign.trials_per_point, campaign.chunk_size)):
            jobs.append((campaign, threshold, s, c, min(campaign.chunk_size, campaign.trials_per_point - start)))
    n = _workers(threads)
    if n == 1:
        parts = [_run_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as ex:
            parts = list(ex.map(_run_chunk, jobs))
    points = []
    for s, snr in enumerate(campaign.snr_points):
        mine = [p for p in parts if p[0] == s]  # chunk order is preserved
        counts = np.sum([p[1] for p in mine], axis=0)
        points.append(
            PointResult(
                snr_db=snr,
                trials=campaign.trials_per_point,
                counts={k: int(v) for k, v in zip(OUTCOMES, counts)},
                toa_err=np.sort(np.concatenate([p[2] for p in mine])),
                alpha_err=np.sort(np.concatenate([p[3] for p in mine])),
            )
        )
    return CampaignResults(campaign, points)


def measure_false_alarm(
    config: ReceiverConfig, n_rep: int, trials: int, threshold: Threshold | float, seed=1
) -> float:
    """Fraction of noise-only trials whose metric peak reaches the threshold.

    A :class:`Threshold` is applied at unit bin-noise variance; a float is
    taken as an absolute threshold at that same noise level.
    """
    thr = threshold.normalized if isinstance(threshold, Threshold) else float(threshold)
    peaks = noise_only_peaks(np.random.default_rng(seed), config, n_rep, trials)
    return float(np.mean(peaks >= thr))


def extract_cdf(samples, percentiles) -> list[tuple[float, float]]:
    s = np.asarray(samples, dtype=float)
    if s.size == 0:
        raise ValueError("no samples to build a CDF from")
    pct = np.asarray(percentiles, dtype=float)
    return list(zip(pct.tolist(), np.percentile(s, pct).tolist()))


# ---------------------------------------------------------------- outputs


def write_detection_csv(path, results_list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["snr_db", "n_rep", "md_rtd_us", "n_ue", "trials", "missed", "rate", "ci_lo", "ci_hi"])
        for res in results_list:
            c = res.campaign
            for p in res.points:
                lo, hi = p.ci()
                w.writerow([p.snr_db, c.n_rep, round(c.md_rtd * 1e6, 3), c.n_active_ue, p.trials, p.missed, p.rate, lo, hi])


def write_cdf_csv(path, table) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["percentile", "value"])
        w.writerows(table)


def write_false_alarm_csv(path, rows) -> None:
    """``rows``: iterables of (n_rep, l_cp, n_rx, trials, false_alarms, rate, threshold)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["n_rep", "l_cp", "n_rx", "trials", "false_alarms", "rate", "threshold"])
        w.writerows(rows)


def save_threshold(path, thr: Threshold) -> None:
    Path(path).write_text(json.dumps(asdict(thr), indent=2) + "\n", encoding="utf-8")


def load_threshold(path) -> Threshold:
    return Threshold(**json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------- config files

CONFIG_SCHEMA = {
    "scenario": {
        "format": 1,
        "n_rep": 64,
        "n_active_ue": 1,
        "n_rx": 2,
        "f_off_max": 600.0,
        "fs": 1.92e6,
        "start_subcarrier": 0,
        "hopping_seed": 0,
        "delay_oversample": 1,
    },
    "geometry": {
        "payload": "Set-2",
        "md_rtd_us": None,
        "elevation": None,
        "altitude": 600e3,
        "carrier_freq": 2e9,
        "link_overrides": {},
    },
    "receiver": {
        "l_cp": None,
        "n_dft": 256,
        "n_dtft": 62,
        "mode": "ntn",
        "pfa": 1e-3,
        "calibration_trials": 100_000,
        "calibration_seed": 0,
        "threshold_file": None,
    },
    "campaign": {
        "snr_db": [],
        "trials_per_point": 20_000,
        "master_seed": 0,
        "chunk_size": 250,
        "false_alarm_trials": 100_000,
        "cdf_snr_db": None,
        "engine": "symbol",
    },
}


def load_config(source) -> dict:
    """Read a JSON config (path, JSON text or dict), fill defaults, reject unknown keys."""
    if isinstance(source, dict):
        raw = source
    else:
        p = Path(source)
        text = p.read_text(encoding="utf-8") if p.exists() else str(source)
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(CONFIG_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    cfg = {}
    for sec, defaults in CONFIG_SCHEMA.items():
        given = raw.get(sec, {})
        if not isinstance(given, dict):
            raise ConfigError(f"section {sec!r} must be an object")
        bad = set(given) - set(defaults)
        if bad:
            raise ConfigError(f"unknown key(s) in {sec!r}: {sorted(bad)}")
        cfg[sec] = {**defaults, **given}
    g = cfg["geometry"]
    if (g["md_rtd_us"] is None) == (g["elevation"] is None):
        raise ConfigError("geometry needs exactly one of md_rtd_us or elevation")
    if g["payload"] not in PAYLOAD_SETS:
        raise ConfigError(f"unknown payload {g['payload']!r}")
    return cfg


def geometry_from_config(cfg: dict) -> GeometryReport:
    g = cfg["geometry"]
    orbit = OrbitConfig(altitude=g["altitude"], carrier_freq=g["carrier_freq"])
    md = None if g["md_rtd_us"] is None else g["md_rtd_us"] * 1e-6
    return beam_report(PAYLOAD_SETS[g["payload"]], g["elevation"], md, orbit)


def receiver_from_config(cfg: dict, geo: GeometryReport) -> ReceiverConfig:
    r, s = cfg["receiver"], cfg["scenario"]
    fmt = FORMATS[s["format"]]
    l_cp = r["l_cp"] if r["l_cp"] is not None else choose_l_cp(geo.md_rtd, fmt, 1 / s["fs"])
    return ReceiverConfig(
        l_cp=l_cp,
        n_dft=r["n_dft"],
        n_dtft=r["n_dtft"],
        alpha_min_sc=geo.alpha_min_sc,
        alpha_max_sc=geo.alpha_max_sc,
        n_rx=s["n_rx"],
        mode=r["mode"],
        format_id=s["format"],
    )


def campaign_from_config(cfg: dict, master_seed: int | None = None) -> Campaign:
    geo = geometry_from_config(cfg)
    s, c = cfg["scenario"], cfg["campaign"]
    return Campaign(
        geometry=geo,
        receiver=receiver_from_config(cfg, geo),
        snr_points=tuple(float(x) for x in c["snr_db"]),
        trials_per_point=c["trials_per_point"],
        n_rep=s["n_rep"],
        n_active_ue=s["n_active_ue"],
        master_seed=c["master_seed"] if master_seed is None else master_seed,
        f_off_max=s["f_off_max"],
        fs=s["fs"],
        chunk_size=c["chunk_size"],
        engine=c["engine"],
        delay_oversample=s["delay_oversample"],
    )


def calibrate_for(campaign: Campaign, pfa: float = 1e-3, trials: int = 100_000, seed=0) -> Threshold:
    return calibrate_threshold(campaign.receiver, campaign.n_rep, pfa, trials, seed)


def with_receiver(campaign: Campaign, **kw) -> Campaign:
    return replace(campaign, receiver=replace(campaign.receiver, **kw))


def cdf_point(results: CampaignResults, snr_db: float | None = None) -> PointResult:
    if snr_db is None:
        return max(results.points, key=lambda p: p.snr_db)
    return results.point(snr_db)


PERCENTILES = tuple(range(1, 101))


def write_outputs(out_dir, results: CampaignResults, fa_rows=(), cdf_snr_db=None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_detection_csv(out / "detection.csv", [results])
    p = cdf_point(results, cdf_snr_db)
    if p.toa_err.size:
        write_cdf_csv(out / "toa_cdf.csv", extract_cdf(p.toa_err, PERCENTILES))
        write_cdf_csv(out / "doppler_cdf.csv", extract_cdf(p.alpha_err, PERCENTILES))
    else:
        write_cdf_csv(out / "toa_cdf.csv", [])
        write_cdf_csv(out / "doppler_cdf.csv", [])
    write_false_alarm_csv(out / "falsealarm.csv", fa_rows)
