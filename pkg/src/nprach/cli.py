"""``nprach`` command line: linkcalc, calibrate, sim and detect."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness as H
from .channel import noise_variance
from .geometry import PAYLOAD_SETS, OrbitConfig, doppler, geometry_report, link_budget
from .iq import read_iq
from .receiver import CalibrationError, Threshold, receive, with_threshold
from .waveform import PreambleConfig, build_numerology, generate_hopping


def _load_cfg(path):
    try:
        return H.load_config(path)
    except (OSError, H.ConfigError) as e:
        raise SystemExit(f"nprach: {e}")


def _linkcalc_rows(orbit, payload, elevation, overrides):
    inputs, cnr, snr = link_budget(orbit, payload, elevation, **overrides)
    geo = geometry_report(orbit, payload, elevation)
    shift, rate = doppler(orbit, elevation)
    return [
        ("Payload", payload.set_id),
        ("UE elevation angle [deg]", f"{elevation:g}"),
        ("Frequency [GHz]", f"{orbit.carrier_freq / 1e9:g}"),
        ("TX EIRP [dBm]", f"{inputs.eirp:.2f}"),
        ("RX G/T [dB/K]", f"{inputs.g_over_t:.2f}"),
        ("BW NB-IoT [kHz]", f"{inputs.bw_nbiot / 1e3:g}"),
        ("Free space path loss [dB]", f"{inputs.pl_fs:.2f}"),
        ("Atmospheric loss [dB]", f"{inputs.pl_a:.2f}"),
        ("Shadowing margin [dB]", f"{inputs.pl_s:.2f}"),
        ("Scintillation loss [dB]", f"{inputs.pl_ad:.2f}"),
        ("Polarization loss [dB]", f"{inputs.pl_pol:.2f}"),
        ("Additional losses [dB]", f"{inputs.pl_other:.2f}"),
        ("CNR [dB]", f"{cnr:.2f}"),
        ("BW NPRACH [kHz]", f"{inputs.bw_nprach / 1e3:g}"),
        ("Additional margin [dB]", f"{-inputs.margin:g}"),
        ("SNR [dB]", f"{snr:.2f}"),
        ("Slant range [km]", f"{geo.slant_range / 1e3:.1f}"),
        ("RTD [ms]", f"{geo.rtd * 1e3:.3f}"),
        ("Doppler shift [kHz]", f"{shift / 1e3:.2f}"),
        ("Doppler rate [Hz/s]", f"{rate:.1f}"),
        ("Beam diameter [km]", f"{geo.beam_diameter / 1e3:.2f}"),
        ("MD-RTD [us]", f"{geo.md_rtd * 1e6:.2f}"),
    ]


def cmd_linkcalc(args) -> int:
    overrides = {}
    if args.config:
        cfg = _load_cfg(args.config)
        g = cfg["geometry"]
        if g["elevation"] is None:
            raise SystemExit("nprach: linkcalc needs geometry.elevation in the config")
        orbit = OrbitConfig(altitude=g["altitude"], carrier_freq=g["carrier_freq"])
        cases = [(PAYLOAD_SETS[g["payload"]], g["elevation"])]
        overrides.update(g["link_overrides"])
    else:
        orbit = OrbitConfig()
        payloads = [PAYLOAD_SETS[args.payload]] if args.payload else list(PAYLOAD_SETS.values())
        elevations = [args.elevation] if args.elevation else [30.0, 90.0]
        cases = [(p, e) for p in payloads for e in elevations]
    if args.fspl is not None:
        overrides["pl_fs"] = args.fspl
    columns = [_linkcalc_rows(orbit, p, e, overrides) for p, e in cases]
    width = max(len(name) for name, _ in columns[0])
    for i, (name, _) in enumerate(columns[0]):
        print(f"{name:<{width}}  " + "  ".join(f"{col[i][1]:>10}" for col in columns))
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load_cfg(args.config)
    camp = H.campaign_from_config(cfg)
    r = cfg["receiver"]
    trials = args.trials or r["calibration_trials"]
    seed = r["calibration_seed"] if args.seed is None else args.seed
    try:
        thr = H.calibrate_for(camp, r["pfa"], trials, seed)
    except CalibrationError as e:
        raise SystemExit(f"nprach: {e}")
    H.save_threshold(args.out, thr)
    print(json.dumps({"threshold": thr.normalized, "n_rep": thr.n_rep, "l_cp": thr.l_cp, "n_rx": thr.n_rx}))
    return 0


def _threshold_for(args, cfg, camp) -> Threshold:
    path = args.threshold or cfg["receiver"]["threshold_file"]
    if path:
        return H.load_threshold(path)
    if getattr(args, "calibrate", False):
        r = cfg["receiver"]
        return H.calibrate_for(camp, r["pfa"], r["calibration_trials"], r["calibration_seed"])
    raise SystemExit("nprach: no threshold; pass --threshold FILE, set receiver.threshold_file or use --calibrate")


def cmd_sim(args) -> int:
    cfg = _load_cfg(args.config)
    camp = H.campaign_from_config(cfg, master_seed=args.seed)
    if not camp.snr_points:
        raise SystemExit("nprach: campaign.snr_db is empty")
    thr = _threshold_for(args, cfg, camp)
    try:
        res = H.run_campaign(camp, thr, threads=args.threads)
    except CalibrationError as e:
        raise SystemExit(f"nprach: {e}")
    fa_rows = []
    n_fa = cfg["campaign"]["false_alarm_trials"]
    if n_fa:
        rate = H.measure_false_alarm(camp.receiver, camp.n_rep, n_fa, thr, seed=camp.master_seed + 1)
        rc = camp.receiver
        fa_rows.append((camp.n_rep, rc.l_cp, rc.n_rx, n_fa, int(round(rate * n_fa)), rate, thr.normalized))
    H.write_outputs(args.out, res, fa_rows, cfg["campaign"]["cdf_snr_db"])
    for p in res.points:
        lo, hi = p.ci()
        print(f"snr {p.snr_db:6.2f} dB  missed {p.missed}/{p.trials} = {p.rate:.4f}  [{lo:.4f}, {hi:.4f}]")
    return 0


def cmd_detect(args) -> int:
    cfg = _load_cfg(args.config)
    geo = H.geometry_from_config(cfg)
    rc = H.receiver_from_config(cfg, geo)
    s = cfg["scenario"]
    nm = build_numerology(rc.format, s["fs"])
    pre = PreambleConfig(rc.format, s["n_rep"], s["start_subcarrier"], s["hopping_seed"])
    hop = generate_hopping(pre)
    rx = [read_iq(p) for p in args.iqfile]
    n = min(len(x) for x in rx)
    rx = np.stack([x[:n] for x in rx])
    rc = rc.with_(n_rx=rx.shape[0])
    thr = _threshold_for(args, cfg, None)
    if args.noise_var is not None:
        sample_var = args.noise_var
    elif args.snr is not None:
        sample_var = noise_variance(args.snr, nm.N)
    else:
        raise SystemExit("nprach: give the noise level with --noise-var or --snr")
    try:
        rc = with_threshold(rc, thr, pre.n_rep, nm.N * sample_var)
        res = receive(rx, hop, rc, nm, geo)
    except (CalibrationError, ValueError) as e:
        raise SystemExit(f"nprach: {e}")
    print(res.to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nprach", description="NB-IoT NPRACH detection over LEO satellite links")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("linkcalc", help="print a link budget and beam geometry report")
    p.add_argument("--config")
    p.add_argument("--payload", choices=sorted(PAYLOAD_SETS))
    p.add_argument("--elevation", type=float)
    p.add_argument("--fspl", type=float, help="override the free space path loss [dB]")
    p.set_defaults(func=cmd_linkcalc)

    p = sub.add_parser("calibrate", help="calibrate the detection threshold on noise only")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="threshold JSON file to write")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sim", help="run a Monte Carlo campaign")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory for the CSV tables")
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threshold", help="threshold JSON from 'nprach calibrate'")
    p.add_argument("--calibrate", action="store_true", help="calibrate before running if no threshold is given")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("detect", help="run the receiver on I/Q captures, one file per antenna")
    p.add_argument("iqfile", nargs="+")
    p.add_argument("--config", required=True)
    p.add_argument("--threshold")
    p.add_argument("--noise-var", type=float, help="per-sample complex noise variance")
    p.add_argument("--snr", type=float, help="per-tone SNR [dB] the capture was made at")
    p.set_defaults(func=cmd_detect)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
